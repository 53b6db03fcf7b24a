#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>

#include "kgmlsm/config.hpp"

/// Subcommand implementations. Every stage reads its inputs from and writes
/// its outputs to the run directory described by the config.
namespace kgmlsm::pipeline {

/// A prerequisite file is missing; the message names the producing subcommand.
class MissingArtifact : public std::runtime_error {
public:
    MissingArtifact(const std::filesystem::path& path, const std::string& producer);
    const std::string& producer() const { return producer_; }

private:
    std::string producer_;
};

struct Layout {
    std::filesystem::path run, data;

    std::filesystem::path raw_dir() const { return data / "raw"; }
    std::filesystem::path field_dir() const { return data / "field"; }
    std::filesystem::path county_dir() const { return data / "county"; }
    std::filesystem::path filtered_dir() const { return data / "field_filtered"; }
    std::filesystem::path filter_report() const { return run / "filter_report.csv"; }
    std::filesystem::path checkpoint(const std::string& variant, const char* stage, std::uint64_t seed) const;
    std::filesystem::path epochs(const std::string& variant, const char* stage, std::uint64_t seed) const;
    std::filesystem::path metrics() const { return run / "metrics.json"; }
    std::filesystem::path attention_dir() const { return run / "attention"; }
    std::filesystem::path ablation_dir() const { return run / "ablation"; }
};

Layout layout(const RunConfig& cfg);

using Log = std::function<void(const std::string&)>;

void simulate(const RunConfig& cfg, const Log& log);
void ingest(const RunConfig& cfg, const Log& log);
void filter(const RunConfig& cfg, const Log& log);
void pretrain(const RunConfig& cfg, const Log& log);
void finetune(const RunConfig& cfg, const Log& log);
void evaluate(const RunConfig& cfg, const Log& log);
void ablate(const RunConfig& cfg, const Log& log);
void attn_report(const RunConfig& cfg, const Log& log);
void all(const RunConfig& cfg, const Log& log);

/// Dispatches by subcommand name; writes the config snapshot first.
void run(const std::string& subcommand, const RunConfig& cfg, const Log& log);

}  // namespace kgmlsm::pipeline
