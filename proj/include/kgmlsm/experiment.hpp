#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgmlsm/eval.hpp"
#include "kgmlsm/loss.hpp"
#include "kgmlsm/model.hpp"
#include "kgmlsm/train.hpp"

/// Multi-seed pretrain -> finetune -> evaluate runs.
namespace kgmlsm::experiment {

struct Config {
    std::string variant = "kgml_sm";
    loss::LossConfig loss;
    train::StageConfig pretrain = train::pretrain_defaults();
    train::StageConfig finetune = train::finetune_defaults();
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    int target_year = 2023;
    double train_fraction = 0.8;
    std::vector<eval::BaselineKind> baselines;
    eval::BaselineOptions baseline_options;
};

struct SeedRun {
    std::uint64_t seed = 0;
    std::optional<model::Checkpoint> pretrained;
    model::Checkpoint finetuned;
    std::vector<double> predictions;
    std::vector<Tensor> sm_hat;  // empty tensors without W2S
    eval::MetricsReport metrics;
    std::map<std::string, eval::MetricsReport> baselines;
};

struct Result {
    std::string variant;
    double lambda = 0.0;
    std::size_t tokens = 0;
    int target_year = 0;
    std::vector<Sample> test;
    std::vector<SeedRun> runs;
};

/// Predictions and metrics of a finetuned checkpoint on the test samples.
SeedRun evaluate_checkpoint(const model::Checkpoint& ckpt, std::span<const Sample> test, Exec exec = Exec::parallel);

/// Baseline metrics for one seed, keyed by baseline name.
std::map<std::string, eval::MetricsReport> run_baselines(const train::Split& split, const Config& cfg,
                                                         std::uint64_t seed, Exec exec);

/// For every seed: split, pretrain on `field` (variants with pretraining),
/// finetune on the county split, evaluate on the target year.
Result run_experiment(std::span<const Sample> field, std::span<const Sample> county, const Config& cfg,
                      const train::TrainContext& ctx = {});

/// Mean and per-seed metrics. Contains no paths or timings.
nlohmann::ordered_json metrics_json(const Result& r);

/// Median over seeds of a per-seed statistic.
double median_over_seeds(const Result& r, double (*stat)(const SeedRun&));

}  // namespace kgmlsm::experiment
