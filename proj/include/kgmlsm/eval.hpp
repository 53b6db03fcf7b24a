#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kgmlsm/dataset.hpp"
#include "kgmlsm/train.hpp"

namespace kgmlsm::eval {

double rmse(std::span<const double> y, std::span<const double> y_hat);
/// 1 - SSE/SST; throws when the actuals have zero variance.
double r2(std::span<const double> y, std::span<const double> y_hat);

struct MetricsReport {
    double rmse = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
    double mean_signed_error = 0.0;
    double drought_mean_signed_error = 0.0;  // NaN without drought samples
    double nondrought_mean_signed_error = 0.0;
    std::vector<double> signed_errors;  // y_hat - y
};

MetricsReport metrics(std::span<const Sample> samples, std::span<const double> y_hat);

// ---------------------------------------------------------------------------
// Baselines

enum class BaselineKind { lr, ridge, mlp };
const char* to_string(BaselineKind k);
BaselineKind baseline_from_string(const std::string& s);

/// All token values of the standard schema (weather | aux | VIs | SM), raw.
std::vector<double> flatten_features(const Sample& s);

/// Closed-form linear model on standardized features (training statistics).
/// alpha = 0 is ordinary least squares and throws on a singular system;
/// the intercept is never penalized.
struct LinearModel {
    std::vector<double> mean;
    std::vector<double> scale;
    std::vector<double> coef;  // in standardized feature units
    double intercept = 0.0;

    double predict(std::span<const double> x) const;
};

LinearModel fit_linear(const std::vector<std::vector<double>>& x, std::span<const double> y, double alpha);

struct BaselineOptions {
    double ridge_alpha = 1.0;
    std::size_t mlp_hidden = 64;
    train::StageConfig mlp_stage = train::finetune_defaults();
    Exec exec = Exec::parallel;
};

std::vector<double> baseline_fit_predict(BaselineKind kind, std::span<const Sample> train, std::span<const Sample> val,
                                         std::span<const Sample> test, std::uint64_t seed,
                                         const BaselineOptions& opts = {});

// ---------------------------------------------------------------------------
// Error reports

struct ErrorRow {
    std::string id;
    int year = 0;
    bool drought = false;
    double y = 0.0;
    double y_hat = 0.0;
    double signed_error = 0.0;
    double abs_error = 0.0;
};

struct GroupErrors {
    std::size_t n = 0;
    double mean_signed = 0.0;  // NaN for empty groups
    double mean_abs = 0.0;
};

struct ErrorReport {
    std::vector<ErrorRow> rows;
    GroupErrors all, drought, nondrought;
};

ErrorReport error_report(std::span<const Sample> samples, std::span<const double> y_hat);
void write_errors_csv(const std::filesystem::path& path, const ErrorReport& report);

/// Paired yield / soil-moisture absolute errors per sample.
struct SmErrorRow {
    std::string id;
    int year = 0;
    bool drought = false;
    double yield_abs_error = 0.0;
    double sm_abs_error = 0.0;  // mean |s_hat - s| over timesteps and layers
};

std::vector<SmErrorRow> paired_errors(std::span<const Sample> samples, std::span<const double> y_hat,
                                      std::span<const Tensor> sm_hat);
void write_sm_errors_csv(const std::filesystem::path& path, std::span<const SmErrorRow> rows);

}  // namespace kgmlsm::eval
