#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "kgmlsm/dataset.hpp"
#include "kgmlsm/parallel.hpp"

namespace kgmlsm::filter {

struct FitDiagnostics {
    std::size_t rows = 0;
    double condition_number = 0.0;
    bool ridge_applied = false;
    std::array<double, kSmChannels> residual_mse{};
};

/// Per-timestep linear map (1, Radn, Tmax, Tmin, PPT) -> (surface, rootzone).
///
/// Scores are computed on residuals divided by `target_scale`, per channel.
/// fit_sm_regressor sets it to the pooled county SM standard deviation so the
/// screening threshold is unit-free; a scale of 1 scores raw fractions.
struct LinearSMModel {
    Tensor weights{{kWeatherChannels + 1, kSmChannels}};
    std::array<double, kSmChannels> target_scale{1.0, 1.0};
    FitDiagnostics diagnostics;

    Tensor predict(const Tensor& weather) const;
};

/// Fits on pooled (sample, timestep) rows of a county dataset.
LinearSMModel fit_sm_regressor(std::span<const Sample> county, bool standardize = true);

/// Generic least squares on design rows (no intercept is added). Falls back
/// to a 1e-8 ridge when cond(XᵀX) > 1e10.
struct LeastSquares {
    std::vector<double> coef;  // features x targets, row-major
    double condition_number = 0.0;
    bool ridge_applied = false;
};
LeastSquares solve_least_squares(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y);

double score_sample(const LinearSMModel& model, const Sample& sample);

struct ScreenResult {
    std::vector<Sample> kept;
    std::vector<Sample> discarded;
    std::vector<double> mse;  // aligned with the input order
};

/// Keeps a sample iff its mse <= threshold.
ScreenResult screen_by_score(std::span<const Sample> samples, std::span<const double> mse, double threshold = 0.5);
ScreenResult screen_field_samples(std::span<const Sample> samples, const LinearSMModel& model, double threshold = 0.5,
                                  Exec exec = Exec::parallel);

/// id, year, mse, kept
void write_filter_report(const std::filesystem::path& path, std::span<const Sample> samples,
                         std::span<const double> mse, double threshold);

}  // namespace kgmlsm::filter
