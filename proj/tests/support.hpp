#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kgmlsm/dataset.hpp"
#include "kgmlsm/graph.hpp"

namespace kgmlsm::testing {

/// Plausible county sample with independent random inputs.
Sample random_sample(std::mt19937_64& rng, int year, std::string id);
std::vector<Sample> random_samples(std::size_t n, std::uint64_t seed, int first_year = 2015, int last_year = 2022);

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    std::size_t kinks = 0;  // entries skipped because a ReLU switched inside [-h, h]
};

/// Compares `analytic` against central differences of `loss` (which must read
/// the current values of `params`) for every parameter entry. The relative
/// error denominator is floored at floor_scale * max(1, |loss|): central
/// differences carry roundoff of order eps * |loss| / h, which swamps
/// gradients much smaller than that. Entries whose one-sided differences
/// disagree (a ReLU changed state within the step) are counted as kinks
/// instead of compared.
GradCheck check_gradients(ParamStore& params, std::span<const double> analytic, const std::function<double()>& loss,
                          double h = 1e-5, double floor_scale = 1e-5);

/// Full-model gradient check (W2S + attention + drought-weighted loss with
/// the overestimation term) at a random initialization. One sample is
/// arranged to overestimate and one to underestimate.
GradCheck full_model_gradcheck(std::uint64_t seed);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::string slurp(const std::filesystem::path& path);

}  // namespace kgmlsm::testing
