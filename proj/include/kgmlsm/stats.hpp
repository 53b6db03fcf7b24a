#pragma once

#include <cstddef>
#include <span>

namespace kgmlsm {

double mean(std::span<const double> v);

/// Quantile with linear interpolation between order statistics,
/// position (n - 1) * q over the sorted values.
double quantile_linear(std::span<const double> v, double q);

double pearson(std::span<const double> x, std::span<const double> y);

struct BoxStats {
    std::size_t n = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double lower_fence = 0.0;
    double upper_fence = 0.0;
    double whisker_low = 0.0;
    double whisker_high = 0.0;
    std::size_t outliers = 0;
};

/// Box-plot summary with 1.5 * IQR Tukey fences. Throws on empty input.
BoxStats box_stats(std::span<const double> v);

}  // namespace kgmlsm
