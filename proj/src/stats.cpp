#include "kgmlsm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace kgmlsm {

double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean of an empty range");
    double total = 0.0;
    for (double x : v) total += x;
    return total / static_cast<double>(v.size());
}

static double sorted_quantile(const std::vector<double>& s, double q) {
    const double pos = (static_cast<double>(s.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return s[lo] + frac * (s[hi] - s[lo]);
}

double quantile_linear(std::span<const double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile of an empty range");
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile must lie in [0, 1]");
    std::vector<double> s(v.begin(), v.end());
    std::ranges::sort(s);
    return sorted_quantile(s, q);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: need two equal ranges, n >= 2");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

BoxStats box_stats(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("box statistics of an empty class");
    std::vector<double> s(v.begin(), v.end());
    std::ranges::sort(s);
    BoxStats b;
    b.n = s.size();
    b.median = sorted_quantile(s, 0.5);
    b.q1 = sorted_quantile(s, 0.25);
    b.q3 = sorted_quantile(s, 0.75);
    b.iqr = b.q3 - b.q1;
    b.lower_fence = b.q1 - 1.5 * b.iqr;
    b.upper_fence = b.q3 + 1.5 * b.iqr;
    b.whisker_low = std::numeric_limits<double>::infinity();
    b.whisker_high = -std::numeric_limits<double>::infinity();
    for (double x : s) {
        if (x < b.lower_fence || x > b.upper_fence) {
            ++b.outliers;
        } else {
            b.whisker_low = std::min(b.whisker_low, x);
            b.whisker_high = std::max(b.whisker_high, x);
        }
    }
    return b;
}

}  // namespace kgmlsm
