#include "kgmlsm/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kgmlsm::loss {

void LossConfig::validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("loss.lambda must be >= 0");
    if (!(epsilon > 0.0)) throw std::invalid_argument("loss.epsilon must be > 0");
}

double drought_weight(double sbar, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
    return 1.0 / (sbar + epsilon);
}

double sm_loss(std::span<const double> s, std::span<const double> s_hat) {
    if (s.size() != s_hat.size()) throw ShapeError("sm_loss: size mismatch");
    if (s.empty()) throw ShapeError("sm_loss: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) total += (s_hat[i] - s[i]) * (s_hat[i] - s[i]);
    return total / static_cast<double>(s.size());
}

double weighted_yield_loss(std::span<const double> y, std::span<const double> y_hat, std::span<const double> weight,
                           double lambda) {
    if (y.size() != y_hat.size() || y.size() != weight.size()) throw ShapeError("yield_loss: length mismatch");
    if (y.empty()) throw ShapeError("yield_loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y_hat[i] - y[i];
        const double over = std::max(0.0, e);
        total += weight[i] * (e * e + lambda * over * over);
    }
    return total / static_cast<double>(y.size());
}

double yield_loss(std::span<const double> y, std::span<const double> y_hat, std::span<const double> sbar,
                  const LossConfig& config) {
    config.validate();
    std::vector<double> d(sbar.size());
    std::ranges::transform(sbar, d.begin(), [&](double s) { return drought_weight(s, config.epsilon); });
    return weighted_yield_loss(y, y_hat, d, config.lambda);
}

double total_loss(double sm_term, double yield_term) {
    if (!std::isfinite(sm_term) || !std::isfinite(yield_term)) throw NumericError("total_loss: non-finite component");
    return sm_term + yield_term;
}

NodeId sm_loss_node(Graph& g, NodeId s, NodeId s_hat) { return g.mean(g.square(g.sub(s_hat, s))); }

NodeId yield_loss_node(Graph& g, NodeId y, NodeId y_hat, NodeId weight, double lambda) {
    const NodeId e = g.sub(y_hat, y);
    NodeId inner = g.square(e);
    if (lambda != 0.0) inner = g.add(inner, g.scale(g.square(g.relu(e)), lambda));
    return g.mul(weight, inner);
}

}  // namespace kgmlsm::loss
