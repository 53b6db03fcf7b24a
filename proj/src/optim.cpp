#include "kgmlsm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kgmlsm {

AdamState::AdamState(const ParamStore& params, AdamConfig cfg)
    : config(cfg), m(params.total_size(), 0.0), v(params.total_size(), 0.0) {}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
    auto theta = params.flat();
    auto g = grads.flat();
    if (g.size() != theta.size() || state.m.size() != theta.size() || state.v.size() != theta.size())
        throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
    const auto& c = state.config;
    if (!(c.lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");

    ++state.t;
    const double t = static_cast<double>(state.t);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g[i] * g[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        theta[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

double PlateauScheduler::step(double monitored) {
    if (monitored < best) {
        best = monitored;
        bad_epochs = 0;
        return lr;
    }
    if (++bad_epochs >= patience) {
        lr = std::max(min_lr, lr * factor);
        bad_epochs = 0;
    }
    return lr;
}

}  // namespace kgmlsm
