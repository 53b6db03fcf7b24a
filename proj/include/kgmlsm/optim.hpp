#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "kgmlsm/graph.hpp"

namespace kgmlsm {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;

    AdamState() = default;
    AdamState(const ParamStore& params, AdamConfig cfg);
};

/// One bias-corrected Adam update, applied in place.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state);

/// Multiplies the learning rate by `factor` once the monitored value has
/// failed to strictly improve for `patience` consecutive steps.
struct PlateauScheduler {
    double lr = 1e-3;
    int patience = 5;
    double factor = 0.5;
    double min_lr = 1e-6;
    double best = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;

    double step(double monitored);
};

}  // namespace kgmlsm
