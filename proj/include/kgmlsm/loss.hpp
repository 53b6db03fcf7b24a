#pragma once

#include <span>

#include "kgmlsm/graph.hpp"

namespace kgmlsm::loss {

struct LossConfig {
    double lambda = 2.0;   // overestimation penalty, >= 0
    double epsilon = 1.0;  // drought weight offset, > 0

    void validate() const;
};

/// 1 / (sbar + epsilon)
double drought_weight(double sbar, double epsilon);

/// Mean squared difference over all entries.
double sm_loss(std::span<const double> s, std::span<const double> s_hat);

/// (1/N) sum_i d_i [(y_i - yhat_i)^2 + lambda max(0, yhat_i - y_i)^2], d_i from sbar_i.
double yield_loss(std::span<const double> y, std::span<const double> y_hat, std::span<const double> sbar,
                  const LossConfig& config);

/// Same with explicit per-sample weights.
double weighted_yield_loss(std::span<const double> y, std::span<const double> y_hat, std::span<const double> weight,
                           double lambda);

double total_loss(double sm_term, double yield_term);

// Graph builders (single sample; the caller scales by 1/N).
NodeId sm_loss_node(Graph& g, NodeId s, NodeId s_hat);
NodeId yield_loss_node(Graph& g, NodeId y, NodeId y_hat, NodeId weight, double lambda);

}  // namespace kgmlsm::loss
