#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgmlsm/dataset.hpp"
#include "kgmlsm/graph.hpp"

namespace kgmlsm::model {

inline constexpr std::size_t kManifestChannels = 14;
inline constexpr std::size_t kPaddedSteps = 16;

/// Where the attention head's soil-moisture tokens come from.
enum class SmSource { none, observed, w2s };
const char* to_string(SmSource s);
SmSource sm_source_from_string(const std::string& s);

struct Architecture {
    SmSource sm_source = SmSource::w2s;
    std::size_t d_model = 32;
    std::size_t d_k = 32;
    std::size_t enc1 = 16;
    std::size_t enc2 = 32;

    bool has_sm_tokens() const { return sm_source != SmSource::none; }
    bool has_w2s() const { return sm_source == SmSource::w2s; }
    std::size_t token_count() const;
    std::size_t feature_width() const { return 1 + kManifestChannels + kTimesteps; }
    bool operator==(const Architecture&) const = default;
};

/// One token: a manifest channel at a timestep (-1 for auxiliary scalars).
struct TokenInfo {
    std::size_t channel = 0;
    int timestep = -1;
};

/// Weather (channel-major) | aux | VIs | SM, channels indexed by the manifest.
std::vector<TokenInfo> token_layout(const Architecture& arch);

/// Per-channel standardization plus the yield scale. VI channels are never
/// rescaled so that zero-valued VIs stay exactly zero.
struct Scaler {
    std::array<double, kManifestChannels> mean{};
    std::array<double, kManifestChannels> std{};
    double yield_mean = 0.0;
    double yield_std = 1.0;

    Scaler();
    static Scaler fit(std::span<const Sample> samples);
    double apply(std::size_t channel, double raw) const { return (raw - mean[channel]) / std[channel]; }
    bool operator==(const Scaler&) const = default;
};

/// Declares every trainable tensor of `arch` and draws
/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; biases start at zero.
ParamStore init_params(const Architecture& arch, std::uint64_t seed);

/// Standardized weather padded to 16 rows by repeating the last timestep.
std::vector<double> padded_weather(const Scaler& scaler, const Sample& s);

/// Host-side token values. With SmSource::w2s the SM tokens are left out
/// (the graph appends them from the W2S output).
std::vector<double> assemble_input(const Architecture& arch, const Scaler& scaler, const Sample& s);

/// Constant (tokens x 27) block of channel and timestep one-hots.
Tensor token_onehots(const Architecture& arch);

struct LossSettings {
    bool enabled = false;
    double lambda = 0.0;
    bool sm_term = false;  // include mean squared SM error
};

/// The network graph for one sample. Built once; call set_sample() and
/// forward() per sample. Not thread-safe; copy one per worker.
class Network {
public:
    Network(const Architecture& arch, const Scaler& scaler, const ParamStore* params, LossSettings loss = {},
            double score_offset = 0.0);

    /// `drought_weight` is the per-sample yield-loss multiplier.
    void set_sample(const Sample& s, double drought_weight = 1.0);
    void forward() { graph_.forward(); }
    void backward(Gradients& grads, double scale) { graph_.backward(loss_, grads, scale); }
    void bind(const ParamStore* params) { graph_.bind(params); }

    double y_hat() const { return graph_.data(y_hat_)[0]; }
    std::span<const double> alpha() const { return graph_.data(alpha_); }
    std::span<const double> scores() const { return graph_.data(scores_); }
    std::span<const double> token_values() const { return graph_.data(tokens_); }
    /// Raw-unit SM prediction (13 x 2); only with a W2S encoder.
    Tensor sm_hat() const;
    double loss() const;
    double sm_loss() const;

    const Architecture& arch() const { return arch_; }
    Graph& graph() { return graph_; }

private:
    Architecture arch_;
    Scaler scaler_;
    LossSettings loss_settings_;
    Graph graph_;
    NodeId weather_in_{}, host_tokens_{}, y_target_{}, sm_target_{}, weight_in_{};
    NodeId sm_hat_{}, tokens_{}, scores_{}, alpha_{}, y_hat_{}, loss_{}, sm_loss_{};
};

struct Prediction {
    double y_hat = 0.0;
    Tensor sm_hat;  // empty without W2S
    std::vector<double> alpha;
};

/// The single inference path used by evaluation and reports.
Prediction predict(const Architecture& arch, const Scaler& scaler, const ParamStore& params, const Sample& s);

/// Attention head only, on explicit token values (one per token of `arch`).
Prediction attention_forward(const Architecture& arch, const ParamStore& params, std::span<const double> tokens);

struct Checkpoint {
    std::string variant;
    Architecture arch;
    Scaler scaler;
    ParamStore params;
    std::uint64_t seed = 0;
    nlohmann::ordered_json training;  // stop reason, history, ...
};

/// Writes <stem>.json (manifest) and <stem>.bin (little-endian float64 blob).
void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt);
/// Throws std::runtime_error if the files are inconsistent, or if `expected`
/// is given and the stored architecture differs.
Checkpoint load_checkpoint(const std::filesystem::path& stem, const std::optional<Architecture>& expected = {});

}  // namespace kgmlsm::model
