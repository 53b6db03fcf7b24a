#include "kgmlsm/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "kgmlsm/loss.hpp"
#include "kgmlsm/parallel.hpp"
#include "kgmlsm/rng.hpp"

namespace kgmlsm::model {

namespace {

constexpr std::size_t kWeatherBase = 0;
constexpr std::size_t kViBase = 4;
constexpr std::size_t kSmBase = 8;
constexpr std::size_t kAuxBase = 10;

std::size_t host_token_count(const Architecture& arch) {
    return arch.sm_source == SmSource::observed ? arch.token_count()
                                                : kTimesteps * (kWeatherChannels + kViChannels) + kAuxFeatures;
}

struct AttentionNodes {
    NodeId scores, alpha, y_z;
};

AttentionNodes build_attention(Graph& g, const Architecture& arch, NodeId tokens, double score_offset) {
    const std::size_t n = arch.token_count();
    const NodeId onehot = g.constant(token_onehots(arch));
    const std::array<NodeId, 2> parts = {tokens, onehot};
    const NodeId features = g.concat_cols(parts);
    const NodeId embed =
        g.relu(g.add_row(g.matmul(features, g.param("attn.embed.weight")), g.param("attn.embed.bias")));
    // q . (E_i W_K) for all i, computed as E (W_K q).
    const NodeId key_query = g.matmul(g.param("attn.key"), g.param("attn.query"));
    NodeId scores = g.scale(g.matmul(embed, key_query), 1.0 / std::sqrt(static_cast<double>(arch.d_k)));
    if (score_offset != 0.0) scores = g.add_scalar(scores, score_offset);
    const NodeId alpha = g.softmax(g.reshape(scores, 1, n));
    const NodeId pooled = g.matmul(g.matmul(alpha, embed), g.param("attn.value"));
    const NodeId y_z = g.add(g.matmul(pooled, g.param("attn.out.weight")), g.param("attn.out.bias"));
    return {scores, alpha, y_z};
}

// Width-3 temporal mixing with zero padding: [x_{t-1}, x_t, x_{t+1}].
NodeId window3(Graph& g, NodeId x) {
    const auto shape = g.shape(x);
    const std::size_t rows = shape[0];
    const NodeId zero = g.constant(Tensor({1, shape[1]}));
    const std::array<NodeId, 3> padded_parts = {zero, x, zero};
    const NodeId padded = g.concat_rows(padded_parts);
    const std::array<NodeId, 3> cols = {g.slice_rows(padded, 0, rows), g.slice_rows(padded, 1, rows + 1),
                                        g.slice_rows(padded, 2, rows + 2)};
    return g.concat_cols(cols);
}

NodeId dense(Graph& g, NodeId x, const std::string& name) {
    return g.add_row(g.matmul(x, g.param(name + ".weight")), g.param(name + ".bias"));
}

NodeId concat2(Graph& g, NodeId a, NodeId b) {
    const std::array<NodeId, 2> parts = {a, b};
    return g.concat_cols(parts);
}

// Standardized padded weather (16 x 4) -> standardized SM (13 x 2).
NodeId build_w2s(Graph& g, NodeId weather) {
    const NodeId e1 = g.relu(dense(g, window3(g, weather), "w2s.enc1"));
    const NodeId e2 = g.relu(dense(g, window3(g, g.downsample2(e1)), "w2s.enc2"));
    const NodeId mid = g.relu(dense(g, g.downsample2(e2), "w2s.mid"));
    const NodeId d2 = g.relu(dense(g, window3(g, concat2(g, g.upsample2(mid), e2)), "w2s.dec2"));
    const NodeId d1 = g.relu(dense(g, window3(g, concat2(g, g.upsample2(d2), e1)), "w2s.dec1"));
    return g.slice_rows(dense(g, d1, "w2s.head"), 0, kTimesteps);
}

double checked_std(double var) { return var > 1e-24 ? std::sqrt(var) : 1.0; }

}  // namespace

const char* to_string(SmSource s) {
    switch (s) {
        case SmSource::none: return "none";
        case SmSource::observed: return "observed";
        case SmSource::w2s: return "w2s";
    }
    return "?";
}

SmSource sm_source_from_string(const std::string& s) {
    if (s == "none") return SmSource::none;
    if (s == "observed") return SmSource::observed;
    if (s == "w2s") return SmSource::w2s;
    throw std::invalid_argument("unknown sm source: " + s);
}

std::size_t Architecture::token_count() const {
    const std::size_t series = kWeatherChannels + kViChannels + (has_sm_tokens() ? kSmChannels : 0);
    return series * kTimesteps + kAuxFeatures;
}

std::vector<TokenInfo> token_layout(const Architecture& arch) {
    std::vector<TokenInfo> out;
    const auto series = [&](std::size_t base, std::size_t channels) {
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t t = 0; t < kTimesteps; ++t) out.push_back({base + c, static_cast<int>(t)});
    };
    series(kWeatherBase, kWeatherChannels);
    for (std::size_t k = 0; k < kAuxFeatures; ++k) out.push_back({kAuxBase + k, -1});
    series(kViBase, kViChannels);
    if (arch.has_sm_tokens()) series(kSmBase, kSmChannels);
    return out;
}

Tensor token_onehots(const Architecture& arch) {
    const auto layout = token_layout(arch);
    Tensor t({layout.size(), kManifestChannels + kTimesteps});
    for (std::size_t i = 0; i < layout.size(); ++i) {
        t(i, layout[i].channel) = 1.0;
        if (layout[i].timestep >= 0) t(i, kManifestChannels + static_cast<std::size_t>(layout[i].timestep)) = 1.0;
    }
    return t;
}

Scaler::Scaler() { std.fill(1.0); }

Scaler Scaler::fit(std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("Scaler::fit: no samples");
    Scaler sc;
    std::array<double, kManifestChannels> sum{}, sq{}, n{};
    const auto add = [&](std::size_t ch, double v) {
        sum[ch] += v;
        sq[ch] += v * v;
        n[ch] += 1.0;
    };
    double ysum = 0.0, ysq = 0.0;
    for (const auto& s : samples) {
        for (std::size_t t = 0; t < kTimesteps; ++t) {
            for (std::size_t c = 0; c < kWeatherChannels; ++c) add(kWeatherBase + c, s.weather(t, c));
            for (std::size_t c = 0; c < kSmChannels; ++c) add(kSmBase + c, s.sm(t, c));
        }
        const auto aux = s.aux();
        for (std::size_t k = 0; k < kAuxFeatures; ++k) add(kAuxBase + k, aux[k]);
        ysum += s.yield;
        ysq += s.yield * s.yield;
    }
    for (std::size_t ch = 0; ch < kManifestChannels; ++ch) {
        if (n[ch] == 0.0) continue;  // VIs stay identity
        sc.mean[ch] = sum[ch] / n[ch];
        sc.std[ch] = checked_std(sq[ch] / n[ch] - sc.mean[ch] * sc.mean[ch]);
    }
    const double ny = static_cast<double>(samples.size());
    sc.yield_mean = ysum / ny;
    sc.yield_std = checked_std(ysq / ny - sc.yield_mean * sc.yield_mean);
    return sc;
}

ParamStore init_params(const Architecture& arch, std::uint64_t seed) {
    ParamStore p;
    const auto layer = [&](const std::string& name, std::size_t in, std::size_t out) {
        p.add(name + ".weight", {in, out});
        p.add(name + ".bias", {1, out});
    };
    if (arch.has_w2s()) {
        layer("w2s.enc1", 3 * kWeatherChannels, arch.enc1);
        layer("w2s.enc2", 3 * arch.enc1, arch.enc2);
        layer("w2s.mid", arch.enc2, arch.enc2);
        layer("w2s.dec2", 3 * 2 * arch.enc2, arch.enc2);
        layer("w2s.dec1", 3 * (arch.enc2 + arch.enc1), arch.enc1);
        layer("w2s.head", arch.enc1, kSmChannels);
    }
    layer("attn.embed", arch.feature_width(), arch.d_model);
    p.add("attn.key", {arch.d_model, arch.d_k});
    p.add("attn.value", {arch.d_model, arch.d_k});
    p.add("attn.query", {arch.d_k, 1});
    layer("attn.out", arch.d_k, 1);

    auto rng = derive_rng(seed, {0x1417});
    for (std::size_t i = 0; i < p.count(); ++i) {
        const auto& info = p.info(i);
        if (info.name.ends_with(".bias")) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(info.shape[0]));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& v : p.values(i)) v = u(rng);
    }
    return p;
}

std::vector<double> padded_weather(const Scaler& scaler, const Sample& s) {
    std::vector<double> out(kPaddedSteps * kWeatherChannels);
    for (std::size_t t = 0; t < kPaddedSteps; ++t) {
        const std::size_t src = std::min(t, kTimesteps - 1);
        for (std::size_t c = 0; c < kWeatherChannels; ++c)
            out[t * kWeatherChannels + c] = scaler.apply(kWeatherBase + c, s.weather(src, c));
    }
    return out;
}

std::vector<double> assemble_input(const Architecture& arch, const Scaler& scaler, const Sample& s) {
    if (s.weather.shape() != Shape{kTimesteps, kWeatherChannels} || s.vis.shape() != Shape{kTimesteps, kViChannels} ||
        s.sm.shape() != Shape{kTimesteps, kSmChannels})
        throw ShapeError("assemble_input: sample channels do not match the manifest");
    std::vector<double> out;
    out.reserve(arch.token_count());
    for (std::size_t c = 0; c < kWeatherChannels; ++c)
        for (std::size_t t = 0; t < kTimesteps; ++t) out.push_back(scaler.apply(kWeatherBase + c, s.weather(t, c)));
    const auto aux = s.aux();
    for (std::size_t k = 0; k < kAuxFeatures; ++k) out.push_back(scaler.apply(kAuxBase + k, aux[k]));
    for (std::size_t c = 0; c < kViChannels; ++c)
        for (std::size_t t = 0; t < kTimesteps; ++t) out.push_back(scaler.apply(kViBase + c, s.vis(t, c)));
    if (arch.sm_source == SmSource::observed)
        for (std::size_t c = 0; c < kSmChannels; ++c)
            for (std::size_t t = 0; t < kTimesteps; ++t) out.push_back(scaler.apply(kSmBase + c, s.sm(t, c)));
    return out;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(const Architecture& arch, const Scaler& scaler, const ParamStore* params, LossSettings loss,
                 double score_offset)
    : arch_(arch), scaler_(scaler), loss_settings_(loss), graph_(params) {
    if (loss.sm_term && !arch.has_w2s()) throw std::invalid_argument("SM loss requires the W2S encoder");
    Graph& g = graph_;
    host_tokens_ = g.input("tokens", host_token_count(arch), 1);
    if (arch.has_w2s()) {
        weather_in_ = g.input("weather", kPaddedSteps, kWeatherChannels);
        const NodeId z = build_w2s(g, weather_in_);
        Tensor sd({kSmChannels, kSmChannels}), mu({1, kSmChannels});
        for (std::size_t c = 0; c < kSmChannels; ++c) {
            sd(c, c) = scaler.std[kSmBase + c];
            mu(0, c) = scaler.mean[kSmBase + c];
        }
        sm_hat_ = g.add_row(g.matmul(z, g.constant(sd)), g.constant(mu));
        const std::array<NodeId, 2> parts = {host_tokens_, g.reshape(g.transpose(z), kTimesteps * kSmChannels, 1)};
        tokens_ = g.concat_rows(parts);
    } else {
        tokens_ = host_tokens_;
    }
    const auto attn = build_attention(g, arch, tokens_, score_offset);
    scores_ = attn.scores;
    alpha_ = attn.alpha;
    y_hat_ = g.add_scalar(g.scale(attn.y_z, scaler.yield_std), scaler.yield_mean);

    if (loss.enabled) {
        y_target_ = g.input("target.yield", 1, 1);
        weight_in_ = g.input("target.weight", 1, 1);
        loss_ = loss::yield_loss_node(g, y_target_, y_hat_, weight_in_, loss.lambda);
        if (loss.sm_term) {
            sm_target_ = g.input("target.sm", kTimesteps, kSmChannels);
            sm_loss_ = loss::sm_loss_node(g, sm_target_, sm_hat_);
            loss_ = g.add(sm_loss_, loss_);
        }
    }
}

void Network::set_sample(const Sample& s, double drought_weight) {
    graph_.set_input(host_tokens_, assemble_input(arch_, scaler_, s));
    if (arch_.has_w2s()) graph_.set_input(weather_in_, padded_weather(scaler_, s));
    if (loss_settings_.enabled) {
        const double y = s.yield;
        graph_.set_input(y_target_, std::span<const double>(&y, 1));
        graph_.set_input(weight_in_, std::span<const double>(&drought_weight, 1));
        if (loss_settings_.sm_term) graph_.set_input(sm_target_, s.sm.data());
    }
}

Tensor Network::sm_hat() const {
    if (!arch_.has_w2s()) return {};
    return graph_.value(sm_hat_);
}

double Network::loss() const {
    if (!loss_settings_.enabled) throw std::logic_error("network was built without a loss");
    return graph_.data(loss_)[0];
}

double Network::sm_loss() const { return loss_settings_.sm_term ? graph_.data(sm_loss_)[0] : 0.0; }

Prediction predict(const Architecture& arch, const Scaler& scaler, const ParamStore& params, const Sample& s) {
    Network net(arch, scaler, &params);
    net.set_sample(s);
    net.forward();
    return {net.y_hat(), net.sm_hat(), std::vector<double>(net.alpha().begin(), net.alpha().end())};
}

Prediction attention_forward(const Architecture& arch, const ParamStore& params, std::span<const double> tokens) {
    if (tokens.size() != arch.token_count())
        throw ShapeError("attention_forward: expected " + std::to_string(arch.token_count()) + " tokens, got " +
                         std::to_string(tokens.size()));
    Graph g(&params);
    const NodeId in = g.input("tokens", tokens.size(), 1);
    const auto attn = build_attention(g, arch, in, 0.0);
    g.set_input(in, tokens);
    g.forward();
    Prediction p;
    p.y_hat = g.data(attn.y_z)[0];
    p.alpha.assign(g.data(attn.alpha).begin(), g.data(attn.alpha).end());
    return p;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

nlohmann::ordered_json arch_json(const Architecture& a) {
    return {{"sm_source", to_string(a.sm_source)}, {"d_model", a.d_model}, {"d_k", a.d_k},
            {"enc1", a.enc1},                      {"enc2", a.enc2},       {"tokens", a.token_count()}};
}

Architecture arch_from_json(const nlohmann::ordered_json& j) {
    Architecture a;
    a.sm_source = sm_source_from_string(j.at("sm_source").get<std::string>());
    a.d_model = j.at("d_model").get<std::size_t>();
    a.d_k = j.at("d_k").get<std::size_t>();
    a.enc1 = j.at("enc1").get<std::size_t>();
    a.enc2 = j.at("enc2").get<std::size_t>();
    return a;
}

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xff);
        return r;
    }
    return v;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
    return stem.parent_path() / (stem.filename().string() + ext);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt) {
    nlohmann::ordered_json j;
    j["format"] = "kgmlsm-checkpoint";
    j["version"] = 1;
    j["variant"] = ckpt.variant;
    j["architecture"] = arch_json(ckpt.arch);
    auto channels = nlohmann::ordered_json::array();
    for (const auto& c : channel_manifest()) channels.push_back(c.name);
    j["channels"] = channels;
    j["scaler"] = {{"mean", ckpt.scaler.mean},
                   {"std", ckpt.scaler.std},
                   {"yield_mean", ckpt.scaler.yield_mean},
                   {"yield_std", ckpt.scaler.yield_std}};
    j["seed"] = ckpt.seed;
    auto params = nlohmann::ordered_json::array();
    for (const auto& p : ckpt.params.infos())
        params.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", p.offset}, {"size", p.size}});
    j["parameters"] = params;
    j["parameter_count"] = ckpt.params.total_size();
    j["blob"] = with_suffix(stem, ".bin").filename().string();
    j["blob_encoding"] = "float64-le";
    j["training"] = ckpt.training;

    std::ofstream manifest(with_suffix(stem, ".json"), std::ios::binary);
    if (!manifest) throw std::runtime_error("cannot write checkpoint manifest " + with_suffix(stem, ".json").string());
    manifest << j.dump(2) << '\n';

    std::ofstream blob(with_suffix(stem, ".bin"), std::ios::binary);
    if (!blob) throw std::runtime_error("cannot write checkpoint blob " + with_suffix(stem, ".bin").string());
    for (double v : ckpt.params.flat()) {
        const auto bits = to_little(std::bit_cast<std::uint64_t>(v));
        blob.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& stem, const std::optional<Architecture>& expected) {
    const auto manifest_path = with_suffix(stem, ".json");
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("checkpoint manifest not found: " + manifest_path.string());
    const auto j = nlohmann::ordered_json::parse(in);
    if (j.value("format", "") != "kgmlsm-checkpoint") throw std::runtime_error("not a checkpoint manifest");

    std::vector<std::string> names;
    for (const auto& c : channel_manifest()) names.push_back(c.name);
    if (j.at("channels").get<std::vector<std::string>>() != names)
        throw std::runtime_error("checkpoint channel manifest does not match this build");

    Checkpoint ck;
    ck.variant = j.at("variant").get<std::string>();
    ck.arch = arch_from_json(j.at("architecture"));
    if (expected && !(*expected == ck.arch))
        throw std::runtime_error("checkpoint architecture " + j.at("architecture").dump() +
                                 " does not match the requested model " + arch_json(*expected).dump());
    ck.scaler.mean = j.at("scaler").at("mean").get<std::array<double, kManifestChannels>>();
    ck.scaler.std = j.at("scaler").at("std").get<std::array<double, kManifestChannels>>();
    ck.scaler.yield_mean = j.at("scaler").at("yield_mean").get<double>();
    ck.scaler.yield_std = j.at("scaler").at("yield_std").get<double>();
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.training = j.value("training", nlohmann::ordered_json::object());

    ck.params = init_params(ck.arch, 0);
    const auto& stored = j.at("parameters");
    if (stored.size() != ck.params.count()) throw std::runtime_error("checkpoint parameter list does not match");
    for (std::size_t i = 0; i < stored.size(); ++i) {
        const auto& info = ck.params.info(i);
        if (stored[i].at("name").get<std::string>() != info.name || stored[i].at("shape").get<Shape>() != info.shape)
            throw std::runtime_error("checkpoint parameter " + std::to_string(i) + " does not match " + info.name);
    }

    const auto blob_path = with_suffix(stem, ".bin");
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw std::runtime_error("checkpoint blob not found: " + blob_path.string());
    auto flat = ck.params.flat();
    for (double& v : flat) {
        std::uint64_t bits = 0;
        if (!blob.read(reinterpret_cast<char*>(&bits), sizeof bits))
            throw std::runtime_error("checkpoint blob is truncated: " + blob_path.string());
        v = std::bit_cast<double>(to_little(bits));
    }
    if (blob.peek() != std::char_traits<char>::eof())
        throw std::runtime_error("checkpoint blob has trailing data: " + blob_path.string());
    return ck;
}

}  // namespace kgmlsm::model
