#include "kgmlsm/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "kgmlsm/csv.hpp"
#include "kgmlsm/optim.hpp"
#include "kgmlsm/rng.hpp"

namespace kgmlsm::train {

Split temporal_split(std::span<const Sample> samples, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0))
        throw std::invalid_argument("train_fraction must lie in (0, 1]");
    Split out;
    std::vector<const Sample*> earlier;
    for (const auto& s : samples) {
        if (s.year == spec.target_year)
            out.test.push_back(s);
        else if (s.year < spec.target_year)
            earlier.push_back(&s);
        else
            ++out.excluded;
    }
    if (out.test.empty()) throw std::invalid_argument("target year " + std::to_string(spec.target_year) + " is absent");
    if (earlier.empty()) throw std::invalid_argument("no samples precede target year " + std::to_string(spec.target_year));
    auto rng = derive_rng(spec.seed, {0x5917});
    std::shuffle(earlier.begin(), earlier.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(earlier.size())));
    for (std::size_t i = 0; i < earlier.size(); ++i) (i < n_train ? out.train : out.val).push_back(*earlier[i]);
    return out;
}

const std::vector<Variant>& variants() {
    using model::SmSource;
    static const std::vector<Variant> all = {
        {"att_wo_sm", SmSource::none, false, false, false},
        {"att", SmSource::observed, false, false, false},
        {"att_sim", SmSource::observed, true, false, false},
        {"att_sim_w2s", SmSource::w2s, true, false, false},
        {"att_sim_w2s_smw", SmSource::w2s, true, true, false},
        {"kgml_sm", SmSource::w2s, true, true, true},
    };
    return all;
}

const Variant& variant_by_name(const std::string& name) {
    for (const auto& v : variants())
        if (v.name == name) return v;
    std::string known;
    for (const auto& v : variants()) known += (known.empty() ? "" : ", ") + v.name;
    throw std::invalid_argument("unknown variant '" + name + "' (known: " + known + ")");
}

model::Architecture architecture_for(const Variant& v) {
    model::Architecture a;
    a.sm_source = v.sm_source;
    return a;
}

model::LossSettings loss_settings_for(const Variant& v, const loss::LossConfig& cfg) {
    return {true, v.overestimation ? cfg.lambda : 0.0, v.sm_source == model::SmSource::w2s};
}

void StageConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (scheduler_patience < 1 || early_stopping_patience < 1) throw std::invalid_argument("patience must be >= 1");
}

StageConfig pretrain_defaults() {
    StageConfig c;
    c.batch_size = 64;
    c.max_epochs = 50;
    c.stop_rule = StageConfig::StopRule::train_rmse;
    return c;
}

StageConfig finetune_defaults() { return {}; }

double Evaluation::mean_loss() const {
    if (loss.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(loss.size());
}

static std::vector<std::unique_ptr<SampleModel>> make_workers(const ModelFactory& factory, const ParamStore* params,
                                                              Exec exec) {
    std::vector<std::unique_ptr<SampleModel>> w;
    const int n = exec == Exec::parallel ? max_workers() : 1;
    for (int i = 0; i < n; ++i) w.push_back(factory(params));
    return w;
}

Evaluation evaluate(const ParamStore& params, std::span<const Sample> samples, const ModelFactory& factory, Exec exec) {
    auto workers = make_workers(factory, &params, exec);
    Evaluation e;
    e.loss.resize(samples.size());
    e.prediction.resize(samples.size());
    for_each_index(samples.size(), exec, [&](std::size_t i, int w) {
        e.loss[i] = workers[static_cast<std::size_t>(w)]->forward(samples[i]);
        e.prediction[i] = workers[static_cast<std::size_t>(w)]->prediction();
    });
    return e;
}

static double yield_rmse(std::span<const Sample> samples, std::span<const double> pred) {
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) total += (pred[i] - samples[i].yield) * (pred[i] - samples[i].yield);
    return std::sqrt(total / static_cast<double>(samples.size()));
}

TrainResult fit(ParamStore init, std::span<const Sample> train, std::span<const Sample> val, const StageConfig& cfg,
                const ModelFactory& factory, std::uint64_t seed, const TrainContext& ctx) {
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("training set is empty");
    const bool early_stopping = cfg.stop_rule == StageConfig::StopRule::early_stopping && !val.empty();

    TrainResult r;
    r.params = std::move(init);
    ParamStore& params = r.params;
    AdamState adam(params, {.lr = cfg.lr});
    PlateauScheduler scheduler{.lr = cfg.lr, .patience = cfg.scheduler_patience, .factor = cfg.scheduler_factor,
                               .min_lr = cfg.min_lr};
    auto workers = make_workers(factory, &params, ctx.exec);
    std::vector<Gradients> sample_grads(std::min(cfg.batch_size, train.size()), Gradients(params));
    Gradients total(params);
    std::vector<double> losses(sample_grads.size());
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<const Sample*> batch;

    std::vector<double> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        auto rng = derive_rng(seed, {0xE90C, static_cast<std::uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        try {
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), start + cfg.batch_size);
                batch.clear();
                for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
                if (ctx.on_batch) ctx.on_batch(batch);
                const double scale = 1.0 / static_cast<double>(batch.size());
                for_each_index(batch.size(), ctx.exec, [&](std::size_t i, int w) {
                    auto& worker = *workers[static_cast<std::size_t>(w)];
                    sample_grads[i].zero();
                    losses[i] = worker.forward(*batch[i]);
                    worker.backward(sample_grads[i], scale);
                });
                total.zero();
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    total += sample_grads[i];
                    loss_sum += losses[i];
                }
                adam_step(params, total, adam);
            }
        } catch (const NumericError& e) {
            throw std::runtime_error("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        rec.lr = adam.config.lr;
        rec.rmse = yield_rmse(train, evaluate(params, train, factory, ctx.exec).prediction);
        if (!val.empty()) rec.val_loss = evaluate(params, val, factory, ctx.exec).mean_loss();
        if (!std::isfinite(rec.train_loss) || (!val.empty() && !std::isfinite(rec.val_loss)))
            throw std::runtime_error("training diverged in epoch " + std::to_string(epoch) + ": non-finite loss");
        r.history.push_back(rec);
        adam.config.lr = scheduler.step(val.empty() ? rec.train_loss : rec.val_loss);

        if (cfg.stop_rule == StageConfig::StopRule::train_rmse && rec.rmse < cfg.rmse_target) {
            r.stop_reason = "train_rmse_below_target";
            break;
        }
        if (early_stopping) {
            if (rec.val_loss < best_val) {
                best_val = rec.val_loss;
                best_params.assign(params.flat().begin(), params.flat().end());
                r.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.early_stopping_patience) {
                r.stop_reason = "early_stopping";
                break;
            }
        }
    }
    if (r.stop_reason.empty()) r.stop_reason = "max_epochs";

    if (early_stopping) {
        std::ranges::copy(best_params, params.flat().begin());
        r.best_val_loss = best_val;
        r.final_train_rmse = r.history[static_cast<std::size_t>(r.best_epoch - 1)].rmse;
    } else {
        r.best_epoch = r.history.back().epoch;
        r.best_val_loss = r.history.back().val_loss;
        r.final_train_rmse = r.history.back().rmse;
    }
    return r;
}

namespace {

class NetworkModel final : public SampleModel {
public:
    NetworkModel(const model::Architecture& arch, const model::Scaler& scaler, const ParamStore* params,
                 model::LossSettings settings, bool drought_weight, double epsilon)
        : net_(arch, scaler, params, settings), drought_weight_(drought_weight), epsilon_(epsilon) {}

    double forward(const Sample& s) override {
        net_.set_sample(s, drought_weight_ ? loss::drought_weight(s.sbar, epsilon_) : 1.0);
        net_.forward();
        return net_.loss();
    }
    void backward(Gradients& grads, double scale) override { net_.backward(grads, scale); }
    double prediction() const override { return net_.y_hat(); }

private:
    model::Network net_;
    bool drought_weight_;
    double epsilon_;
};

nlohmann::ordered_json training_json(const char* stage, const TrainResult& r) {
    auto history = nlohmann::ordered_json::array();
    for (const auto& e : r.history)
        history.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_loss", e.val_loss},
                           {"lr", e.lr},
                           {"rmse", e.rmse}});
    return {{"stage", stage},
            {"stop_reason", r.stop_reason},
            {"epochs", r.history.size()},
            {"best_epoch", r.best_epoch},
            {"best_val_loss", r.best_val_loss},
            {"final_train_rmse", r.final_train_rmse},
            {"history", history}};
}

}  // namespace

ModelFactory network_factory(const Variant& v, const model::Architecture& arch, const model::Scaler& scaler,
                             const loss::LossConfig& loss_cfg) {
    loss_cfg.validate();
    const auto settings = loss_settings_for(v, loss_cfg);
    return [=](const ParamStore* params) -> std::unique_ptr<SampleModel> {
        return std::make_unique<NetworkModel>(arch, scaler, params, settings, v.drought_weight, loss_cfg.epsilon);
    };
}

std::uint64_t params_hash(const ParamStore& params) {
    std::uint64_t h = 1469598103934665603ull;
    for (double v : params.flat()) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i, bits >>= 8) {
            h ^= bits & 0xff;
            h *= 1099511628211ull;
        }
    }
    return h;
}

model::Checkpoint pretrain(std::span<const Sample> field, const Variant& v, const loss::LossConfig& loss_cfg,
                           const StageConfig& cfg, std::uint64_t seed, const TrainContext& ctx) {
    if (field.empty()) throw std::invalid_argument("pretraining set is empty");
    model::Checkpoint ck;
    ck.variant = v.name;
    ck.arch = architecture_for(v);
    ck.scaler = model::Scaler::fit(field);
    ck.seed = seed;
    auto r = fit(model::init_params(ck.arch, seed), field, {}, cfg, network_factory(v, ck.arch, ck.scaler, loss_cfg),
                 2 * seed, ctx);
    ck.training = training_json("pretrain", r);
    ck.training["target_met"] = r.final_train_rmse < cfg.rmse_target;
    ck.params = std::move(r.params);
    return ck;
}

model::Checkpoint finetune(const model::Checkpoint* init, std::span<const Sample> train, std::span<const Sample> val,
                           const Variant& v, const loss::LossConfig& loss_cfg, const StageConfig& cfg,
                           std::uint64_t seed, const TrainContext& ctx) {
    model::Checkpoint ck;
    ck.variant = v.name;
    ck.arch = architecture_for(v);
    ck.seed = seed;
    ParamStore start;
    if (init) {
        if (!(init->arch == ck.arch))
            throw std::runtime_error("checkpoint architecture (sm_source=" + std::string(to_string(init->arch.sm_source)) +
                                     ") does not match variant " + v.name);
        ck.scaler = init->scaler;
        start = init->params;
    } else {
        ck.scaler = model::Scaler::fit(train);
        start = model::init_params(ck.arch, seed);
    }
    auto r = fit(std::move(start), train, val, cfg, network_factory(v, ck.arch, ck.scaler, loss_cfg), 2 * seed + 1, ctx);
    ck.training = training_json("finetune", r);
    ck.training["pretrained"] = init != nullptr;
    ck.params = std::move(r.params);
    return ck;
}

std::vector<EpochRecord> history_from_json(const nlohmann::ordered_json& training) {
    std::vector<EpochRecord> out;
    for (const auto& e : training.at("history")) {
        EpochRecord r;
        r.epoch = e.at("epoch").get<int>();
        r.train_loss = e.at("train_loss").get<double>();
        r.val_loss = e.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN() : e.at("val_loss").get<double>();
        r.lr = e.at("lr").get<double>();
        r.rmse = e.at("rmse").get<double>();
        out.push_back(r);
    }
    return out;
}

void write_epochs_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
    CsvWriter w(path);
    w.row({"epoch", "train_loss", "val_loss", "lr", "rmse"});
    for (const auto& e : history)
        w.row({std::to_string(e.epoch), format_double(e.train_loss),
               std::isfinite(e.val_loss) ? format_double(e.val_loss) : "", format_double(e.lr), format_double(e.rmse)});
}

}  // namespace kgmlsm::train
