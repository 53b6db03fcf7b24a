#include "kgmlsm/experiment.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "kgmlsm/stats.hpp"

namespace kgmlsm::experiment {

SeedRun evaluate_checkpoint(const model::Checkpoint& ckpt, std::span<const Sample> test, Exec exec) {
    SeedRun r;
    r.seed = ckpt.seed;
    r.predictions.resize(test.size());
    r.sm_hat.resize(test.size());
    for_each_index(test.size(), exec, [&](std::size_t i, int) {
        auto p = model::predict(ckpt.arch, ckpt.scaler, ckpt.params, test[i]);
        r.predictions[i] = p.y_hat;
        r.sm_hat[i] = std::move(p.sm_hat);
    });
    r.metrics = eval::metrics(test, r.predictions);
    r.finetuned = ckpt;
    return r;
}

std::map<std::string, eval::MetricsReport> run_baselines(const train::Split& split, const Config& cfg,
                                                         std::uint64_t seed, Exec exec) {
    std::map<std::string, eval::MetricsReport> out;
    auto opts = cfg.baseline_options;
    opts.exec = exec;
    for (auto kind : cfg.baselines) {
        const auto pred = eval::baseline_fit_predict(kind, split.train, split.val, split.test, seed, opts);
        out[eval::to_string(kind)] = eval::metrics(split.test, pred);
    }
    return out;
}

Result run_experiment(std::span<const Sample> field, std::span<const Sample> county, const Config& cfg,
                      const train::TrainContext& ctx) {
    if (cfg.seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
    const auto& variant = train::variant_by_name(cfg.variant);
    Result res;
    res.variant = variant.name;
    res.lambda = variant.overestimation ? cfg.loss.lambda : 0.0;
    res.tokens = train::architecture_for(variant).token_count();
    res.target_year = cfg.target_year;

    for (auto seed : cfg.seeds) {
        const auto split = train::temporal_split(county, {cfg.target_year, cfg.train_fraction, seed});
        if (res.test.empty()) res.test = split.test;
        std::optional<model::Checkpoint> pre;
        if (variant.pretrain) pre = train::pretrain(field, variant, cfg.loss, cfg.pretrain, seed, ctx);
        auto ft = train::finetune(pre ? &*pre : nullptr, split.train, split.val, variant, cfg.loss, cfg.finetune, seed, ctx);
        auto run = evaluate_checkpoint(ft, split.test, ctx.exec);
        run.pretrained = std::move(pre);
        run.baselines = run_baselines(split, cfg, seed, ctx.exec);
        res.runs.push_back(std::move(run));
    }
    return res;
}

static nlohmann::ordered_json summary(const std::vector<const eval::MetricsReport*>& per_seed,
                                      const std::vector<std::uint64_t>& seeds) {
    std::vector<double> rmse, r2, dse, se;
    for (const auto* m : per_seed) {
        rmse.push_back(m->rmse);
        r2.push_back(m->r2);
        dse.push_back(m->drought_mean_signed_error);
        se.push_back(m->mean_signed_error);
    }
    return {{"rmse", mean(rmse)},
            {"r2", mean(r2)},
            {"mean_signed_error", mean(se)},
            {"drought_mean_signed_error", mean(dse)},
            {"per_seed", {{"seed", seeds}, {"rmse", rmse}, {"r2", r2}, {"mean_signed_error", se},
                          {"drought_mean_signed_error", dse}}}};
}

nlohmann::ordered_json metrics_json(const Result& r) {
    if (r.runs.empty()) throw std::invalid_argument("metrics_json: no runs");
    std::vector<std::uint64_t> seeds;
    std::vector<const eval::MetricsReport*> model_metrics;
    for (const auto& run : r.runs) {
        seeds.push_back(run.seed);
        model_metrics.push_back(&run.metrics);
    }
    std::size_t n_drought = 0;
    for (const auto& s : r.test) n_drought += s.drought;

    nlohmann::ordered_json j;
    j["variant"] = r.variant;
    j["lambda"] = r.lambda;
    j["tokens"] = r.tokens;
    j["target_year"] = r.target_year;
    j["n_test"] = r.test.size();
    j["n_test_drought"] = n_drought;
    j["seeds"] = seeds;
    j["model"] = summary(model_metrics, seeds);
    j["rmse"] = j["model"]["rmse"];
    j["r2"] = j["model"]["r2"];
    auto baselines = nlohmann::ordered_json::object();
    for (const auto& [name, _] : r.runs.front().baselines) {
        std::vector<const eval::MetricsReport*> per;
        for (const auto& run : r.runs) per.push_back(&run.baselines.at(name));
        baselines[name] = summary(per, seeds);
    }
    j["baselines"] = baselines;
    return j;
}

double median_over_seeds(const Result& r, double (*stat)(const SeedRun&)) {
    std::vector<double> v;
    for (const auto& run : r.runs) v.push_back(stat(run));
    return quantile_linear(v, 0.5);
}

}  // namespace kgmlsm::experiment
