#include "kgmlsm/config.hpp"

#include <fstream>
#include <set>

namespace kgmlsm {

namespace {

using json = nlohmann::json;

// Walks one JSON object, remembering which keys were consumed so that
// leftovers can be reported with their full path.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key " + child(key) + " has the wrong type (" + j_.at(key).type_name() + ")");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    Reader object(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Reader(j_.contains(key) ? j_.at(key) : empty, child(key));
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.contains(k)) throw ConfigError("unknown config key: " + child(k));
    }

private:
    std::string where() const { return path_.empty() ? "config" : "config key " + path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_stage(Reader r, train::StageConfig& s) {
    r.get("batch_size", s.batch_size);
    r.get("lr", s.lr);
    r.get("scheduler_patience", s.scheduler_patience);
    r.get("scheduler_factor", s.scheduler_factor);
    r.get("min_lr", s.min_lr);
    r.get("max_epochs", s.max_epochs);
    r.get("rmse_target", s.rmse_target);
    r.get("early_stopping_patience", s.early_stopping_patience);
    std::string rule = s.stop_rule == train::StageConfig::StopRule::train_rmse ? "train_rmse" : "early_stopping";
    r.get("stop_rule", rule);
    if (rule == "train_rmse")
        s.stop_rule = train::StageConfig::StopRule::train_rmse;
    else if (rule == "early_stopping")
        s.stop_rule = train::StageConfig::StopRule::early_stopping;
    else
        throw ConfigError("config key " + r.child("stop_rule") + " must be train_rmse or early_stopping");
    r.finish();
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(r.child("") + ": " + e.what());
    }
}

nlohmann::ordered_json stage_json(const train::StageConfig& s) {
    return {{"batch_size", s.batch_size},
            {"lr", s.lr},
            {"scheduler_patience", s.scheduler_patience},
            {"scheduler_factor", s.scheduler_factor},
            {"min_lr", s.min_lr},
            {"max_epochs", s.max_epochs},
            {"stop_rule", s.stop_rule == train::StageConfig::StopRule::train_rmse ? "train_rmse" : "early_stopping"},
            {"rmse_target", s.rmse_target},
            {"early_stopping_patience", s.early_stopping_patience}};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return std::filesystem::absolute(path.is_absolute() ? path : base / path).lexically_normal();
}

}  // namespace

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    Reader root(j, "");

    auto paths = root.object("paths");
    std::string run_dir = "run", data_dir;
    paths.get("run_dir", run_dir);
    paths.get("data_dir", data_dir);
    paths.finish();
    cfg.run_dir = resolve(base_dir, run_dir);
    cfg.data_dir = data_dir.empty() ? cfg.run_dir / "data" : resolve(base_dir, data_dir);

    root.get("years", cfg.years);
    if (cfg.years.empty()) throw ConfigError("config key years must list at least one year");
    root.get("history_years", cfg.history_years);
    root.get("parallel", cfg.parallel);

    auto cs = root.object("cropsim");
    cs.get("n_stations", cfg.field.n_stations);
    cs.get("seed", cfg.field.seed);
    if (cs.has("scenario_mix")) {
        auto mix = cs.object("scenario_mix");
        mix.get("miscalibrated_fraction", cfg.field.scenario_mix.miscalibrated_fraction);
        if (mix.has("scenarios")) {
            cfg.field.scenario_mix.scenarios.clear();
            const auto& list = mix.raw("scenarios");
            if (!list.is_array() || list.empty())
                throw ConfigError("config key " + mix.child("scenarios") + " must be a nonempty array");
            for (std::size_t i = 0; i < list.size(); ++i) {
                Reader s(list[i], mix.child("scenarios") + "[" + std::to_string(i) + "]");
                cropsim::Scenario sc;
                s.get("name", sc.name);
                s.get("weight", sc.weight);
                s.get("wet_day_prob", sc.wet_day_prob);
                s.finish();
                if (!(sc.weight > 0.0) || !(sc.wet_day_prob >= 0.0 && sc.wet_day_prob <= 1.0))
                    throw ConfigError("config key " + s.child("") + " needs weight > 0 and wet_day_prob in [0, 1]");
                cfg.field.scenario_mix.scenarios.push_back(sc);
            }
        }
        mix.finish();
    } else {
        cs.object("scenario_mix").finish();
    }
    cs.finish();

    auto co = root.object("county");
    co.get("n_counties", cfg.county.n_counties);
    co.get("seed", cfg.county.seed);
    co.get("normal_wet_day_prob", cfg.county.normal_wet_day_prob);
    co.get("drought_wet_day_prob", cfg.county.drought_wet_day_prob);
    co.get("drought_radius_deg", cfg.county.drought_radius_deg);
    co.get("sm_noise", cfg.county.sm_noise);
    co.finish();

    auto ing = root.object("ingest");
    ing.get("drought_quantile", cfg.drought_quantile);
    ing.finish();

    auto fl = root.object("filter");
    fl.get("enabled", cfg.filter_enabled);
    fl.get("threshold", cfg.filter_threshold);
    fl.finish();

    auto& ex = cfg.experiment;
    root.get("variant", ex.variant);
    root.get("target_year", ex.target_year);
    root.get("seeds", ex.seeds);
    if (ex.seeds.empty()) throw ConfigError("config key seeds must list at least one seed");
    try {
        train::variant_by_name(ex.variant);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config key variant: ") + e.what());
    }

    auto lo = root.object("loss");
    lo.get("lambda", ex.loss.lambda);
    lo.get("epsilon", ex.loss.epsilon);
    lo.finish();
    try {
        ex.loss.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    auto tr = root.object("train");
    tr.get("train_fraction", ex.train_fraction);
    read_stage(tr.object("pretrain"), ex.pretrain);
    read_stage(tr.object("finetune"), ex.finetune);
    tr.finish();

    auto ev = root.object("evaluate");
    std::vector<std::string> baselines = {"LR", "Ridge", "MLP"};
    ev.get("baselines", baselines);
    ex.baselines.clear();
    for (const auto& b : baselines) {
        try {
            ex.baselines.push_back(eval::baseline_from_string(b));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("config key " + ev.child("baselines") + ": " + e.what());
        }
    }
    ev.get("ridge_alpha", ex.baseline_options.ridge_alpha);
    ev.get("mlp_hidden", ex.baseline_options.mlp_hidden);
    ev.finish();
    ex.baseline_options.mlp_stage = ex.finetune;

    auto ab = root.object("ablation");
    ab.get("variants", cfg.ablation.variants);
    ab.get("lambdas", cfg.ablation.lambdas);
    ab.get("unfiltered", cfg.ablation.unfiltered);
    ab.get("in_all", cfg.ablation.in_all);
    ab.finish();
    for (const auto& v : cfg.ablation.variants) {
        try {
            train::variant_by_name(v);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("config key " + ab.child("variants") + ": " + e.what());
        }
    }

    root.finish();

    cfg.field.years = cfg.years;
    cfg.field.history_years = cfg.history_years;
    cfg.county.years = cfg.years;
    cfg.county.history_years = cfg.history_years;
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j, std::filesystem::absolute(path).parent_path());
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json scenarios = nlohmann::ordered_json::array();
    for (const auto& s : cfg.field.scenario_mix.scenarios)
        scenarios.push_back({{"name", s.name}, {"weight", s.weight}, {"wet_day_prob", s.wet_day_prob}});
    std::vector<std::string> baselines;
    for (auto b : cfg.experiment.baselines) baselines.emplace_back(eval::to_string(b));
    const auto& ex = cfg.experiment;
    return {
        {"paths", {{"run_dir", cfg.run_dir.string()}, {"data_dir", cfg.data_dir.string()}}},
        {"years", cfg.years},
        {"history_years", cfg.history_years},
        {"target_year", ex.target_year},
        {"seeds", ex.seeds},
        {"variant", ex.variant},
        {"parallel", cfg.parallel},
        {"cropsim",
         {{"n_stations", cfg.field.n_stations},
          {"seed", cfg.field.seed},
          {"scenario_mix",
           {{"miscalibrated_fraction", cfg.field.scenario_mix.miscalibrated_fraction}, {"scenarios", scenarios}}}}},
        {"county",
         {{"n_counties", cfg.county.n_counties},
          {"seed", cfg.county.seed},
          {"normal_wet_day_prob", cfg.county.normal_wet_day_prob},
          {"drought_wet_day_prob", cfg.county.drought_wet_day_prob},
          {"drought_radius_deg", cfg.county.drought_radius_deg},
          {"sm_noise", cfg.county.sm_noise}}},
        {"ingest", {{"drought_quantile", cfg.drought_quantile}}},
        {"filter", {{"enabled", cfg.filter_enabled}, {"threshold", cfg.filter_threshold}}},
        {"loss", {{"lambda", ex.loss.lambda}, {"epsilon", ex.loss.epsilon}}},
        {"train",
         {{"train_fraction", ex.train_fraction}, {"pretrain", stage_json(ex.pretrain)}, {"finetune", stage_json(ex.finetune)}}},
        {"evaluate",
         {{"baselines", baselines},
          {"ridge_alpha", ex.baseline_options.ridge_alpha},
          {"mlp_hidden", ex.baseline_options.mlp_hidden}}},
        {"ablation",
         {{"variants", cfg.ablation.variants},
          {"lambdas", cfg.ablation.lambdas},
          {"unfiltered", cfg.ablation.unfiltered},
          {"in_all", cfg.ablation.in_all}}},
    };
}

}  // namespace kgmlsm
