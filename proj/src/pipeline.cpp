#include "kgmlsm/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "kgmlsm/attnreport.hpp"
#include "kgmlsm/csv.hpp"
#include "kgmlsm/filter.hpp"
#include "kgmlsm/ingest.hpp"

namespace kgmlsm::pipeline {

namespace fs = std::filesystem;

MissingArtifact::MissingArtifact(const fs::path& path, const std::string& producer)
    : std::runtime_error("missing " + path.string() + "; run `kgmlsm " + producer + "` first"), producer_(producer) {}

fs::path Layout::checkpoint(const std::string& variant, const char* stage, std::uint64_t seed) const {
    return run / "checkpoints" / (variant + "_" + stage + "_seed" + std::to_string(seed));
}

fs::path Layout::epochs(const std::string& variant, const char* stage, std::uint64_t seed) const {
    return run / "epochs" / (variant + "_" + stage + "_seed" + std::to_string(seed) + ".csv");
}

Layout layout(const RunConfig& cfg) { return {cfg.run_dir, cfg.data_dir}; }

namespace {

void require(const fs::path& path, const std::string& producer) {
    if (!fs::exists(path)) throw MissingArtifact(path, producer);
}

Dataset read_dataset(const fs::path& dir, Level level, const std::string& producer) {
    require(dir / "samples.csv", producer);
    auto ds = read_samples_csv(dir / "samples.csv", level);
    ds.validate();
    return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir);
    write_samples_csv(dir / "samples.csv", ds);
    write_manifest(dir / "manifest.json", ds);
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

train::TrainContext context(const RunConfig& cfg) {
    train::TrainContext ctx;
    ctx.exec = cfg.exec();
    return ctx;
}

model::Checkpoint load_pretrained(const Layout& lay, const train::Variant& v, std::uint64_t seed) {
    const auto stem = lay.checkpoint(v.name, "pretrain", seed);
    require(fs::path(stem.string() + ".json"), "pretrain");
    return model::load_checkpoint(stem, train::architecture_for(v));
}

model::Checkpoint load_finetuned(const Layout& lay, const train::Variant& v, std::uint64_t seed) {
    const auto stem = lay.checkpoint(v.name, "finetune", seed);
    require(fs::path(stem.string() + ".json"), "finetune");
    return model::load_checkpoint(stem, train::architecture_for(v));
}

void save_stage(const Layout& lay, const model::Checkpoint& ck, const char* stage) {
    const auto stem = lay.checkpoint(ck.variant, stage, ck.seed);
    fs::create_directories(stem.parent_path());
    model::save_checkpoint(stem, ck);
    fs::create_directories(lay.epochs(ck.variant, stage, ck.seed).parent_path());
    train::write_epochs_csv(lay.epochs(ck.variant, stage, ck.seed), train::history_from_json(ck.training));
}

std::string describe(const model::Checkpoint& ck) {
    return ck.variant + " seed " + std::to_string(ck.seed) + ": " + ck.training.at("epochs").dump() +
           " epochs, stop=" + ck.training.at("stop_reason").get<std::string>() +
           ", train rmse=" + fmt(ck.training.at("final_train_rmse").get<double>());
}

}  // namespace

void simulate(const RunConfig& cfg, const Log& log) {
    const auto lay = layout(cfg);
    const auto field = cropsim::build_field_dataset(cfg.field, cfg.exec());
    write_dataset(lay.field_dir(), field);
    log("simulate: " + std::to_string(field.samples.size()) + " field samples -> " + lay.field_dir().string());

    const auto world = cropsim::generate_county_world(cfg.county, cfg.exec());
    fs::create_directories(lay.raw_dir());
    ingest::write_pixels_csv(lay.raw_dir() / "pixels.csv", world.pixels);
    ingest::write_daily_csv(lay.raw_dir() / "daily.csv", world.daily);
    ingest::write_yields_csv(lay.raw_dir() / "yields.csv", world.yields);
    log("simulate: " + std::to_string(world.pixels.size()) + " pixels, " + std::to_string(world.daily.size()) +
        " daily rows -> " + lay.raw_dir().string());
}

void ingest(const RunConfig& cfg, const Log& log) {
    const auto lay = layout(cfg);
    for (const char* f : {"pixels.csv", "daily.csv", "yields.csv"}) require(lay.raw_dir() / f, "simulate");
    const auto pixels = ingest::read_pixels_csv(lay.raw_dir() / "pixels.csv");
    const auto daily = ingest::read_daily_csv(lay.raw_dir() / "daily.csv");
    const auto yields = ingest::read_yields_csv(lay.raw_dir() / "yields.csv");
    const auto county = ingest::build_county_dataset(pixels, daily, yields, cfg.history_years, cfg.drought_quantile);
    write_dataset(lay.county_dir(), county);
    log("ingest: " + std::to_string(county.samples.size()) + " county samples -> " + lay.county_dir().string());
}

void filter(const RunConfig& cfg, const Log& log) {
    const auto lay = layout(cfg);
    const auto field = read_dataset(lay.field_dir(), Level::field, "simulate");
    const auto county = read_dataset(lay.county_dir(), Level::county, "ingest");
    const auto model = filter::fit_sm_regressor(county.samples);
    const double threshold = cfg.filter_enabled ? cfg.filter_threshold : std::numeric_limits<double>::infinity();
    const auto screened = filter::screen_field_samples(field.samples, model, threshold, cfg.exec());
    filter::write_filter_report(lay.filter_report(), field.samples, screened.mse, threshold);
    Dataset kept{Level::field, kTimesteps, screened.kept};
    write_dataset(lay.filtered_dir(), kept);
    log("filter: kept " + std::to_string(screened.kept.size()) + " of " + std::to_string(field.samples.size()) +
        " field samples (threshold " + fmt(threshold) + (model.diagnostics.ridge_applied ? ", ridge fallback" : "") + ")");
}

void pretrain(const RunConfig& cfg, const Log& log) {
    const auto lay = layout(cfg);
    const auto& v = train::variant_by_name(cfg.experiment.variant);
    if (!v.pretrain) {
        log("pretrain: variant " + v.name + " has no pretraining stage");
        return;
    }
    const auto field = read_dataset(lay.filtered_dir(), Level::field, "filter");
    for (auto seed : cfg.experiment.seeds) {
        const auto ck = train::pretrain(field.samples, v, cfg.experiment.loss, cfg.experiment.pretrain, seed, context(cfg));
        save_stage(lay, ck, "pretrain");
        log("pretrain: " + describe(ck));
    }
}

void finetune(const RunConfig& cfg, const Log& log) {
    const auto lay = layout(cfg);
    const auto& v = train::variant_by_name(cfg.experiment.variant);
    const auto county = read_dataset(lay.county_dir(), Level::county, "ingest");
    for (auto seed : cfg.experiment.seeds) {
        std::optional<model::Checkpoint> init;
        if (v.pretrain) init = load_pretrained(lay, v, seed);
        const auto split =
            train::temporal_split(county.samples, {cfg.experiment.target_year, cfg.experiment.train_fraction, seed});
        const auto ck = train::finetune(init ? &*init : nullptr, split.train, split.val, v, cfg.experiment.loss,
                                        cfg.experiment.finetune, seed, context(cfg));
        save_stage(lay, ck, "finetune");
        log("finetune: " + describe(ck));
    }
}

void evaluate(const RunConfig& cfg, const Log& log) {
    const auto lay = layout(cfg);
    const auto& v = train::variant_by_name(cfg.experiment.variant);
    const auto county = read_dataset(lay.county_dir(), Level::county, "ingest");
    experiment::Result res;
    res.variant = v.name;
    res.lambda = v.overestimation ? cfg.experiment.loss.lambda : 0.0;
    res.tokens = train::architecture_for(v).token_count();
    res.target_year = cfg.experiment.target_year;

    CsvWriter errors(lay.run / "errors.csv");
    errors.row({"seed", "id", "year", "drought_flag", "y", "y_hat", "signed_error", "abs_error"});
    std::unique_ptr<CsvWriter> sm_errors;
    if (v.sm_source == model::SmSource::w2s) {
        sm_errors = std::make_unique<CsvWriter>(lay.run / "sm_errors.csv");
        sm_errors->row({"seed", "id", "year", "drought_flag", "yield_abs_error", "sm_abs_error"});
    }
    for (auto seed : cfg.experiment.seeds) {
        const auto split =
            train::temporal_split(county.samples, {cfg.experiment.target_year, cfg.experiment.train_fraction, seed});
        if (res.test.empty()) res.test = split.test;
        auto run = experiment::evaluate_checkpoint(load_finetuned(lay, v, seed), split.test, cfg.exec());
        run.baselines = experiment::run_baselines(split, cfg.experiment, seed, cfg.exec());
        for (const auto& r : eval::error_report(split.test, run.predictions).rows)
            errors.row({std::to_string(seed), r.id, std::to_string(r.year), r.drought ? "1" : "0", format_double(r.y),
                        format_double(r.y_hat), format_double(r.signed_error), format_double(r.abs_error)});
        if (sm_errors)
            for (const auto& r : eval::paired_errors(split.test, run.predictions, run.sm_hat))
                sm_errors->row({std::to_string(seed), r.id, std::to_string(r.year), r.drought ? "1" : "0",
                                format_double(r.yield_abs_error), format_double(r.sm_abs_error)});
        log("evaluate: seed " + std::to_string(seed) + " rmse=" + fmt(run.metrics.rmse) + " r2=" + fmt(run.metrics.r2));
        res.runs.push_back(std::move(run));
    }
    const auto j = experiment::metrics_json(res);
    write_json(lay.metrics(), j);
    log("evaluate: mean rmse=" + fmt(j["rmse"].get<double>()) + " r2=" + fmt(j["r2"].get<double>()) + " -> " +
        lay.metrics().string());
}

void ablate(const RunConfig& cfg, const Log& log) {
    const auto lay = layout(cfg);
    const auto filtered = read_dataset(lay.filtered_dir(), Level::field, "filter");
    const auto field = read_dataset(lay.field_dir(), Level::field, "simulate");
    const auto county = read_dataset(lay.county_dir(), Level::county, "ingest");

    fs::create_directories(lay.ablation_dir());
    CsvWriter summary(lay.ablation_dir() / "summary.csv");
    summary.row({"variant", "lambda", "field_data", "tokens", "rmse", "r2", "drought_mean_signed_error"});
    for (const auto& name : cfg.ablation.variants) {
        const auto& v = train::variant_by_name(name);
        std::vector<double> lambdas = {cfg.experiment.loss.lambda};
        if (v.overestimation) lambdas = cfg.ablation.lambdas;
        struct Job {
            double lambda;
            bool unfiltered;
        };
        std::vector<Job> jobs;
        for (double l : lambdas) jobs.push_back({l, false});
        if (v.pretrain && cfg.ablation.unfiltered) jobs.push_back({cfg.experiment.loss.lambda, true});

        for (const auto& job : jobs) {
            auto ec = cfg.experiment;
            ec.variant = name;
            ec.loss.lambda = job.lambda;
            ec.baselines.clear();
            const auto& fd = job.unfiltered ? field.samples : filtered.samples;
            const auto res = experiment::run_experiment(fd, county.samples, ec, context(cfg));
            auto j = experiment::metrics_json(res);
            j["field_data"] = job.unfiltered ? "unfiltered" : "filtered";
            std::string tag = name;
            if (v.overestimation) tag += "_lambda" + format_double(job.lambda);
            if (job.unfiltered) tag += "_unfiltered";
            write_json(lay.ablation_dir() / tag / "metrics.json", j);
            summary.row({name, format_double(res.lambda), job.unfiltered ? "unfiltered" : "filtered",
                         std::to_string(res.tokens), fmt(j["rmse"].get<double>()), fmt(j["r2"].get<double>()),
                         j["model"]["drought_mean_signed_error"].is_number()
                             ? fmt(j["model"]["drought_mean_signed_error"].get<double>())
                             : "nan"});
            log("ablate: " + tag + " tokens=" + std::to_string(res.tokens) + " rmse=" + fmt(j["rmse"].get<double>()));
        }
    }
}

void attn_report(const RunConfig& cfg, const Log& log) {
    const auto lay = layout(cfg);
    const auto& v = train::variant_by_name(cfg.experiment.variant);
    const auto county = read_dataset(lay.county_dir(), Level::county, "ingest");
    const auto seed = cfg.experiment.seeds.front();
    const auto ck = load_finetuned(lay, v, seed);
    const auto attention = attn::extract(ck.arch, ck.scaler, ck.params, county.samples, cfg.exec());
    const auto rows = attn::to_rows(ck.arch, attention);

    const auto dir = lay.attention_dir();
    fs::create_directories(dir);
    attn::write_raw_csv(dir / "attention_raw.csv", rows);
    const auto categories = attn::category_table(rows);
    attn::write_category_csv(dir / "attention_category.csv", categories);
    attn::write_category_svg(dir / "attention_category.svg", categories);
    attn::write_normalized_csv(dir / "attention_normalized.csv", attn::normalized_table(rows));
    if (ck.arch.has_sm_tokens()) {
        const auto sm = attn::sm_attention(rows);
        std::vector<double> values;
        std::unique_ptr<bool[]> drought(new bool[sm.size()]);
        for (std::size_t i = 0; i < sm.size(); ++i) {
            values.push_back(sm[i].value);
            drought[i] = attention[i].drought;
        }
        attn::write_box_csv(dir / "attention_box.csv",
                            attn::drought_distribution_stats(values, std::span<const bool>(drought.get(), sm.size())));
    }
    log("attn-report: " + std::to_string(attention.size()) + " samples, " + std::to_string(ck.arch.token_count()) +
        " tokens -> " + dir.string());
}

void all(const RunConfig& cfg, const Log& log) {
    simulate(cfg, log);
    ingest(cfg, log);
    filter(cfg, log);
    pretrain(cfg, log);
    finetune(cfg, log);
    evaluate(cfg, log);
    attn_report(cfg, log);
    if (cfg.ablation.in_all) ablate(cfg, log);
}

void run(const std::string& subcommand, const RunConfig& cfg, const Log& log) {
    using Stage = void (*)(const RunConfig&, const Log&);
    static const std::vector<std::pair<std::string, Stage>> stages = {
        {"simulate", simulate}, {"ingest", ingest},   {"filter", filter}, {"pretrain", pretrain},
        {"finetune", finetune}, {"evaluate", evaluate}, {"ablate", ablate}, {"attn-report", attn_report},
        {"all", all}};
    for (const auto& [name, fn] : stages) {
        if (name != subcommand) continue;
        fs::create_directories(cfg.run_dir);
        write_json(cfg.run_dir / "config_snapshot.json", config_to_json(cfg));
        fn(cfg, log);
        return;
    }
    throw std::invalid_argument("unknown subcommand: " + subcommand);
}

}  // namespace kgmlsm::pipeline
