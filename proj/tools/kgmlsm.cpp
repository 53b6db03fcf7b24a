#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "kgmlsm/config.hpp"
#include "kgmlsm/pipeline.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"kgmlsm: soil-moisture-aware crop yield pipeline"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> variant;
    std::optional<int> target_year;
    std::optional<std::string> run_dir;

    const char* names[] = {"simulate", "ingest", "filter", "pretrain", "finetune",
                           "evaluate", "ablate", "attn-report", "all"};
    const char* help[] = {"generate field samples and raw county inputs",
                          "build the county dataset from raw inputs",
                          "screen field samples against the county SM regressor",
                          "pretrain on the screened field data",
                          "finetune on county data before the target year",
                          "evaluate finetuned checkpoints and baselines",
                          "run the ablation grid",
                          "export attention weights",
                          "run every stage in order"};
    for (std::size_t i = 0; i < std::size(names); ++i) {
        auto* sub = app.add_subcommand(names[i], help[i]);
        sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "run a single seed");
        sub->add_option("--variant", variant, "model variant");
        sub->add_option("--target-year", target_year, "held-out year");
        sub->add_option("--run-dir", run_dir, "override paths.run_dir");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string subcommand = app.get_subcommands().front()->get_name();

    try {
        auto cfg = kgmlsm::load_config(config_path);
        if (seed) cfg.experiment.seeds = {*seed};
        if (variant) {
            kgmlsm::train::variant_by_name(*variant);
            cfg.experiment.variant = *variant;
            cfg.ablation.variants = {*variant};
        }
        if (target_year) cfg.experiment.target_year = *target_year;
        if (run_dir) {
            const bool default_data = cfg.data_dir == cfg.run_dir / "data";
            cfg.run_dir = fs::absolute(*run_dir).lexically_normal();
            if (default_data) cfg.data_dir = cfg.run_dir / "data";
        }
        kgmlsm::pipeline::run(subcommand, cfg, [](const std::string& msg) { std::cerr << msg << '\n'; });
    } catch (const std::exception& e) {
        std::cerr << "kgmlsm " << subcommand << ": error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
