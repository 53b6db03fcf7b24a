#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgmlsm/cropsim.hpp"
#include "kgmlsm/experiment.hpp"

namespace kgmlsm {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AblationConfig {
    std::vector<std::string> variants = {"att_wo_sm", "att", "att_sim", "att_sim_w2s", "att_sim_w2s_smw", "kgml_sm"};
    std::vector<double> lambdas = {0.0, 1.0, 2.0, 5.0, 10.0};
    bool unfiltered = true;  // also pretrain on the unscreened field data
    bool in_all = false;     // run as part of `all`
};

struct RunConfig {
    std::filesystem::path run_dir;
    std::filesystem::path data_dir;  // defaults to <run_dir>/data

    std::vector<int> years;
    cropsim::FieldConfig field;
    cropsim::CountyConfig county;
    int history_years = 5;
    double drought_quantile = 0.2;

    bool filter_enabled = true;
    double filter_threshold = 0.5;

    experiment::Config experiment;
    AblationConfig ablation;
    bool parallel = true;

    Exec exec() const { return parallel ? Exec::parallel : Exec::serial; }
};

/// Parses a JSON config. Unknown keys and type errors raise ConfigError
/// naming the offending key path. Relative paths resolve against `base_dir`.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Full config with absolute paths; parse_config() accepts it unchanged.
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

}  // namespace kgmlsm
