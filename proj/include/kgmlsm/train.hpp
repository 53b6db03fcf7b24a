#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kgmlsm/dataset.hpp"
#include "kgmlsm/graph.hpp"
#include "kgmlsm/loss.hpp"
#include "kgmlsm/model.hpp"
#include "kgmlsm/parallel.hpp"

namespace kgmlsm::train {

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
    int target_year = 0;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct Split {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
    std::size_t excluded = 0;  // samples after the target year
};

/// Test = target-year samples; earlier samples are shuffled by seed and cut
/// at floor(train_fraction * n). Samples after the target year are dropped.
Split temporal_split(std::span<const Sample> samples, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Variants

struct Variant {
    std::string name;
    model::SmSource sm_source = model::SmSource::w2s;
    bool pretrain = true;
    bool drought_weight = true;
    bool overestimation = true;
};

/// att_wo_sm, att, att_sim, att_sim_w2s, att_sim_w2s_smw, kgml_sm.
const std::vector<Variant>& variants();
const Variant& variant_by_name(const std::string& name);

model::Architecture architecture_for(const Variant& v);
model::LossSettings loss_settings_for(const Variant& v, const loss::LossConfig& cfg);

// ---------------------------------------------------------------------------
// Optimization loop

struct StageConfig {
    enum class StopRule { train_rmse, early_stopping };

    std::size_t batch_size = 16;
    double lr = 1e-3;
    int scheduler_patience = 5;
    double scheduler_factor = 0.5;
    double min_lr = 1e-6;
    int max_epochs = 30;
    StopRule stop_rule = StopRule::early_stopping;
    double rmse_target = 1.0;
    int early_stopping_patience = 10;

    void validate() const;
};

StageConfig pretrain_defaults();
StageConfig finetune_defaults();

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double lr = 0.0;
    double rmse = 0.0;  // training-set yield RMSE after the epoch
};

struct TrainResult {
    ParamStore params;
    std::vector<EpochRecord> history;
    std::string stop_reason;
    int best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::quiet_NaN();
    double final_train_rmse = 0.0;
};

/// Per-worker evaluator of one sample's loss and prediction.
class SampleModel {
public:
    virtual ~SampleModel() = default;
    /// Runs the forward pass and returns the sample loss.
    virtual double forward(const Sample& s) = 0;
    /// Accumulates scale * d(loss)/d(params) of the last forward pass.
    virtual void backward(Gradients& grads, double scale) = 0;
    virtual double prediction() const = 0;
};

using ModelFactory = std::function<std::unique_ptr<SampleModel>(const ParamStore* params)>;

/// Called with every minibatch before its parameter update.
using BatchObserver = std::function<void(std::span<const Sample* const> batch)>;

struct TrainContext {
    Exec exec = Exec::parallel;
    BatchObserver on_batch;
};

/// Adam + plateau scheduler minibatch loop. Per-sample gradients may be
/// computed concurrently; they are summed in batch order so results do not
/// depend on the execution policy.
TrainResult fit(ParamStore init, std::span<const Sample> train, std::span<const Sample> val, const StageConfig& cfg,
                const ModelFactory& factory, std::uint64_t seed, const TrainContext& ctx = {});

/// Losses and predictions of `samples` under fixed params.
struct Evaluation {
    std::vector<double> loss;
    std::vector<double> prediction;
    double mean_loss() const;
};
Evaluation evaluate(const ParamStore& params, std::span<const Sample> samples, const ModelFactory& factory,
                    Exec exec = Exec::parallel);

ModelFactory network_factory(const Variant& v, const model::Architecture& arch, const model::Scaler& scaler,
                             const loss::LossConfig& loss_cfg);

std::uint64_t params_hash(const ParamStore& params);

// ---------------------------------------------------------------------------
// Stages

model::Checkpoint pretrain(std::span<const Sample> field, const Variant& v, const loss::LossConfig& loss_cfg,
                           const StageConfig& cfg, std::uint64_t seed, const TrainContext& ctx = {});

/// Starts from `init` when given (architecture must match the variant);
/// otherwise from a fresh initialization with a scaler fitted on `train`.
model::Checkpoint finetune(const model::Checkpoint* init, std::span<const Sample> train, std::span<const Sample> val,
                           const Variant& v, const loss::LossConfig& loss_cfg, const StageConfig& cfg,
                           std::uint64_t seed, const TrainContext& ctx = {});

std::vector<EpochRecord> history_from_json(const nlohmann::ordered_json& training);
void write_epochs_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace kgmlsm::train
