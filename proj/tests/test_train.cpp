#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "kgmlsm/cropsim.hpp"
#include "kgmlsm/filter.hpp"
#include "kgmlsm/stats.hpp"
#include "kgmlsm/train.hpp"
#include "support.hpp"

using namespace kgmlsm;
using namespace kgmlsm::train;

namespace {

// Predicts a single scalar parameter; loss (w - y)^2.
class ScalarModel : public SampleModel {
public:
    explicit ScalarModel(const ParamStore* p) : p_(p) {}
    double forward(const Sample& s) override {
        y_ = s.yield;
        return (prediction() - y_) * (prediction() - y_);
    }
    void backward(Gradients& g, double scale) override { g.flat()[0] += scale * 2.0 * (prediction() - y_); }
    double prediction() const override { return p_->flat()[0]; }

private:
    const ParamStore* p_;
    double y_ = 0.0;
};

ParamStore scalar_params(double w) {
    ParamStore p;
    p.add("w", {1, 1});
    p.flat()[0] = w;
    return p;
}

ModelFactory scalar_factory() {
    return [](const ParamStore* p) { return std::make_unique<ScalarModel>(p); };
}

std::vector<Sample> with_yield(std::vector<Sample> s, double y) {
    for (auto& x : s) x.yield = y;
    return s;
}

StageConfig tiny(int epochs, std::size_t batch = 8) {
    StageConfig c;
    c.max_epochs = epochs;
    c.batch_size = batch;
    return c;
}

}  // namespace

TEST_CASE("temporal split by year") {
    const auto samples = testing::random_samples(125, 1, 2019, 2023);
    const auto split = temporal_split(samples, {2023, 0.8, 0});
    CHECK(split.test.size() == 25);
    for (const auto& s : split.test) CHECK(s.year == 2023);
    CHECK(split.train.size() == 80);
    CHECK(split.val.size() == 20);
    for (const auto& s : split.train) CHECK(s.year < 2023);
    for (const auto& s : split.val) CHECK(s.year < 2023);

    const auto again = temporal_split(samples, {2023, 0.8, 0});
    CHECK(again.train == split.train);
    const auto other = temporal_split(samples, {2023, 0.8, 1});
    CHECK(other.test == split.test);
    CHECK_FALSE(other.train == split.train);

    const auto earlier = temporal_split(samples, {2021, 0.8, 0});
    CHECK(earlier.excluded == 50);
    for (const auto& s : earlier.train) CHECK(s.year < 2021);
    CHECK_THROWS(temporal_split(samples, {2030, 0.8, 0}));
}

TEST_CASE("variant matrix") {
    CHECK(variants().size() == 6);
    CHECK(architecture_for(variant_by_name("att_wo_sm")).token_count() == 108);
    for (const auto& v : variants())
        if (v.name != "att_wo_sm") CHECK(architecture_for(v).token_count() == 134);
    loss::LossConfig zero;
    zero.lambda = 0.0;
    const auto smw = variant_by_name("att_sim_w2s_smw");
    const auto kg = variant_by_name("kgml_sm");
    const auto a = loss_settings_for(smw, zero), b = loss_settings_for(kg, zero);
    CHECK(a.lambda == b.lambda);
    CHECK(a.sm_term == b.sm_term);
    CHECK(smw.drought_weight == kg.drought_weight);
    CHECK(architecture_for(smw) == architecture_for(kg));
    CHECK_THROWS_AS(variant_by_name("nope"), std::invalid_argument);
}

TEST_CASE("strictly improving validation loss never stops early") {
    const auto train = with_yield(testing::random_samples(16, 2), 100.0);
    const auto val = with_yield(testing::random_samples(4, 3), 100.0);
    auto cfg = tiny(40);
    cfg.lr = 0.01;
    const auto r = fit(scalar_params(0.0), train, val, cfg, scalar_factory(), 0);
    CHECK(r.stop_reason == "max_epochs");
    CHECK(r.history.size() == 40);
    CHECK(r.best_epoch == 40);
}

TEST_CASE("early stopping restores the best validation epoch") {
    // Training pulls w towards 10, validation prefers 1: val loss rises once w passes 1.
    const auto train = with_yield(testing::random_samples(16, 2), 10.0);
    const auto val = with_yield(testing::random_samples(4, 3), 1.0);
    auto cfg = tiny(200);
    cfg.lr = 0.05;
    const auto r = fit(scalar_params(0.0), train, val, cfg, scalar_factory(), 0);
    CHECK(r.stop_reason == "early_stopping");
    CHECK(static_cast<int>(r.history.size()) == r.best_epoch + cfg.early_stopping_patience);
    CHECK(r.best_val_loss <= r.history.back().val_loss);
    CHECK(r.best_val_loss == r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_loss);
    CHECK(evaluate(r.params, val, scalar_factory()).mean_loss() == doctest::Approx(r.best_val_loss).epsilon(1e-14));
}

TEST_CASE("train-rmse stop rule") {
    const auto train = with_yield(testing::random_samples(16, 2), 3.0);
    auto cfg = tiny(500);
    cfg.stop_rule = StageConfig::StopRule::train_rmse;
    cfg.lr = 0.05;
    const auto r = fit(scalar_params(0.0), train, {}, cfg, scalar_factory(), 0);
    CHECK(r.stop_reason == "train_rmse_below_target");
    CHECK(r.final_train_rmse < 1.0);
    CHECK(r.history[r.history.size() - 2].rmse >= 1.0);
}

TEST_CASE("stage config validation") {
    auto c = tiny(0);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny(3, 0);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("pretraining is deterministic and its flag follows the rmse target") {
    auto field = testing::random_samples(32, 5);
    for (auto& s : field) s.vis = Tensor({kTimesteps, kViChannels});
    const auto& v = variant_by_name("kgml_sm");
    auto cfg = pretrain_defaults();
    cfg.max_epochs = 6;
    cfg.batch_size = 8;
    const auto a = pretrain(field, v, {}, cfg, 4);
    const auto b = pretrain(field, v, {}, cfg, 4);
    CHECK(params_hash(a.params) == params_hash(b.params));
    CHECK(a.training.dump() == b.training.dump());
    CHECK(a.training["target_met"].get<bool>() == (a.training["final_train_rmse"].get<double>() < 1.0));
    CHECK((a.training["stop_reason"] == "train_rmse_below_target") == a.training["target_met"].get<bool>());
}

TEST_CASE("training loss does not rise across five-epoch windows") {
    cropsim::FieldConfig fc;
    fc.n_stations = 8;
    fc.years = {2019, 2020, 2021, 2022};
    const auto field = cropsim::build_field_dataset(fc).samples;
    REQUIRE(field.size() == 32);
    const auto cfg = pretrain_defaults();  // one batch covers the toy set
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ck = pretrain(field, variant_by_name("kgml_sm"), {}, cfg, seed);
        const auto h = history_from_json(ck.training);
        for (std::size_t e = 5; e < h.size(); ++e) CHECK(h[e].train_loss <= h[e - 5].train_loss);
    }
}

TEST_CASE("serial and parallel training produce identical parameters") {
    const auto samples = testing::random_samples(40, 7);
    const auto& v = variant_by_name("kgml_sm");
    auto cfg = tiny(3);
    TrainContext serial, parallel;
    serial.exec = Exec::serial;
    parallel.exec = Exec::parallel;
    const auto a = finetune(nullptr, samples, {}, v, {}, cfg, 1, serial);
    const auto b = finetune(nullptr, samples, {}, v, {}, cfg, 1, parallel);
    CHECK(params_hash(a.params) == params_hash(b.params));
}

TEST_CASE("finetuning never sees the target year") {
    const auto samples = testing::random_samples(60, 8, 2018, 2023);
    const auto split = temporal_split(samples, {2023, 0.8, 0});
    TrainContext ctx;
    std::size_t seen = 0;
    ctx.on_batch = [&](std::span<const Sample* const> batch) {
        for (const auto* s : batch) {
            CHECK(s->year < 2023);
            ++seen;
        }
    };
    finetune(nullptr, split.train, split.val, variant_by_name("att"), {}, tiny(2), 0, ctx);
    CHECK(seen == 2 * split.train.size());
}

TEST_CASE("architecture mismatch between stages is rejected") {
    auto field = testing::random_samples(16, 9);
    for (auto& s : field) s.vis = Tensor({kTimesteps, kViChannels});
    auto cfg = tiny(1);
    const auto pre = pretrain(field, variant_by_name("att_sim"), {}, cfg, 0);
    CHECK_THROWS_AS(finetune(&pre, field, {}, variant_by_name("kgml_sm"), {}, cfg, 0), std::runtime_error);
}

TEST_CASE("pretrained start reaches a validation target no later than a cold start") {
    std::vector<int> years;
    for (int y = 2015; y <= 2023; ++y) years.push_back(y);
    cropsim::CountyConfig cc;
    cc.years = years;
    cc.n_counties = 30;
    const auto world = cropsim::generate_county_world(cc);
    const auto county = ingest::build_county_dataset(world.pixels, world.daily, world.yields);
    cropsim::FieldConfig fc;
    fc.years = years;
    fc.n_stations = 30;
    const auto field = cropsim::build_field_dataset(fc);
    const auto kept = filter::screen_field_samples(field.samples, filter::fit_sm_regressor(county.samples)).kept;

    const auto& warm_v = variant_by_name("att_sim");
    const auto& cold_v = variant_by_name("att");
    std::vector<double> warm_epochs, cold_epochs;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto split = temporal_split(county.samples, {2023, 0.8, seed});
        const auto pre = pretrain(kept, warm_v, {}, pretrain_defaults(), seed);
        const auto warm = finetune(&pre, split.train, split.val, warm_v, {}, finetune_defaults(), seed);
        const auto cold = finetune(nullptr, split.train, split.val, cold_v, {}, finetune_defaults(), seed);
        const auto hw = history_from_json(warm.training), hc = history_from_json(cold.training);
        // Target: the worse of the two best validation losses, so both runs reach it.
        const double target = std::max(warm.training["best_val_loss"].get<double>(), cold.training["best_val_loss"].get<double>());
        auto first_at = [&](const std::vector<EpochRecord>& h) {
            for (const auto& e : h)
                if (e.val_loss <= target) return static_cast<double>(e.epoch);
            return static_cast<double>(h.size() + 1);
        };
        warm_epochs.push_back(first_at(hw));
        cold_epochs.push_back(first_at(hc));
    }
    CHECK(quantile_linear(warm_epochs, 0.5) <= quantile_linear(cold_epochs, 0.5));
}
