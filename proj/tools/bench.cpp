// Serial reference vs OpenMP kernels. Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include "kgmlsm/cropsim.hpp"
#include "kgmlsm/filter.hpp"
#include "kgmlsm/model.hpp"
#include "kgmlsm/train.hpp"

using namespace kgmlsm;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

const std::vector<Sample>& field_samples() {
    static const auto samples = [] {
        cropsim::FieldConfig fc;
        fc.n_stations = 16;
        fc.years = {2016, 2017, 2018, 2019, 2020, 2021, 2022};
        return cropsim::build_field_dataset(fc, Exec::serial).samples;
    }();
    return samples;
}

void BM_FieldSimulation(benchmark::State& state) {
    cropsim::FieldConfig fc;
    fc.n_stations = 16;
    fc.years = {2016, 2017, 2018, 2019, 2020, 2021, 2022};
    for (auto _ : state) benchmark::DoNotOptimize(cropsim::build_field_dataset(fc, exec_of(state)));
}

void BM_FilterScoring(benchmark::State& state) {
    const auto& field = field_samples();
    const auto model = filter::fit_sm_regressor(field);
    for (auto _ : state) benchmark::DoNotOptimize(filter::screen_field_samples(field, model, 0.5, exec_of(state)));
}

void BM_Predictions(benchmark::State& state) {
    const auto& field = field_samples();
    const auto& v = train::variant_by_name("kgml_sm");
    const auto arch = train::architecture_for(v);
    const auto scaler = model::Scaler::fit(field);
    const auto params = model::init_params(arch, 1);
    const auto factory = train::network_factory(v, arch, scaler, {});
    for (auto _ : state) benchmark::DoNotOptimize(train::evaluate(params, field, factory, exec_of(state)));
}

void BM_TrainEpoch(benchmark::State& state) {
    const auto& field = field_samples();
    auto cfg = train::pretrain_defaults();
    cfg.max_epochs = 1;
    cfg.rmse_target = 0.0;
    train::TrainContext ctx;
    ctx.exec = exec_of(state);
    for (auto _ : state)
        benchmark::DoNotOptimize(train::pretrain(field, train::variant_by_name("kgml_sm"), {}, cfg, 0, ctx));
}

}  // namespace

BENCHMARK(BM_FieldSimulation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FilterScoring)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Predictions)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
