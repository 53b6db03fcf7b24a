#include <cmath>
#include <set>

#include "doctest.h"
#include "kgmlsm/model.hpp"
#include "kgmlsm/train.hpp"
#include "support.hpp"

using namespace kgmlsm;
using namespace kgmlsm::model;

namespace {

struct Fixture {
    std::vector<Sample> samples = testing::random_samples(10, 31);
    Architecture arch;
    Scaler scaler = Scaler::fit(samples);
    ParamStore params = init_params(arch, 3);
};

double sum(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

TEST_CASE("token counts per variant") {
    CHECK(Architecture{SmSource::w2s}.token_count() == 134);
    CHECK(Architecture{SmSource::observed}.token_count() == 134);
    CHECK(Architecture{SmSource::none}.token_count() == 108);
    CHECK(token_layout(Architecture{SmSource::none}).size() == 108);

    const auto layout = token_layout(Architecture{});
    CHECK(layout[0].channel == 0);
    CHECK(layout[0].timestep == 0);
    CHECK(layout[13].channel == 1);
    CHECK(layout[52].timestep == -1);  // auxiliary block follows the weather block
    CHECK(layout.back().channel == 9);
    CHECK(layout.back().timestep == 12);
    std::set<std::pair<std::size_t, int>> unique;
    for (const auto& t : layout) unique.insert({t.channel, t.timestep});
    CHECK(unique.size() == layout.size());
}

TEST_CASE("one-hot features make equal-valued tokens distinguishable") {
    const Architecture arch;
    const auto oh = token_onehots(arch);
    CHECK(oh.rows() == arch.token_count());
    for (std::size_t i = 0; i < oh.rows(); ++i)
        for (std::size_t j = i + 1; j < oh.rows(); ++j) {
            bool differ = false;
            for (std::size_t c = 0; c < oh.cols() && !differ; ++c) differ = oh(i, c) != oh(j, c);
            CHECK(differ);
        }
}

TEST_CASE("field samples give zero VI tokens") {
    Fixture f;
    auto s = f.samples[0];
    s.vis = Tensor({kTimesteps, kViChannels});
    const auto tokens = assemble_input(Architecture{SmSource::observed}, f.scaler, s);
    const auto layout = token_layout(Architecture{SmSource::observed});
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (layout[i].channel >= 4 && layout[i].channel < 8) CHECK(tokens[i] == 0.0);
}

TEST_CASE("token assembly is a pure function of the sample") {
    Fixture f;
    const Architecture arch{SmSource::observed};
    const auto a = assemble_input(arch, f.scaler, f.samples[0]);
    const auto b = assemble_input(arch, f.scaler, f.samples[1]);
    CHECK(a != b);
    CHECK(assemble_input(arch, f.scaler, f.samples[0]) == a);
}

TEST_CASE("weather padding repeats the last composite") {
    Fixture f;
    const auto w = padded_weather(f.scaler, f.samples[0]);
    REQUIRE(w.size() == kPaddedSteps * kWeatherChannels);
    for (std::size_t t = kTimesteps; t < kPaddedSteps; ++t)
        for (std::size_t c = 0; c < kWeatherChannels; ++c)
            CHECK(w[t * kWeatherChannels + c] == w[(kTimesteps - 1) * kWeatherChannels + c]);
}

TEST_CASE("W2S output shape and determinism") {
    Fixture f;
    const auto p = predict(f.arch, f.scaler, f.params, f.samples[0]);
    CHECK(p.sm_hat.shape() == Shape{kTimesteps, kSmChannels});
    const auto q = predict(f.arch, f.scaler, f.params, f.samples[0]);
    CHECK(p.sm_hat == q.sm_hat);
    CHECK(p.y_hat == q.y_hat);
    CHECK(p.alpha == q.alpha);
    CHECK(predict(Architecture{SmSource::observed}, f.scaler, init_params(Architecture{SmSource::observed}, 3),
                  f.samples[0]).sm_hat.size() == 0);
}

TEST_CASE("weather perturbation moves the soil-moisture estimate") {
    Fixture f;
    auto s = f.samples[2];
    const auto base = predict(f.arch, f.scaler, f.params, s).sm_hat;
    s.weather(6, 3) += 5.0;
    const auto moved = predict(f.arch, f.scaler, f.params, s).sm_hat;
    double diff = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) diff = std::max(diff, std::abs(base[i] - moved[i]));
    CHECK(diff > 1e-9);
}

TEST_CASE("attention weights are a distribution") {
    Fixture f;
    for (const auto& s : f.samples) {
        const auto p = predict(f.arch, f.scaler, f.params, s);
        REQUIRE(p.alpha.size() == 134);
        CHECK(std::abs(sum(p.alpha) - 1.0) < 1e-9);
        for (double a : p.alpha) CHECK(a > 0.0);
    }
}

TEST_CASE("identical tokens get uniform attention") {
    // With zero one-hot and embedding weights every token embeds identically.
    const Architecture arch{SmSource::observed};
    auto params = init_params(arch, 1);
    params.set("attn.embed.weight", Tensor(params.get("attn.embed.weight").shape(), 0.0));
    const std::vector<double> tokens(arch.token_count(), 0.7);
    const auto p = attention_forward(arch, params, tokens);
    for (double a : p.alpha) CHECK(a == doctest::Approx(1.0 / 134.0).epsilon(1e-12));
}

TEST_CASE("score shift leaves attention and prediction unchanged") {
    Fixture f;
    Network plain(f.arch, f.scaler, &f.params), shifted(f.arch, f.scaler, &f.params, {}, 7.5);
    plain.set_sample(f.samples[4]);
    shifted.set_sample(f.samples[4]);
    plain.forward();
    shifted.forward();
    CHECK(shifted.y_hat() == doctest::Approx(plain.y_hat()).epsilon(1e-12));
    for (std::size_t i = 0; i < plain.alpha().size(); ++i)
        CHECK(shifted.alpha()[i] == doctest::Approx(plain.alpha()[i]).epsilon(1e-12));
}

TEST_CASE("predict agrees with the attention head on the assembled tokens") {
    Fixture f;
    Network net(f.arch, f.scaler, &f.params);
    net.set_sample(f.samples[5]);
    net.forward();
    const auto direct = attention_forward(f.arch, f.params, net.token_values());
    const auto p = predict(f.arch, f.scaler, f.params, f.samples[5]);
    REQUIRE(direct.alpha.size() == p.alpha.size());
    for (std::size_t i = 0; i < p.alpha.size(); ++i) CHECK(direct.alpha[i] == doctest::Approx(p.alpha[i]).epsilon(1e-12));
    CHECK(f.scaler.yield_mean + f.scaler.yield_std * direct.y_hat == doctest::Approx(p.y_hat).epsilon(1e-12));
}

TEST_CASE("full-model gradients match central differences") {
    const auto r = testing::full_model_gradcheck(11);
    INFO("worst parameter index " << r.worst_index << ", kinks " << r.kinks << " of " << r.checked);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.kinks * 100 <= r.checked);
}

TEST_CASE("attention-only gradients match central differences") {
    Fixture f;
    const Architecture arch{SmSource::none};
    auto params = init_params(arch, 4);
    Network net(arch, f.scaler, &params, {true, 2.0, false});
    net.set_sample(f.samples[0], 0.8);
    net.forward();
    Gradients g(params);
    net.backward(g, 1.0);
    const auto r = testing::check_gradients(params, g.flat(), [&] {
        net.forward();
        return net.loss();
    });
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.kinks * 100 <= r.checked);
}

TEST_CASE("initialization bounds") {
    const auto params = init_params(Architecture{}, 9);
    for (const auto& info : params.infos()) {
        const auto v = params.values(params.index_of(info.name));
        const bool bias = info.name.ends_with(".bias");
        const double bound = 1.0 / std::sqrt(static_cast<double>(info.shape[0]));
        for (double x : v) {
            if (bias)
                CHECK(x == 0.0);
            else
                CHECK(std::abs(x) <= bound);
        }
    }
    CHECK(init_params(Architecture{}, 9).flat()[5] == params.flat()[5]);
}

TEST_CASE("scaler keeps VIs unscaled") {
    Fixture f;
    for (std::size_t c = 4; c < 8; ++c) {
        CHECK(f.scaler.mean[c] == 0.0);
        CHECK(f.scaler.std[c] == 1.0);
    }
    CHECK(f.scaler.std[0] > 0.0);
}

TEST_CASE("checkpoint round trip and validation") {
    Fixture f;
    Checkpoint ck{"kgml_sm", f.arch, f.scaler, f.params, 3, {{"note", "x"}}};
    const auto dir = testing::scratch_dir("ckpt");
    save_checkpoint(dir / "m", ck);
    const auto back = load_checkpoint(dir / "m", f.arch);
    CHECK(back.variant == "kgml_sm");
    CHECK(back.scaler == f.scaler);
    CHECK(back.seed == 3);
    CHECK(std::equal(back.params.flat().begin(), back.params.flat().end(), f.params.flat().begin()));
    CHECK(train::params_hash(back.params) == train::params_hash(f.params));

    CHECK_THROWS(load_checkpoint(dir / "m", Architecture{SmSource::none}));
    std::filesystem::resize_file(dir / "m.bin", 16);
    CHECK_THROWS(load_checkpoint(dir / "m"));
    CHECK_THROWS(load_checkpoint(dir / "absent"));
}
