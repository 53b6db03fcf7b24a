#include <cmath>
#include <random>

#include "doctest.h"
#include "kgmlsm/csv.hpp"
#include "kgmlsm/filter.hpp"
#include "support.hpp"

using namespace kgmlsm;
using namespace kgmlsm::filter;

namespace {

std::vector<Sample> tagged(std::size_t n) {
    auto s = testing::random_samples(n, 77);
    for (std::size_t i = 0; i < n; ++i) s[i].id = "F" + std::to_string(i);
    return s;
}

// Raw-unit model: intercept only.
LinearSMModel constant_model(double surface, double rootzone) {
    LinearSMModel m;
    m.weights(0, 0) = surface;
    m.weights(0, 1) = rootzone;
    return m;
}

}  // namespace

TEST_CASE("exact linear relation is recovered") {
    auto samples = testing::random_samples(20, 3);
    for (auto& s : samples)
        for (std::size_t t = 0; t < kTimesteps; ++t) {
            const double v = 0.01 * s.weather(t, 3) + 0.002 * s.weather(t, 1) + 0.1;
            s.sm(t, 0) = v;
            s.sm(t, 1) = v;
        }
    const auto m = fit_sm_regressor(samples, false);
    for (std::size_t c = 0; c < kSmChannels; ++c) {
        CHECK(m.weights(0, c) == doctest::Approx(0.1).epsilon(1e-8));
        CHECK(std::abs(m.weights(1, c)) < 1e-8);
        CHECK(m.weights(2, c) == doctest::Approx(0.002).epsilon(1e-8));
        CHECK(std::abs(m.weights(3, c)) < 1e-8);
        CHECK(m.weights(4, c) == doctest::Approx(0.01).epsilon(1e-8));
        CHECK(m.diagnostics.residual_mse[c] < 1e-16);
    }
    CHECK_FALSE(m.diagnostics.ridge_applied);
}

TEST_CASE("three-point line") {
    const auto ls = solve_least_squares({{1, 0}, {1, 1}, {1, 2}}, {{0}, {1}, {2}});
    CHECK(std::abs(ls.coef[0]) < 1e-12);
    CHECK(ls.coef[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant feature column triggers the ridge fallback") {
    const auto ls = solve_least_squares({{1, 3, 0.1}, {1, 3, 0.5}, {1, 3, 0.9}, {1, 3, 0.2}}, {{1}, {2}, {3}, {1.5}});
    CHECK(ls.ridge_applied);
    for (double c : ls.coef) CHECK(std::isfinite(c));
}

TEST_CASE("residuals are orthogonal to the design columns") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n;
    std::vector<std::vector<double>> x, y;
    for (int i = 0; i < 200; ++i) {
        x.push_back({1.0, n(rng), n(rng), n(rng)});
        y.push_back({n(rng), 2.0 * x.back()[1] + n(rng)});
    }
    const auto ls = solve_least_squares(x, y);
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 2; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                double pred = 0.0;
                for (std::size_t f = 0; f < 4; ++f) pred += x[i][f] * ls.coef[f * 2 + k];
                dot += x[i][j] * (y[i][k] - pred);
            }
            CHECK(std::abs(dot) < 1e-8);
        }
}

TEST_CASE("fitting needs data") {
    CHECK_THROWS_AS(fit_sm_regressor(std::vector<Sample>{}), std::invalid_argument);
}

TEST_CASE("sample score examples") {
    auto s = testing::random_samples(1, 5).front();
    for (std::size_t t = 0; t < kTimesteps; ++t) {
        s.sm(t, 0) = 0.2;
        s.sm(t, 1) = 0.3;
    }
    CHECK(score_sample(constant_model(0.2, 0.3), s) == 0.0);
    CHECK(score_sample(constant_model(0.7, 0.8), s) == doctest::Approx(0.25).epsilon(1e-12));

    auto m = constant_model(0.7, 0.8);
    m.target_scale = {0.5, 0.25};
    CHECK(score_sample(m, s) == doctest::Approx(0.5 * (1.0 + 4.0)).epsilon(1e-12));
}

TEST_CASE("score is invariant under a consistent timestep permutation") {
    auto samples = testing::random_samples(30, 8);
    const auto m = fit_sm_regressor(samples);
    auto s = samples[3];
    auto p = s;
    for (std::size_t t = 0; t < kTimesteps; ++t) {
        const std::size_t src = (t * 5) % kTimesteps;
        for (std::size_t c = 0; c < kWeatherChannels; ++c) p.weather(t, c) = s.weather(src, c);
        for (std::size_t c = 0; c < kSmChannels; ++c) p.sm(t, c) = s.sm(src, c);
    }
    CHECK(score_sample(m, p) == doctest::Approx(score_sample(m, s)).epsilon(1e-12));
}

TEST_CASE("threshold boundary") {
    const auto samples = tagged(3);
    const std::vector<double> mse = {0.4, 0.5, 0.6};
    const auto r = screen_by_score(samples, mse, 0.5);
    REQUIRE(r.kept.size() == 2);
    REQUIRE(r.discarded.size() == 1);
    CHECK(r.discarded[0].id == "F2");
    CHECK(r.mse == mse);
}

TEST_CASE("screening partitions, is idempotent and monotone in the threshold") {
    const auto samples = tagged(200);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.2);
    std::vector<double> mse;
    for (std::size_t i = 0; i < samples.size(); ++i) mse.push_back(u(rng));

    std::size_t prev = samples.size() + 1;
    for (double thr : {1.2, 1.0, 0.8, 0.5, 0.3, 0.0}) {
        const auto r = screen_by_score(samples, mse, thr);
        CHECK(r.kept.size() + r.discarded.size() == samples.size());
        for (const auto& k : r.kept)
            for (const auto& d : r.discarded) CHECK(k.id != d.id);
        CHECK(r.kept.size() <= prev);
        prev = r.kept.size();

        std::vector<double> kept_mse;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (mse[i] <= thr) kept_mse.push_back(mse[i]);
        const auto again = screen_by_score(r.kept, kept_mse, thr);
        CHECK(again.discarded.empty());
    }
}

TEST_CASE("model-based screening is idempotent and policy independent") {
    const auto county = testing::random_samples(40, 9);
    const auto field = tagged(60);
    const auto m = fit_sm_regressor(county);
    const auto a = screen_field_samples(field, m, 1.0, Exec::serial);
    const auto b = screen_field_samples(field, m, 1.0, Exec::parallel);
    CHECK(a.mse == b.mse);
    CHECK(screen_field_samples(a.kept, m, 1.0).discarded.empty());
}

TEST_CASE("filter report") {
    const auto samples = tagged(3);
    const auto dir = testing::scratch_dir("filter_report");
    write_filter_report(dir / "r.csv", samples, std::vector<double>{0.4, 0.5, 0.6}, 0.5);
    const auto t = read_csv(dir / "r.csv");
    CHECK(t.header == std::vector<std::string>{"id", "year", "mse", "kept"});
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[1][3] == "true");
    CHECK(t.rows[2][3] == "false");
}
