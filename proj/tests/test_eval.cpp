#include <cmath>
#include <random>

#include "doctest.h"
#include "kgmlsm/csv.hpp"
#include "kgmlsm/eval.hpp"
#include "kgmlsm/experiment.hpp"
#include "support.hpp"

using namespace kgmlsm;
using namespace kgmlsm::eval;

namespace {

std::vector<Sample> labelled(const std::vector<double>& y, const std::vector<bool>& drought = {}) {
    auto s = testing::random_samples(y.size(), 4);
    for (std::size_t i = 0; i < y.size(); ++i) {
        s[i].yield = y[i];
        s[i].drought = drought.empty() ? false : drought[i];
    }
    return s;
}

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("rmse and r2 worked values") {
    CHECK(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
    CHECK(r2(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}) == doctest::Approx(0.5).epsilon(1e-12));
    const std::vector<double> y = {1, 4, 2, 8};
    CHECK(rmse(y, y) == 0.0);
    CHECK(r2(y, y) == 1.0);
    CHECK(r2(y, std::vector<double>(4, 3.75)) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS(rmse(y, std::vector<double>{1}));
    CHECK_THROWS(r2(std::vector<double>{2, 2}, std::vector<double>{1, 2}));
}

TEST_CASE("metric cross-checks on random vectors") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(10.0, 2.0);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> y(25), p(25);
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = n(rng);
            p[i] = n(rng);
        }
        double se = 0.0, ybar = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            se += (y[i] - p[i]) * (y[i] - p[i]);
            ybar += y[i];
        }
        ybar /= 25.0;
        double sst = 0.0;
        for (double v : y) sst += (v - ybar) * (v - ybar);
        CHECK(std::abs(rmse(y, p) - std::sqrt(se / 25.0)) < 1e-12);
        CHECK(std::abs(r2(y, p) - (1.0 - se / sst)) < 1e-12);
        CHECK(rmse(y, p) == rmse(p, y));
    }
}

TEST_CASE("error report groups") {
    auto s = labelled({5.0, 5.0, 7.0}, {true, false, true});
    const auto r = error_report(s, std::vector<double>{6.0, 4.0, 7.0});
    CHECK(r.all.mean_signed == doctest::Approx(0.0));
    CHECK(r.all.mean_abs == doctest::Approx(2.0 / 3.0));
    CHECK(r.drought.n == 2);
    CHECK(r.drought.mean_signed == doctest::Approx(0.5));
    CHECK(r.nondrought.mean_signed == doctest::Approx(-1.0));

    const auto perfect = error_report(s, std::vector<double>{5.0, 5.0, 7.0});
    for (const auto& row : perfect.rows) CHECK(row.signed_error == 0.0);

    auto two = labelled({3.0, 3.0});
    const auto t = error_report(two, std::vector<double>{4.0, 2.0});
    CHECK(t.all.mean_signed == 0.0);
    CHECK(t.all.mean_abs == 1.0);
    CHECK(std::isnan(t.drought.mean_signed));

    const auto m = metrics(s, std::vector<double>{6.0, 4.0, 7.0});
    double sq = 0.0;
    for (const auto& row : r.rows) sq += row.signed_error * row.signed_error;
    CHECK(m.rmse * m.rmse == doctest::Approx(sq / 3.0).epsilon(1e-14));
    CHECK(m.drought_mean_signed_error == doctest::Approx(0.5));
}

TEST_CASE("linear regression recovers exact relations; ridge shrinks") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    std::vector<std::vector<double>> x;
    std::vector<double> y, noisy;
    for (int i = 0; i < 60; ++i) {
        x.push_back({n(rng), n(rng), n(rng)});
        y.push_back(1.5 * x.back()[0] - 2.0 * x.back()[1] + 0.5 * x.back()[2] + 4.0);
        noisy.push_back(y.back() + n(rng));
    }
    const auto lr = fit_linear(x, y, 0.0);
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) se += std::pow(lr.predict(x[i]) - y[i], 2);
    CHECK(std::sqrt(se / 60.0) < 1e-8);

    const auto ols = fit_linear(x, noisy, 0.0);
    const auto tiny = fit_linear(x, noisy, 1e-10);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(ols.coef[j] - tiny.coef[j]) < 1e-6);
    for (double alpha : {0.1, 1.0, 10.0, 100.0}) CHECK(norm(fit_linear(x, noisy, alpha).coef) <= norm(ols.coef));
}

TEST_CASE("baselines predict one value per test sample") {
    const auto samples = testing::random_samples(60, 5);
    const std::span<const Sample> all(samples);
    BaselineOptions opts;
    opts.mlp_stage.max_epochs = 3;
    for (auto kind : {BaselineKind::ridge, BaselineKind::mlp}) {
        const auto a = baseline_fit_predict(kind, all.subspan(0, 40), all.subspan(40, 10), all.subspan(50), 0, opts);
        CHECK(a.size() == 10);
        for (double v : a) CHECK(std::isfinite(v));
        CHECK(a == baseline_fit_predict(kind, all.subspan(0, 40), all.subspan(40, 10), all.subspan(50), 0, opts));
    }
    CHECK(flatten_features(samples[0]).size() == 134);
    CHECK(baseline_from_string("Ridge") == BaselineKind::ridge);
    CHECK_THROWS(baseline_from_string("RF"));
}

TEST_CASE("reported rmse is the mean of the per-seed values") {
    experiment::Result r;
    r.variant = "att";
    r.tokens = 134;
    r.test = testing::random_samples(4, 1);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        experiment::SeedRun run;
        run.seed = seed;
        run.metrics.rmse = 0.5 + 0.1 * static_cast<double>(seed);
        run.metrics.r2 = 0.9;
        r.runs.push_back(run);
    }
    const auto j = experiment::metrics_json(r);
    CHECK(j["rmse"].get<double>() == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(j["model"]["per_seed"]["rmse"].size() == 3);
    CHECK(j["model"]["per_seed"]["seed"][2] == 2);
}

TEST_CASE("error csv") {
    auto s = labelled({5.0, 6.0}, {true, false});
    const auto dir = testing::scratch_dir("errors");
    write_errors_csv(dir / "e.csv", error_report(s, std::vector<double>{5.5, 5.0}));
    const auto t = read_csv(dir / "e.csv");
    CHECK(t.header.size() == 7);
    CHECK(parse_double(t.rows[1][t.column("signed_error")]) == -1.0);
}
