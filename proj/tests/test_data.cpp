#include <cmath>
#include <random>

#include "doctest.h"
#include "kgmlsm/csv.hpp"
#include "kgmlsm/dataset.hpp"
#include "kgmlsm/ingest.hpp"
#include "kgmlsm/stats.hpp"
#include "support.hpp"

using namespace kgmlsm;

TEST_CASE("csv parses quoted fields and CRLF") {
    const auto t = parse_csv("a,b,c\r\n1,\"x,y\",\"he said \"\"hi\"\"\"\r\n2,,z\n");
    REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "x,y");
    CHECK(t.rows[0][2] == "he said \"hi\"");
    CHECK(t.rows[1][1].empty());
    CHECK(t.column("c") == 2);
    CHECK_THROWS(t.column("missing"));
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
}

TEST_CASE("format_double round-trips") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK(parse_int("42") == 42);
    CHECK(parse_bool("1"));
    CHECK_FALSE(parse_bool("false"));
    CHECK_THROWS(parse_double("1.5x"));
}

TEST_CASE("quantile and box stats") {
    const std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8, 9, 100};
    CHECK(quantile_linear(v, 0.0) == 1.0);
    CHECK(quantile_linear(v, 1.0) == 100.0);
    CHECK(quantile_linear(v, 0.5) == doctest::Approx(5.5));
    CHECK(quantile_linear(v, 0.25) == doctest::Approx(3.25));
    const auto b = box_stats(v);
    CHECK(b.n == 10);
    CHECK(b.median == doctest::Approx(5.5));
    CHECK(b.iqr == doctest::Approx(b.q3 - b.q1));
    CHECK(b.outliers == 1);
    CHECK(b.whisker_high == 9.0);
    CHECK_THROWS(box_stats(std::vector<double>{}));
    CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0));
}

TEST_CASE("vegetation index worked values") {
    ingest::Bands b;
    b.nir = 0.4;
    b.green = 0.2;
    b.red = 0.1;
    b.blue = 0.05;
    b.swir = 0.2;
    CHECK(ingest::compute_vi(b).values[0] == doctest::Approx(1.0).epsilon(1e-12));

    b = {};
    b.nir = 0.3;
    b.red = 0.3;
    b.green = 0.1;
    b.swir = 0.1;
    auto vi = ingest::compute_vi(b);
    CHECK(vi.values[3] == 0.0);
    CHECK(vi.values[2] == doctest::Approx(0.5).epsilon(1e-12));

    b = {};
    b.nir = 0.5;
    b.red = 0.2;
    b.blue = 0.05;
    b.green = 0.1;
    b.swir = 0.1;
    CHECK(ingest::compute_vi(b).values[1] == doctest::Approx(0.75 / 2.325).epsilon(1e-12));
}

TEST_CASE("zero denominators mark the index invalid") {
    ingest::Bands b;  // all zero
    const auto vi = ingest::compute_vi(b);
    CHECK_FALSE(vi.valid[0]);
    CHECK_FALSE(vi.valid[2]);
    CHECK_FALSE(vi.valid[3]);
    CHECK(vi.valid[1]);  // EVI denominator has the +1 term
}

TEST_CASE("normalized indices stay in range for random reflectances") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 5000; ++i) {
        ingest::Bands b{u(rng), u(rng), u(rng), u(rng), u(rng)};
        const auto vi = ingest::compute_vi(b);
        if (vi.valid[0]) CHECK(vi.values[0] >= -1.0);
        if (vi.valid[2]) CHECK(std::abs(vi.values[2]) <= 1.0);
        if (vi.valid[3]) CHECK(std::abs(vi.values[3]) <= 1.0);
    }
}

TEST_CASE("spatial average respects the crop mask") {
    auto px = [](double red, bool mask) {
        ingest::PixelRecord p;
        p.county_id = "C1";
        p.date = "2020-06-01";
        p.bands = {red, 0.5, 0.05, 0.1, 0.2};
        p.corn_mask = mask;
        return p;
    };
    const std::vector<ingest::PixelRecord> pixels = {px(0.2, true), px(0.4, true), px(9.9, false)};
    const auto m = ingest::spatial_average(pixels, "C1", "2020-06-01");
    CHECK(m.pixels == 2);
    CHECK(m.bands[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK_THROWS_AS(ingest::spatial_average(pixels, "C1", "2020-06-02"), ingest::MissingCoverage);
    const std::vector<ingest::PixelRecord> unmasked = {px(0.2, false)};
    try {
        ingest::spatial_average(unmasked, "C1", "2020-06-01");
        FAIL("expected MissingCoverage");
    } catch (const ingest::MissingCoverage& e) {
        CHECK(e.county() == "C1");
        CHECK(e.date() == "2020-06-01");
    }
}

TEST_CASE("season calendar") {
    CHECK(ingest::season_day("2021-04-01") == 0);
    CHECK(ingest::season_day("2021-10-31") == 213);
    CHECK(ingest::season_day("2020-03-31") < 0);
    CHECK(ingest::season_date(2020, 0) == "2020-04-01");
    CHECK(ingest::season_date(2020, 213) == "2020-10-31");
    CHECK(ingest::date_year("2019-07-04") == 2019);
    CHECK(kSeasonDays / kWindowDays == 13);
}

TEST_CASE("16-day compositing") {
    std::vector<double> c(kSeasonDays, 2.5);
    for (double v : ingest::composite_16day(c, CompositeRule::mean)) CHECK(v == 2.5);
    for (double v : ingest::composite_16day(c, CompositeRule::sum)) CHECK(v == doctest::Approx(40.0));

    std::vector<double> x(kSeasonDays), y(kSeasonDays);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    for (std::size_t i = 0; i < kSeasonDays; ++i) {
        x[i] = n(rng);
        y[i] = n(rng);
    }
    double first = 0.0;
    for (int d = 0; d < 16; ++d) first += x[d];
    const auto cx = ingest::composite_16day(x, CompositeRule::mean);
    CHECK(cx.size() == kTimesteps);
    CHECK(cx[0] == doctest::Approx(first / 16.0).epsilon(1e-12));

    std::vector<double> z(kSeasonDays);
    for (std::size_t i = 0; i < kSeasonDays; ++i) z[i] = 2.0 * x[i] - 3.0 * y[i];
    const auto cy = ingest::composite_16day(y, CompositeRule::mean);
    const auto cz = ingest::composite_16day(z, CompositeRule::mean);
    for (std::size_t t = 0; t < kTimesteps; ++t) CHECK(cz[t] == doctest::Approx(2.0 * cx[t] - 3.0 * cy[t]).epsilon(1e-12));

    CHECK_THROWS(ingest::composite_16day(std::vector<double>(207, 0.0), CompositeRule::mean));
}

TEST_CASE("seasonal soil moisture mean") {
    Tensor sm({kTimesteps, kSmChannels});
    for (std::size_t t = 0; t < kTimesteps; ++t) {
        sm(t, 0) = 0.2;
        sm(t, 1) = 0.4;
    }
    CHECK(ingest::seasonal_sm_mean(sm) == doctest::Approx(0.3).epsilon(1e-12));

    std::mt19937_64 rng(4);
    auto s = testing::random_sample(rng, 2020, "X");
    const double before = ingest::seasonal_sm_mean(s);
    Tensor permuted = s.sm;
    for (std::size_t t = 0; t < kTimesteps; ++t)
        for (std::size_t c = 0; c < kSmChannels; ++c) permuted(t, c) = s.sm(kTimesteps - 1 - t, c);
    CHECK(ingest::seasonal_sm_mean(permuted) == doctest::Approx(before).epsilon(1e-14));
}

TEST_CASE("drought labels use the per-year quantile") {
    Dataset ds;
    for (int i = 1; i <= 10; ++i) {
        Sample s;
        s.id = "C" + std::to_string(i);
        s.year = 2020;
        s.sbar = 0.1 * i;
        ds.samples.push_back(s);
    }
    ingest::label_drought(ds, 0.2);
    int flagged = 0;
    for (const auto& s : ds.samples) flagged += s.drought;
    CHECK(flagged == 2);
    CHECK(ds.samples[0].drought);
    CHECK(ds.samples[1].drought);

    for (auto& s : ds.samples) s.sbar = 0.3;
    ingest::label_drought(ds, 0.2);
    for (const auto& s : ds.samples) CHECK_FALSE(s.drought);
}

TEST_CASE("samples csv round trip") {
    Dataset ds;
    ds.samples = testing::random_samples(12, 21);
    const auto dir = testing::scratch_dir("roundtrip");
    write_samples_csv(dir / "samples.csv", ds);
    const auto back = read_samples_csv(dir / "samples.csv", Level::county);
    CHECK(back == ds);
    const auto header = samples_csv_header();
    CHECK(header.size() == 8 + 52 + 52 + 26);
    CHECK(header[8] == "w_1");
    CHECK(header.back() == "s_26");
}

TEST_CASE("dataset validation") {
    Dataset ds;
    ds.samples = testing::random_samples(3, 1);
    ds.samples[1].id = ds.samples[0].id;
    ds.samples[1].year = ds.samples[0].year;
    CHECK_THROWS_AS(ds.validate(), std::invalid_argument);

    Dataset field;
    field.level = Level::field;
    field.samples = testing::random_samples(2, 2);
    CHECK_THROWS_AS(field.validate(), std::invalid_argument);
    for (auto& s : field.samples) s.vis = Tensor({kTimesteps, kViChannels});
    CHECK_NOTHROW(field.validate());
}

TEST_CASE("channel manifest order") {
    const auto& m = channel_manifest();
    REQUIRE(m.size() == 14);
    CHECK(m[0].name == "radn");
    CHECK(m[3].rule == CompositeRule::sum);
    CHECK(m[4].name == "gcvi");
    CHECK(m[8].name == "sm_surface");
    CHECK(m[13].name == "hist_avg_yield");
}
