#include <cmath>
#include <map>

#include "doctest.h"
#include "kgmlsm/attnreport.hpp"
#include "kgmlsm/train.hpp"
#include "support.hpp"

using namespace kgmlsm;
using namespace kgmlsm::attn;

namespace {

struct Fixture {
    std::vector<Sample> samples = testing::random_samples(12, 44, 2020, 2022);
    model::Architecture arch;
    model::Scaler scaler = model::Scaler::fit(samples);
    ParamStore params = model::init_params(arch, 5);
};

// Independent category table for one sample: plain averages by channel name.
std::map<std::pair<std::string, int>, double> hand_categories(const std::vector<RawRow>& rows) {
    static const std::map<std::string, std::string> group = {
        {"radn", "Weather"}, {"tmax", "Weather"}, {"tmin", "Weather"}, {"ppt", "Weather"},
        {"gcvi", "VIs"}, {"evi", "VIs"}, {"ndwi", "VIs"}, {"ndvi", "VIs"},
        {"sm_surface", "SM"}, {"sm_rootzone", "SM"}};
    std::map<std::pair<std::string, int>, std::pair<double, int>> acc;
    for (const auto& r : rows) {
        auto it = group.find(r.channel);
        if (it == group.end()) continue;
        auto& a = acc[{it->second, r.timestep}];
        a.first += r.alpha;
        ++a.second;
    }
    std::map<std::pair<std::string, int>, double> out;
    for (const auto& [k, v] : acc) out[k] = v.first / v.second;
    return out;
}

}  // namespace

TEST_CASE("extracted attention sums to one and leaves parameters untouched") {
    Fixture f;
    const auto before = train::params_hash(f.params);
    const auto att = extract(f.arch, f.scaler, f.params, f.samples);
    CHECK(train::params_hash(f.params) == before);
    REQUIRE(att.size() == f.samples.size());
    for (const auto& a : att) {
        double s = 0.0;
        for (double x : a.alpha) s += x;
        CHECK(std::abs(s - 1.0) < 1e-9);
    }
    CHECK(extract(f.arch, f.scaler, f.params, f.samples, Exec::serial)[3].alpha == att[3].alpha);
}

TEST_CASE("SM rows exist only for variants with SM tokens") {
    Fixture f;
    const model::Architecture none{model::SmSource::none};
    const auto rows = to_rows(none, extract(none, f.scaler, model::init_params(none, 1), f.samples));
    for (const auto& r : rows)
        if (r.timestep > 0) CHECK(category_of(r.channel) != Category::sm);
    CHECK(rows.size() == f.samples.size() * 108);
    CHECK(to_rows(f.arch, extract(f.arch, f.scaler, f.params, f.samples)).size() == f.samples.size() * 134);
}

TEST_CASE("normalize by year") {
    const std::vector<int> years = {2020, 2020, 2021, 2021, 2021};
    const std::vector<double> v = {0.2, 0.4, 3.0, 1.5, 6.0};
    const auto n = normalize_by_year(years, v);
    CHECK(n[0] == 0.5);
    CHECK(n[1] == 1.0);
    CHECK(n[4] == 1.0);
    CHECK(n[3] == 0.25);
    CHECK(normalize_by_year(years, n) == n);
    CHECK(n[0] / n[2] != v[0] / v[2]);  // cross-year ratios change
    CHECK_THROWS(normalize_by_year(std::vector<int>{1}, std::vector<double>{0.0}));
}

TEST_CASE("category averages recompute from the raw csv") {
    Fixture f;
    const auto rows = to_rows(f.arch, extract(f.arch, f.scaler, f.params, f.samples));
    const auto dir = testing::scratch_dir("attn");
    write_raw_csv(dir / "raw.csv", rows);
    const auto back = read_raw_csv(dir / "raw.csv");
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(back[i].alpha == rows[i].alpha);

    std::map<std::pair<std::string, int>, std::vector<RawRow>> by_sample;
    for (const auto& r : back) by_sample[{r.id, r.year}].push_back(r);
    const auto table = category_table(back);
    std::size_t checked = 0;
    for (const auto& row : table) {
        if (row.id == "ALL") continue;
        const auto hand = hand_categories(by_sample.at({row.id, row.year}));
        CHECK(std::abs(hand.at({to_string(row.category), row.timestep}) - row.value) < 1e-12);
        ++checked;
    }
    CHECK(checked == f.samples.size() * 3 * kTimesteps);

    // The ALL rows are means of the per-sample series.
    std::map<std::pair<std::string, int>, double> mean;
    for (const auto& row : table)
        if (row.id != "ALL") mean[{to_string(row.category), row.timestep}] += row.value / f.samples.size();
    for (const auto& row : table)
        if (row.id == "ALL") CHECK(std::abs(mean.at({to_string(row.category), row.timestep}) - row.value) < 1e-12);
}

TEST_CASE("category average identities") {
    std::vector<RawRow> rows;
    const char* weather[] = {"radn", "tmax", "tmin", "ppt"};
    for (int t = 1; t <= 13; ++t) {
        for (int c = 0; c < 4; ++c) rows.push_back({"X", 2020, weather[c], t, 0.01 * (c + 1)});
        for (const char* v : {"gcvi", "evi", "ndwi", "ndvi"}) rows.push_back({"X", 2020, v, t, 0.003});
        rows.push_back({"X", 2020, "sm_surface", t, 0.002});
        rows.push_back({"X", 2020, "sm_rootzone", t, 0.004});
    }
    rows.push_back({"X", 2020, "year", 0, 0.5});
    const auto s = category_average(rows);
    for (std::size_t t = 0; t < kTimesteps; ++t) {
        CHECK(s.at(Category::weather)[t] == doctest::Approx(0.025).epsilon(1e-12));
        CHECK(s.at(Category::vis)[t] == doctest::Approx(0.003).epsilon(1e-12));
        CHECK(s.at(Category::sm)[t] == doctest::Approx(0.003).epsilon(1e-12));
        const double mass = 4 * s.at(Category::weather)[t] + 4 * s.at(Category::vis)[t] + 2 * s.at(Category::sm)[t];
        CHECK(mass == doctest::Approx(0.1 + 0.012 + 0.006).epsilon(1e-12));
    }
}

TEST_CASE("drought box statistics") {
    const std::vector<double> v = {1, 2, 3, 4, 5, 7, 7, 7};
    const bool flags[] = {true, true, true, true, true, false, false, false};
    const auto b = drought_distribution_stats(v, flags);
    CHECK(b.drought.median == 3.0);
    CHECK(b.drought.q1 == 2.0);
    CHECK(b.drought.q3 == 4.0);
    CHECK(b.nondrought.iqr == 0.0);
    CHECK(b.nondrought.outliers == 0);
    CHECK(b.drought.n == 5);
    CHECK(b.nondrought.n == 3);
}

TEST_CASE("SM attention scalar is the mean of the SM token weights") {
    Fixture f;
    const auto rows = to_rows(f.arch, extract(f.arch, f.scaler, f.params, f.samples));
    const auto sm = sm_attention(rows);
    REQUIRE(sm.size() == f.samples.size());
    double total = 0.0;
    int n = 0;
    for (const auto& r : rows)
        if (r.id == sm[0].id && r.year == sm[0].year && r.timestep > 0 && category_of(r.channel) == Category::sm) {
            total += r.alpha;
            ++n;
        }
    CHECK(n == 26);
    CHECK(sm[0].value == doctest::Approx(total / 26.0).epsilon(1e-12));
}

TEST_CASE("month windows") {
    CHECK(month_windows(6) == std::array<int, 2>{4, 5});
    CHECK(month_windows(7) == std::array<int, 2>{6, 7});
    CHECK(month_windows(8) == std::array<int, 2>{8, 9});
}
