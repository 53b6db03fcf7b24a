#include "kgmlsm/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <map>
#include <set>
#include <tuple>

#include "kgmlsm/csv.hpp"
#include "kgmlsm/stats.hpp"

namespace kgmlsm::ingest {

VegetationIndices compute_vi(const Bands& b) {
    for (double r : {b.red, b.nir, b.blue, b.green, b.swir})
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("reflectance outside [0, 1]");
    VegetationIndices vi;
    const auto set = [&](std::size_t k, double num, double den) {
        vi.valid[k] = den != 0.0;
        vi.values[k] = vi.valid[k] ? num / den : 0.0;
    };
    if (b.green != 0.0) {
        vi.values[0] = b.nir / b.green - 1.0;
        vi.valid[0] = true;
    }
    set(1, 2.5 * (b.nir - b.red), b.nir + 6.0 * b.red - 7.5 * b.blue + 1.0);
    set(2, b.nir - b.swir, b.nir + b.swir);
    set(3, b.nir - b.red, b.nir + b.red);
    return vi;
}

MissingCoverage::MissingCoverage(std::string county, std::string date)
    : std::runtime_error("no corn-masked pixels for county " + county + " on " + date),
      county_(std::move(county)),
      date_(std::move(date)) {}

CountyMeans spatial_average(std::span<const PixelRecord> pixels, std::string_view county_id, std::string_view date) {
    CountyMeans out;
    std::array<std::size_t, 4> vi_count{};
    for (const auto& p : pixels) {
        if (!p.corn_mask || p.county_id != county_id || p.date != date) continue;
        const auto vi = compute_vi(p.bands);
        const std::array<double, 5> b = {p.bands.red, p.bands.nir, p.bands.blue, p.bands.green, p.bands.swir};
        for (std::size_t k = 0; k < 5; ++k) out.bands[k] += b[k];
        for (std::size_t k = 0; k < 4; ++k)
            if (vi.valid[k]) {
                out.vi.values[k] += vi.values[k];
                ++vi_count[k];
            }
        ++out.pixels;
    }
    if (out.pixels == 0) throw MissingCoverage(std::string(county_id), std::string(date));
    for (auto& v : out.bands) v /= static_cast<double>(out.pixels);
    for (std::size_t k = 0; k < 4; ++k) {
        out.vi.valid[k] = vi_count[k] > 0;
        if (vi_count[k]) out.vi.values[k] /= static_cast<double>(vi_count[k]);
    }
    return out;
}

static std::chrono::year_month_day parse_date(std::string_view date) {
    if (date.size() != 10 || date[4] != '-' || date[7] != '-')
        throw std::invalid_argument("date must be YYYY-MM-DD: '" + std::string(date) + "'");
    const int y = parse_int(date.substr(0, 4));
    const int m = parse_int(date.substr(5, 2));
    const int d = parse_int(date.substr(8, 2));
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date: " + std::string(date));
    return ymd;
}

int date_year(std::string_view date) { return static_cast<int>(parse_date(date).year()); }

int season_day(std::string_view date) {
    using namespace std::chrono;
    const auto ymd = parse_date(date);
    const sys_days start{ymd.year() / April / 1};
    return static_cast<int>((sys_days{ymd} - start).count());
}

std::string season_date(int year, int day) {
    using namespace std::chrono;
    const year_month_day ymd{sys_days{std::chrono::year{year} / April / 1} + days{day}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

std::vector<double> composite_16day(std::span<const double> daily, CompositeRule rule) {
    if (daily.size() < kTimesteps * kWindowDays)
        throw std::invalid_argument("season has " + std::to_string(daily.size()) + " days; compositing needs " +
                                    std::to_string(kTimesteps * kWindowDays));
    std::vector<double> out(kTimesteps, 0.0);
    for (std::size_t w = 0; w < kTimesteps; ++w) {
        double total = 0.0;
        for (std::size_t d = 0; d < kWindowDays; ++d) total += daily[w * kWindowDays + d];
        out[w] = rule == CompositeRule::sum ? total : total / static_cast<double>(kWindowDays);
    }
    return out;
}

std::vector<double> composite_observations(std::span<const std::pair<int, double>> obs) {
    std::vector<double> total(kTimesteps, 0.0);
    std::vector<std::size_t> count(kTimesteps, 0);
    for (auto [day, v] : obs) {
        if (day < 0) continue;
        const auto w = static_cast<std::size_t>(day) / kWindowDays;
        if (w >= kTimesteps) continue;
        total[w] += v;
        ++count[w];
    }
    for (std::size_t w = 0; w < kTimesteps; ++w) {
        if (count[w] == 0) throw std::invalid_argument("composite window " + std::to_string(w + 1) + " has no observations");
        total[w] /= static_cast<double>(count[w]);
    }
    return total;
}

double seasonal_sm_mean(const Tensor& sm) { return mean(sm.data()); }

void label_drought(Dataset& ds, double quantile) {
    std::map<int, std::vector<double>> by_year;
    for (const auto& s : ds.samples) by_year[s.year].push_back(s.sbar);
    std::map<int, double> threshold;
    for (const auto& [year, values] : by_year) threshold[year] = quantile_linear(values, quantile);
    for (auto& s : ds.samples) s.drought = s.sbar < threshold[s.year];
}

Dataset build_county_dataset(std::span<const PixelRecord> pixels, std::span<const DailyRecord> daily,
                             std::span<const YieldRecord> yields, int history_years, double drought_quantile) {
    using Key = std::pair<std::string, int>;
    constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

    std::map<Key, std::array<std::vector<double>, 6>> series;
    for (const auto& r : daily) {
        const int day = season_day(r.date);
        if (day < 0 || day >= static_cast<int>(kSeasonDays)) continue;
        auto& ch = series[{r.id, date_year(r.date)}];
        if (ch[0].empty())
            for (auto& c : ch) c.assign(kSeasonDays, kMissing);
        const std::array<double, 6> v = {r.radn, r.tmax, r.tmin, r.ppt, r.sm_surface, r.sm_rootzone};
        for (std::size_t k = 0; k < 6; ++k) ch[k][static_cast<std::size_t>(day)] = v[k];
    }

    std::map<Key, std::set<std::string>> dates;  // county-year -> distinct dates
    for (const auto& p : pixels) dates[{p.county_id, date_year(p.date)}].insert(p.date);
    std::map<std::pair<std::string, std::string>, std::vector<PixelRecord>> by_county_date;
    for (const auto& p : pixels) by_county_date[{p.county_id, p.date}].push_back(p);

    std::map<Key, YieldRecord> yield_of;
    for (const auto& y : yields) yield_of[{y.id, y.year}] = y;

    Dataset ds;
    ds.level = Level::county;
    for (const auto& [key, ch] : series) {
        const auto& [id, year] = key;
        for (std::size_t k = 0; k < 6; ++k)
            for (std::size_t d = 0; d < kTimesteps * kWindowDays; ++d)
                if (std::isnan(ch[k][d]))
                    throw std::invalid_argument("daily series for " + id + "/" + std::to_string(year) +
                                                " is missing " + season_date(year, static_cast<int>(d)));
        auto y_it = yield_of.find(key);
        if (y_it == yield_of.end()) throw std::invalid_argument("no yield record for " + id + "/" + std::to_string(year));

        Sample s;
        s.id = id;
        s.year = year;
        s.lat = y_it->second.lat;
        s.lon = y_it->second.lon;
        s.yield = y_it->second.yield;

        double hist = 0.0;
        for (int h = 1; h <= history_years; ++h) {
            auto it = yield_of.find({id, year - h});
            if (it == yield_of.end())
                throw std::invalid_argument("historical yield missing for " + id + "/" + std::to_string(year - h));
            hist += it->second.yield;
        }
        s.hist_avg_yield = hist / history_years;

        const auto& manifest = channel_manifest();
        for (std::size_t c = 0; c < kWeatherChannels; ++c) {
            const auto comp = composite_16day(ch[c], manifest[c].rule);
            for (std::size_t t = 0; t < kTimesteps; ++t) s.weather(t, c) = comp[t];
        }
        for (std::size_t c = 0; c < kSmChannels; ++c) {
            const auto comp = composite_16day(ch[4 + c], CompositeRule::mean);
            for (std::size_t t = 0; t < kTimesteps; ++t) s.sm(t, c) = comp[t];
        }

        std::array<std::vector<std::pair<int, double>>, 4> vi_obs;
        if (auto d_it = dates.find(key); d_it != dates.end()) {
            for (const auto& date : d_it->second) {
                const auto& group = by_county_date[{id, date}];
                const auto means = spatial_average(group, id, date);
                const int day = season_day(date);
                for (std::size_t k = 0; k < 4; ++k)
                    if (means.vi.valid[k]) vi_obs[k].emplace_back(day, means.vi.values[k]);
            }
        }
        for (std::size_t k = 0; k < 4; ++k) {
            const auto comp = composite_observations(vi_obs[k]);
            for (std::size_t t = 0; t < kTimesteps; ++t) s.vis(t, k) = comp[t];
        }
        s.sbar = seasonal_sm_mean(s);
        ds.samples.push_back(std::move(s));
    }
    std::ranges::sort(ds.samples, [](const Sample& a, const Sample& b) {
        return std::tie(a.year, a.id) < std::tie(b.year, b.id);
    });
    label_drought(ds, drought_quantile);
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Files

void write_pixels_csv(const std::filesystem::path& path, std::span<const PixelRecord> rows) {
    CsvWriter w(path);
    w.row({"county_id", "date", "red", "nir", "blue", "green", "swir", "corn_mask"});
    for (const auto& p : rows)
        w.row({p.county_id, p.date, format_double(p.bands.red), format_double(p.bands.nir),
               format_double(p.bands.blue), format_double(p.bands.green), format_double(p.bands.swir),
               p.corn_mask ? "1" : "0"});
}

std::vector<PixelRecord> read_pixels_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    const std::array<std::size_t, 8> c = {t.column("county_id"), t.column("date"),  t.column("red"),
                                          t.column("nir"),       t.column("blue"),  t.column("green"),
                                          t.column("swir"),      t.column("corn_mask")};
    std::vector<PixelRecord> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows)
        out.push_back({r[c[0]], r[c[1]],
                       Bands{parse_double(r[c[2]]), parse_double(r[c[3]]), parse_double(r[c[4]]),
                             parse_double(r[c[5]]), parse_double(r[c[6]])},
                       parse_bool(r[c[7]])});
    return out;
}

void write_daily_csv(const std::filesystem::path& path, std::span<const DailyRecord> rows) {
    CsvWriter w(path);
    w.row({"id", "date", "radn", "tmax", "tmin", "ppt", "sm_surface", "sm_rootzone"});
    for (const auto& d : rows)
        w.row({d.id, d.date, format_double(d.radn), format_double(d.tmax), format_double(d.tmin), format_double(d.ppt),
               format_double(d.sm_surface), format_double(d.sm_rootzone)});
}

std::vector<DailyRecord> read_daily_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    const std::array<std::size_t, 8> c = {t.column("id"),   t.column("date"), t.column("radn"),
                                          t.column("tmax"), t.column("tmin"), t.column("ppt"),
                                          t.column("sm_surface"), t.column("sm_rootzone")};
    std::vector<DailyRecord> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows)
        out.push_back({r[c[0]], r[c[1]], parse_double(r[c[2]]), parse_double(r[c[3]]), parse_double(r[c[4]]),
                       parse_double(r[c[5]]), parse_double(r[c[6]]), parse_double(r[c[7]])});
    return out;
}

void write_yields_csv(const std::filesystem::path& path, std::span<const YieldRecord> rows) {
    CsvWriter w(path);
    w.row({"id", "year", "lat", "lon", "yield"});
    for (const auto& y : rows)
        w.row({y.id, std::to_string(y.year), format_double(y.lat), format_double(y.lon), format_double(y.yield)});
}

std::vector<YieldRecord> read_yields_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    const std::array<std::size_t, 5> c = {t.column("id"), t.column("year"), t.column("lat"), t.column("lon"),
                                          t.column("yield")};
    std::vector<YieldRecord> out;
    for (const auto& r : t.rows)
        out.push_back({r[c[0]], parse_int(r[c[1]]), parse_double(r[c[2]]), parse_double(r[c[3]]),
                       parse_double(r[c[4]])});
    return out;
}

}  // namespace kgmlsm::ingest
