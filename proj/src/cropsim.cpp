#include "kgmlsm/cropsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace kgmlsm::cropsim {

static double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

static double gaussian(Rng& rng, double sd) { return std::normal_distribution<double>(0.0, sd)(rng); }

template <class T>
static T pick_from(Rng& rng, std::initializer_list<T> values) {
    std::uniform_int_distribution<std::size_t> d(0, values.size() - 1);
    return *(values.begin() + d(rng));
}

// ---------------------------------------------------------------------------
// Management

void Management::validate() const {
    if (sow_window_start < 19 || sow_window_start > 24) throw std::invalid_argument("sowing window start outside Apr 20-25");
    if (sow_window_end < 44 || sow_window_end > 49) throw std::invalid_argument("sowing window end outside May 15-20");
    if (plant_population < 6 || plant_population > 9) throw std::invalid_argument("plant population outside 6-9");
    if (fertilizer != 200 && fertilizer != 250 && fertilizer != 300)
        throw std::invalid_argument("fertilizer must be 200, 250 or 300");
    if (initial_soil_water != 0.40 && initial_soil_water != 0.50 && initial_soil_water != 0.60)
        throw std::invalid_argument("initial soil water must be 0.40, 0.50 or 0.60");
}

Management sample_management(Rng& rng) {
    Management m;
    m.sow_window_start = std::uniform_int_distribution<int>(19, 24)(rng);
    m.sow_window_end = std::uniform_int_distribution<int>(44, 49)(rng);
    m.plant_population = std::uniform_int_distribution<int>(6, 9)(rng);
    m.fertilizer = pick_from(rng, {200, 250, 300});
    m.initial_soil_water = pick_from(rng, {0.40, 0.50, 0.60});
    return m;
}

// ---------------------------------------------------------------------------
// Weather

void WeatherSeries::validate() const {
    if (radn.size() != ppt.size() || tmax.size() != ppt.size() || tmin.size() != ppt.size())
        throw std::invalid_argument("weather channels have different lengths");
    for (std::size_t d = 0; d < ppt.size(); ++d) {
        if (tmax[d] < tmin[d]) throw std::invalid_argument("Tmax below Tmin on day " + std::to_string(d));
        if (ppt[d] < 0.0 || radn[d] < 0.0) throw std::invalid_argument("negative PPT or Radn on day " + std::to_string(d));
    }
}

WeatherSeries synth_weather(Rng& rng, int /*year*/, Location loc, double wet_day_prob) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    WeatherSeries w;
    for (auto* v : {&w.radn, &w.tmax, &w.tmin, &w.ppt}) v->resize(kSeasonDays);

    const double annual_mean = 10.5 - 0.9 * (loc.lat - 41.0);
    const double p_wet = std::clamp(wet_day_prob * (1.0 + 0.06 * (loc.lon + 92.0)), 0.0, 0.95);
    std::bernoulli_distribution wet_day(p_wet);
    std::gamma_distribution<double> amount(0.75, 10.0);

    double anomaly = 0.0;
    for (std::size_t d = 0; d < kSeasonDays; ++d) {
        const double doy = 91.0 + static_cast<double>(d);
        anomaly = 0.7 * anomaly + gaussian(rng, 2.0);
        const bool wet = wet_day(rng);
        const double rain = amount(rng);
        const double tmean = annual_mean + 13.0 * std::sin(two_pi * (doy - 110.0) / 365.0) + anomaly;
        const double range = std::max(2.0, 11.0 + gaussian(rng, 1.5) - (wet ? 4.0 : 0.0));
        const double clear = 16.0 + 10.0 * std::sin(two_pi * (doy - 80.0) / 365.0);
        const double radn_noise = gaussian(rng, 1.5);

        w.ppt[d] = wet ? rain : 0.0;
        w.tmax[d] = tmean + 0.5 * range;
        w.tmin[d] = tmean - 0.5 * range;
        w.radn[d] = std::max(1.0, clear * (wet ? 0.55 : 0.9) + radn_noise);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Water balance and yield

double potential_yield(int plant_population, int fertilizer) {
    return std::min(12.5, 9.0 + 0.25 * (plant_population - 6) + 0.004 * (fertilizer - 200));
}

double reference_et(double tmax, double tmin, double radn) {
    const double tmean = 0.5 * (tmax + tmin);
    const double et = 0.0023 * std::max(0.0, tmean + 17.8) * std::sqrt(std::max(0.0, tmax - tmin)) * radn * 0.408;
    return std::max(0.1, et);
}

double water_availability(double theta) {
    return std::clamp((theta - kWiltingFloor) / (kCriticalMoisture - kWiltingFloor), 0.0, 1.0);
}

static double bucket_step(double theta, double inflow, double pet, double depth, double drain_rate) {
    const double et = pet * water_availability(theta);
    const double drainage = drain_rate * std::max(0.0, theta - kFieldCapacity) * depth;
    return std::clamp(theta + (inflow - et - drainage) / depth, kWiltingFloor, kSaturation);
}

SimOutput simulate_station_year(const WeatherSeries& weather, const Management& m, const SoilParams& soil) {
    const std::size_t days = weather.days();
    SimOutput out;
    out.sm_surface.resize(days);
    out.sm_rootzone.resize(days);

    const double theta0 = kWiltingFloor + m.initial_soil_water * (kSaturation - kWiltingFloor);
    double surface = theta0;
    double rootzone = theta0;
    const auto shifted = [&](double theta) { return std::clamp(theta + soil.sm_offset, kWiltingFloor, kSaturation); };

    int sow_day = -1;
    double stress_total = 0.0;
    int stress_days = 0;
    for (std::size_t d = 0; d < days; ++d) {
        const double pet = reference_et(weather.tmax[d], weather.tmin[d], weather.radn[d]);
        const double ppt = weather.ppt[d];
        const double inflow = ppt - 0.25 * std::max(0.0, ppt - 25.0);
        surface = bucket_step(surface, inflow, pet, kSurfaceDepthMm, 0.5);
        rootzone = bucket_step(rootzone, inflow, pet, kRootzoneDepthMm, 0.15);
        out.sm_surface[d] = shifted(surface);
        out.sm_rootzone[d] = shifted(rootzone);

        const int day = static_cast<int>(d);
        if (sow_day < 0 && day >= m.sow_window_start &&
            (out.sm_rootzone[d] >= kCriticalMoisture || day >= m.sow_window_end))
            sow_day = day;
        if (day >= kStressWindowBegin && day < kStressWindowEnd) {
            stress_total += water_availability(out.sm_rootzone[d]);
            ++stress_days;
        }
    }
    if (sow_day < 0) sow_day = m.sow_window_end;

    out.sow_day = sow_day;
    out.stress_index = stress_days ? stress_total / stress_days : 1.0;
    out.potential_yield = potential_yield(m.plant_population, m.fertilizer);
    const double sow_factor = 1.0 - 0.004 * (sow_day - m.sow_window_start);
    out.yield = out.potential_yield * out.stress_index * sow_factor;
    return out;
}

// ---------------------------------------------------------------------------
// Field dataset

const Scenario& ScenarioMix::pick(Rng& rng) const {
    if (scenarios.empty()) throw std::invalid_argument("scenario mix is empty");
    double total = 0.0;
    for (const auto& s : scenarios) total += s.weight;
    double u = uniform(rng, 0.0, total);
    for (const auto& s : scenarios) {
        if (u < s.weight) return s;
        u -= s.weight;
    }
    return scenarios.back();
}

Sample composite_sample(const WeatherSeries& weather, const SimOutput& sim) {
    Sample s;
    const auto& manifest = channel_manifest();
    const std::array<const std::vector<double>*, 4> w = {&weather.radn, &weather.tmax, &weather.tmin, &weather.ppt};
    for (std::size_t c = 0; c < kWeatherChannels; ++c) {
        const auto comp = ingest::composite_16day(*w[c], manifest[c].rule);
        for (std::size_t t = 0; t < kTimesteps; ++t) s.weather(t, c) = comp[t];
    }
    const std::array<const std::vector<double>*, 2> sm = {&sim.sm_surface, &sim.sm_rootzone};
    for (std::size_t c = 0; c < kSmChannels; ++c) {
        const auto comp = ingest::composite_16day(*sm[c], CompositeRule::mean);
        for (std::size_t t = 0; t < kTimesteps; ++t) s.sm(t, c) = comp[t];
    }
    s.yield = sim.yield;
    s.hist_avg_yield = sim.historical_avg_yield;
    s.sbar = ingest::seasonal_sm_mean(s);
    return s;
}

static std::string station_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%03zu", i);
    return buf;
}

static std::string county_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "C%03zu", i);
    return buf;
}

Dataset build_field_dataset(const FieldConfig& config, Exec exec) {
    if (config.n_stations == 0) throw std::invalid_argument("n_stations must be at least 1");
    if (config.years.empty()) throw std::invalid_argument("years must be nonempty");
    const int first = *std::ranges::min_element(config.years) - config.history_years;
    const int last = *std::ranges::max_element(config.years);
    const auto n_years = static_cast<std::size_t>(last - first + 1);

    std::vector<Location> loc(config.n_stations);
    for (std::size_t i = 0; i < config.n_stations; ++i) {
        auto rng = derive_rng(config.seed, {i, 0xA11});
        loc[i].lat = uniform(rng, 38.5, 46.0);
        loc[i].lon = uniform(rng, -99.0, -84.0);
    }

    struct Task {
        WeatherSeries weather;
        SimOutput sim;
    };
    std::vector<Task> tasks(config.n_stations * n_years);
    for_each_index(tasks.size(), exec, [&](std::size_t k, int) {
        const std::size_t station = k / n_years;
        const int year = first + static_cast<int>(k % n_years);
        auto rng = derive_rng(config.seed, {station, static_cast<std::uint64_t>(year)});
        const auto& scenario = config.scenario_mix.pick(rng);
        const auto management = sample_management(rng);
        auto weather = synth_weather(rng, year, loc[station], scenario.wet_day_prob);
        SoilParams soil;
        if (uniform(rng, 0.0, 1.0) < config.scenario_mix.miscalibrated_fraction) {
            const double magnitude = uniform(rng, 0.12, 0.25);
            soil.sm_offset = uniform(rng, 0.0, 1.0) < 0.5 ? -magnitude : magnitude;
        }
        tasks[k].sim = simulate_station_year(weather, management, soil);
        tasks[k].weather = std::move(weather);
    });

    Dataset ds;
    ds.level = Level::field;
    std::vector<int> years = config.years;
    std::ranges::sort(years);
    for (int year : years) {
        for (std::size_t station = 0; station < config.n_stations; ++station) {
            const auto base = station * n_years;
            auto& task = tasks[base + static_cast<std::size_t>(year - first)];
            double hist = 0.0;
            for (int h = 1; h <= config.history_years; ++h) hist += tasks[base + static_cast<std::size_t>(year - h - first)].sim.yield;
            task.sim.historical_avg_yield = hist / config.history_years;
            Sample s = composite_sample(task.weather, task.sim);
            s.id = station_id(station);
            s.year = year;
            s.lat = loc[station].lat;
            s.lon = loc[station].lon;
            ds.samples.push_back(std::move(s));
        }
    }
    ingest::label_drought(ds);
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// County world

namespace {

struct CountyInfo {
    Location loc;
    double productivity = 1.0;
    Management management;
};

struct CountyYear {
    double yield = 0.0;
    std::vector<ingest::DailyRecord> daily;
    std::vector<ingest::PixelRecord> pixels;
};

ingest::Bands pixel_bands(Rng& rng, double vigor, double surface_sm) {
    const auto noisy = [&](double v) { return std::clamp(v + gaussian(rng, 0.008), 0.005, 0.95); };
    ingest::Bands b;
    b.red = noisy(0.09 - 0.06 * vigor);
    b.nir = noisy(0.20 + 0.30 * vigor);
    b.blue = noisy(0.05 - 0.02 * vigor);
    b.green = noisy(0.08 + 0.01 * vigor);
    b.swir = noisy(0.28 - 0.10 * vigor - 0.10 * (surface_sm - 0.25));
    return b;
}

}  // namespace

CountyWorld generate_county_world(const CountyConfig& config, Exec exec) {
    if (config.n_counties == 0) throw std::invalid_argument("n_counties must be at least 1");
    if (config.years.empty()) throw std::invalid_argument("years must be nonempty");
    const int first = *std::ranges::min_element(config.years) - config.history_years;
    const int last = *std::ranges::max_element(config.years);
    const auto n_years = static_cast<std::size_t>(last - first + 1);
    const auto is_sample_year = [&](int y) { return std::ranges::find(config.years, y) != config.years.end(); };

    std::vector<CountyInfo> counties(config.n_counties);
    for (std::size_t i = 0; i < config.n_counties; ++i) {
        auto rng = derive_rng(config.seed, {i, 0xC0});
        auto& c = counties[i];
        c.loc.lat = uniform(rng, 38.5, 46.0);
        c.loc.lon = uniform(rng, -99.0, -84.0);
        c.productivity = uniform(rng, 0.95, 1.08);
        c.management.sow_window_start = 21;
        c.management.sow_window_end = 46;
        c.management.plant_population = std::uniform_int_distribution<int>(7, 8)(rng);
        c.management.fertilizer = 250;
        c.management.initial_soil_water = 0.50;
    }
    std::vector<Location> drought_centre(n_years);
    for (std::size_t y = 0; y < n_years; ++y) {
        auto rng = derive_rng(config.seed, {static_cast<std::uint64_t>(first) + y, 0xD0});
        drought_centre[y] = {uniform(rng, 38.5, 46.0), uniform(rng, -99.0, -84.0)};
    }

    std::vector<CountyYear> cells(config.n_counties * n_years);
    for_each_index(cells.size(), exec, [&](std::size_t k, int) {
        const std::size_t ci = k / n_years;
        const std::size_t yi = k % n_years;
        const int year = first + static_cast<int>(yi);
        const auto& county = counties[ci];
        auto rng = derive_rng(config.seed, {ci, static_cast<std::uint64_t>(year), 1});

        const double dlat = county.loc.lat - drought_centre[yi].lat;
        const double dlon = county.loc.lon - drought_centre[yi].lon;
        const bool drought = std::hypot(dlat, dlon) < config.drought_radius_deg;
        const double wet_prob =
            (drought ? config.drought_wet_day_prob : config.normal_wet_day_prob) * uniform(rng, 0.85, 1.15);
        const auto weather = synth_weather(rng, year, county.loc, wet_prob);
        const auto sim = simulate_station_year(weather, county.management);

        double y = sim.yield * county.productivity + 0.06 * (year - 2015) + gaussian(rng, 0.3);
        if (uniform(rng, 0.0, 1.0) < 0.03) y *= 0.8;  // flooding / prevented planting
        auto& cell = cells[k];
        cell.yield = std::max(0.5, y);
        if (!is_sample_year(year)) return;

        const std::string id = county_id(ci);
        for (std::size_t d = 0; d < kSeasonDays; ++d) {
            ingest::DailyRecord r;
            r.id = id;
            r.date = ingest::season_date(year, static_cast<int>(d));
            r.radn = weather.radn[d];
            r.tmax = weather.tmax[d];
            r.tmin = weather.tmin[d];
            r.ppt = weather.ppt[d];
            r.sm_surface = std::clamp(sim.sm_surface[d] + gaussian(rng, config.sm_noise), 0.02, 0.6);
            r.sm_rootzone = std::clamp(sim.sm_rootzone[d] + gaussian(rng, config.sm_noise), 0.02, 0.6);
            cell.daily.push_back(std::move(r));
        }
        for (int day = 0; day < static_cast<int>(kSeasonDays); day += 8) {
            double health = 0.0;
            int n = 0;
            for (int back = std::max(0, day - 9); back <= day; ++back, ++n)
                health += water_availability(sim.sm_rootzone[static_cast<std::size_t>(back)]);
            health /= n;
            const double green = std::exp(-std::pow((day - 105.0) / 45.0, 2.0));
            const double vigor = green * (0.35 + 0.65 * health) * (day >= sim.sow_day ? 1.0 : 0.2);
            const std::string date = ingest::season_date(year, day);
            for (int p = 0; p < 5; ++p) {
                ingest::PixelRecord px;
                px.county_id = id;
                px.date = date;
                px.corn_mask = p < 4;
                px.bands = px.corn_mask ? pixel_bands(rng, vigor, sim.sm_surface[static_cast<std::size_t>(day)])
                                        : ingest::Bands{uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0),
                                                        uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0),
                                                        uniform(rng, 0.0, 1.0)};
                cell.pixels.push_back(std::move(px));
            }
        }
    });

    CountyWorld world;
    for (std::size_t ci = 0; ci < config.n_counties; ++ci)
        for (std::size_t yi = 0; yi < n_years; ++yi) {
            auto& cell = cells[ci * n_years + yi];
            world.yields.push_back({county_id(ci), first + static_cast<int>(yi), counties[ci].loc.lat,
                                    counties[ci].loc.lon, cell.yield});
            std::ranges::move(cell.daily, std::back_inserter(world.daily));
            std::ranges::move(cell.pixels, std::back_inserter(world.pixels));
        }
    return world;
}

}  // namespace kgmlsm::cropsim
