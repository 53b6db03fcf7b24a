#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgmlsm/dataset.hpp"
#include "kgmlsm/ingest.hpp"
#include "kgmlsm/parallel.hpp"
#include "kgmlsm/rng.hpp"

/// Deterministic crop/soil-water surrogate used to generate pretraining
/// samples, and a synthetic county "observation" world for finetuning.
namespace kgmlsm::cropsim {

using kgmlsm::derive_rng;
using kgmlsm::Rng;

// Soil-water constants (volumetric fractions).
inline constexpr double kWiltingFloor = 0.05;
inline constexpr double kSaturation = 0.55;
inline constexpr double kFieldCapacity = 0.38;
inline constexpr double kCriticalMoisture = 0.25;
inline constexpr double kSurfaceDepthMm = 50.0;
inline constexpr double kRootzoneDepthMm = 600.0;
inline constexpr int kStressWindowBegin = 61;  // June 1
inline constexpr int kStressWindowEnd = 168;   // September 16 (exclusive)

/// Season-day indices (0 = April 1).
struct Management {
    int sow_window_start = 19;  // Apr 20..Apr 25 -> 19..24
    int sow_window_end = 44;    // May 15..May 20 -> 44..49
    int plant_population = 7;   // plants/m2, {6,7,8,9}
    int fertilizer = 250;       // kg N/ha, {200,250,300}
    double initial_soil_water = 0.5;  // {0.40,0.50,0.60}

    void validate() const;
};

Management sample_management(Rng& rng);

struct Location {
    double lat = 42.0;
    double lon = -93.0;
};

struct WeatherSeries {
    std::vector<double> radn;  // MJ/m2/day
    std::vector<double> tmax;  // degC
    std::vector<double> tmin;  // degC
    std::vector<double> ppt;   // mm/day

    std::size_t days() const { return ppt.size(); }
    void validate() const;
};

/// One growing season (April 1 .. October 31). Precipitation is a
/// Bernoulli(wet_day_prob) x gamma process; temperature follows a seasonal
/// sinusoid plus AR(1) anomalies.
WeatherSeries synth_weather(Rng& rng, int year, Location loc, double wet_day_prob = 0.30);

/// Miscalibrated soil: `sm_offset` shifts the simulated profile moisture
/// (the stress computation sees the shifted profile too).
struct SoilParams {
    double sm_offset = 0.0;
};

struct SimOutput {
    std::vector<double> sm_surface;
    std::vector<double> sm_rootzone;
    double yield = 0.0;
    double potential_yield = 0.0;
    double stress_index = 1.0;
    double historical_avg_yield = 0.0;
    int sow_day = 0;
};

double potential_yield(int plant_population, int fertilizer);

/// Hargreaves-style reference evapotranspiration, mm/day, floored at 0.1.
double reference_et(double tmax, double tmin, double radn);

/// Fraction of reference ET a bucket at moisture `theta` can supply.
double water_availability(double theta);

SimOutput simulate_station_year(const WeatherSeries& weather, const Management& management,
                                const SoilParams& soil = {});

struct Scenario {
    std::string name;
    double weight = 1.0;
    double wet_day_prob = 0.30;
};

struct ScenarioMix {
    std::vector<Scenario> scenarios = {{"normal", 0.75, 0.30}, {"drought", 0.25, 0.12}};
    double miscalibrated_fraction = 0.15;

    const Scenario& pick(Rng& rng) const;
};

struct FieldConfig {
    std::size_t n_stations = 40;
    std::vector<int> years;
    ScenarioMix scenario_mix;
    int history_years = 5;
    std::uint64_t seed = 7;
};

/// One composited Sample per station-year; VI channels are zero.
Dataset build_field_dataset(const FieldConfig& config, Exec exec = Exec::parallel);

/// Converts a season simulation into a composited Sample.
Sample composite_sample(const WeatherSeries& weather, const SimOutput& sim);

struct CountyConfig {
    std::size_t n_counties = 60;
    std::vector<int> years;
    int history_years = 5;
    double normal_wet_day_prob = 0.30;
    double drought_wet_day_prob = 0.12;
    double drought_radius_deg = 3.5;
    double sm_noise = 0.015;
    std::uint64_t seed = 11;
};

/// Raw county-level inputs in the ingest file schemas.
struct CountyWorld {
    std::vector<ingest::PixelRecord> pixels;
    std::vector<ingest::DailyRecord> daily;
    std::vector<ingest::YieldRecord> yields;
};

CountyWorld generate_county_world(const CountyConfig& config, Exec exec = Exec::parallel);

}  // namespace kgmlsm::cropsim
