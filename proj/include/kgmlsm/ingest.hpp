#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgmlsm/dataset.hpp"

namespace kgmlsm::ingest {

struct Bands {
    double red = 0.0;
    double nir = 0.0;
    double blue = 0.0;
    double green = 0.0;
    double swir = 0.0;
};

/// GCVI, EVI, NDWI, NDVI in that order. An index is invalid when its
/// denominator is zero; invalid entries are excluded from averages.
struct VegetationIndices {
    std::array<double, 4> values{};
    std::array<bool, 4> valid{};

    double gcvi() const { return values[0]; }
    double evi() const { return values[1]; }
    double ndwi() const { return values[2]; }
    double ndvi() const { return values[3]; }
};

VegetationIndices compute_vi(const Bands& b);

struct PixelRecord {
    std::string county_id;
    std::string date;  // YYYY-MM-DD
    Bands bands;
    bool corn_mask = false;
};

struct DailyRecord {
    std::string id;
    std::string date;
    double radn = 0.0;
    double tmax = 0.0;
    double tmin = 0.0;
    double ppt = 0.0;
    double sm_surface = 0.0;
    double sm_rootzone = 0.0;
};

struct YieldRecord {
    std::string id;
    int year = 0;
    double lat = 0.0;
    double lon = 0.0;
    double yield = 0.0;
};

class MissingCoverage : public std::runtime_error {
public:
    MissingCoverage(std::string county, std::string date);
    const std::string& county() const { return county_; }
    const std::string& date() const { return date_; }

private:
    std::string county_;
    std::string date_;
};

struct CountyMeans {
    std::array<double, 5> bands{};  // red, nir, blue, green, swir
    VegetationIndices vi;           // per-index mean over valid pixels
    std::size_t pixels = 0;
};

/// Arithmetic mean over corn-masked pixels of one county-date.
CountyMeans spatial_average(std::span<const PixelRecord> pixels, std::string_view county_id, std::string_view date);

/// Days since April 1 of the date's year; negative before the season.
int season_day(std::string_view date);
int date_year(std::string_view date);
std::string season_date(int year, int day);

/// 13 windows of 16 days from April 1 (trailing days dropped). `mean`
/// averages each window, `sum` totals it.
std::vector<double> composite_16day(std::span<const double> daily, CompositeRule rule);

/// Windowed mean of irregular observations given as (season day, value).
/// Throws if a window has no observation.
std::vector<double> composite_observations(std::span<const std::pair<int, double>> obs);

/// Mean over every timestep of both soil-moisture layers.
double seasonal_sm_mean(const Tensor& sm);
inline double seasonal_sm_mean(const Sample& s) { return seasonal_sm_mean(s.sm); }

/// Flags samples whose sbar is strictly below the per-year `quantile`.
void label_drought(Dataset& ds, double quantile = 0.2);

/// Builds county samples for every (county, year) present in `daily`,
/// with the historical average taken over the preceding `history_years`.
Dataset build_county_dataset(std::span<const PixelRecord> pixels, std::span<const DailyRecord> daily,
                             std::span<const YieldRecord> yields, int history_years = 5,
                             double drought_quantile = 0.2);

void write_pixels_csv(const std::filesystem::path& path, std::span<const PixelRecord> rows);
std::vector<PixelRecord> read_pixels_csv(const std::filesystem::path& path);
void write_daily_csv(const std::filesystem::path& path, std::span<const DailyRecord> rows);
std::vector<DailyRecord> read_daily_csv(const std::filesystem::path& path);
void write_yields_csv(const std::filesystem::path& path, std::span<const YieldRecord> rows);
std::vector<YieldRecord> read_yields_csv(const std::filesystem::path& path);

}  // namespace kgmlsm::ingest
