#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "kgmlsm/tensor.hpp"

namespace kgmlsm {

inline constexpr std::size_t kTimesteps = 13;
inline constexpr std::size_t kWindowDays = 16;
inline constexpr std::size_t kSeasonDays = 214;  // April 1 .. October 31
inline constexpr std::size_t kWeatherChannels = 4;
inline constexpr std::size_t kViChannels = 4;
inline constexpr std::size_t kSmChannels = 2;
inline constexpr std::size_t kAuxFeatures = 4;

enum class Level { field, county };
const char* to_string(Level level);
Level level_from_string(const std::string& s);

/// One station-year (field) or county-year (county) record.
struct Sample {
    std::string id;
    int year = 0;
    double lat = 0.0;
    double lon = 0.0;
    double hist_avg_yield = 0.0;
    double yield = 0.0;  // t/ha
    double sbar = 0.0;
    bool drought = false;
    Tensor weather{{kTimesteps, kWeatherChannels}};  // Radn, Tmax, Tmin, PPT
    Tensor vis{{kTimesteps, kViChannels}};           // GCVI, EVI, NDWI, NDVI
    Tensor sm{{kTimesteps, kSmChannels}};            // surface, rootzone

    std::array<double, kAuxFeatures> aux() const { return {static_cast<double>(year), lat, lon, hist_avg_yield}; }
    bool operator==(const Sample&) const = default;
};

enum class ChannelGroup { weather, vi, sm, aux };
enum class CompositeRule { mean, sum, none };

struct ChannelInfo {
    std::string name;
    ChannelGroup group;
    CompositeRule rule;
    std::string unit;
};

const char* to_string(ChannelGroup group);
const char* to_string(CompositeRule rule);

/// Fixed channel ordering used by every file and by the token layout.
const std::vector<ChannelInfo>& channel_manifest();

struct Dataset {
    Level level = Level::county;
    std::size_t timesteps = kTimesteps;
    std::vector<Sample> samples;

    /// Throws std::invalid_argument on duplicate (id, year) keys or, for
    /// field datasets, any non-zero VI entry.
    void validate() const;
    std::vector<int> years() const;
    bool operator==(const Dataset&) const = default;
};

/// Wide-format samples.csv: id,year,lat,lon,hist_avg_yield,yield,sbar,drought_flag,
/// w_1..w_52, v_1..v_52, s_1..s_26 (channel-major, timestep-minor).
void write_samples_csv(const std::filesystem::path& path, const Dataset& ds);
Dataset read_samples_csv(const std::filesystem::path& path, Level level);
std::vector<std::string> samples_csv_header();

/// JSON manifest documenting level, channel order and compositing rules.
void write_manifest(const std::filesystem::path& path, const Dataset& ds);

}  // namespace kgmlsm
