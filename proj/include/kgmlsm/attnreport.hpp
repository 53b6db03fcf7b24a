#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kgmlsm/dataset.hpp"
#include "kgmlsm/model.hpp"
#include "kgmlsm/parallel.hpp"
#include "kgmlsm/stats.hpp"

namespace kgmlsm::attn {

/// One attention weight. `timestep` is 1-based for series tokens and 0 for
/// auxiliary scalars.
struct RawRow {
    std::string id;
    int year = 0;
    std::string channel;
    int timestep = 0;
    double alpha = 0.0;
};

struct SampleAttention {
    std::string id;
    int year = 0;
    bool drought = false;
    std::vector<double> alpha;  // token order of the architecture
};

std::vector<SampleAttention> extract(const model::Architecture& arch, const model::Scaler& scaler,
                                     const ParamStore& params, std::span<const Sample> samples,
                                     Exec exec = Exec::parallel);

std::vector<RawRow> to_rows(const model::Architecture& arch, std::span<const SampleAttention> attention);
void write_raw_csv(const std::filesystem::path& path, std::span<const RawRow> rows);
std::vector<RawRow> read_raw_csv(const std::filesystem::path& path);

/// Divides every value by the maximum of its year. Throws if a year's
/// maximum is not positive.
std::vector<double> normalize_by_year(std::span<const int> years, std::span<const double> values);

enum class Category { vis, weather, sm };
const char* to_string(Category c);

/// Category of a manifest channel name; throws for channels outside
/// {VIs, Weather, SM}.
Category category_of(const std::string& channel);

/// series[category][t] = mean over that category's channels at timestep t.
/// Categories without tokens are omitted.
using CategorySeries = std::map<Category, std::array<double, kTimesteps>>;

/// From one sample's raw rows (auxiliary rows are ignored).
CategorySeries category_average(std::span<const RawRow> sample_rows);

struct CategoryRow {
    std::string id;  // "ALL" for the average over samples
    int year = 0;    // 0 for "ALL"
    Category category = Category::weather;
    int timestep = 1;
    double value = 0.0;
};

/// Per-sample category series followed by the mean over samples.
std::vector<CategoryRow> category_table(std::span<const RawRow> rows);
void write_category_csv(const std::filesystem::path& path, std::span<const CategoryRow> rows);

/// Mean of each sample's SM-token weights, keyed like the raw rows.
struct SmAttention {
    std::string id;
    int year = 0;
    double value = 0.0;
};
std::vector<SmAttention> sm_attention(std::span<const RawRow> rows);

struct DroughtBoxes {
    BoxStats drought;
    BoxStats nondrought;
};
DroughtBoxes drought_distribution_stats(std::span<const double> sm_alpha, std::span<const bool> drought);
void write_box_csv(const std::filesystem::path& path, const DroughtBoxes& boxes);

/// Per (year, channel, timestep) mean weight over samples, normalized by the
/// year's maximum.
struct NormalizedRow {
    int year = 0;
    std::string channel;
    int timestep = 0;
    double mean_alpha = 0.0;
    double normalized = 0.0;
};
std::vector<NormalizedRow> normalized_table(std::span<const RawRow> rows);
void write_normalized_csv(const std::filesystem::path& path, std::span<const NormalizedRow> rows);

/// 0-based composite windows approximating a calendar month (6 = June,
/// 7 = July, 8 = August).
std::array<int, 2> month_windows(int month);

/// Line chart of the "ALL" category series.
void write_category_svg(const std::filesystem::path& path, std::span<const CategoryRow> rows);

}  // namespace kgmlsm::attn
