#include "kgmlsm/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

#include "kgmlsm/csv.hpp"

namespace kgmlsm {

const char* to_string(Level level) { return level == Level::field ? "field" : "county"; }

Level level_from_string(const std::string& s) {
    if (s == "field") return Level::field;
    if (s == "county") return Level::county;
    throw std::invalid_argument("unknown dataset level: " + s);
}

const char* to_string(ChannelGroup group) {
    switch (group) {
        case ChannelGroup::weather: return "Weather";
        case ChannelGroup::vi: return "VIs";
        case ChannelGroup::sm: return "SM";
        case ChannelGroup::aux: return "Other";
    }
    return "?";
}

const char* to_string(CompositeRule rule) {
    switch (rule) {
        case CompositeRule::mean: return "mean";
        case CompositeRule::sum: return "sum";
        case CompositeRule::none: return "none";
    }
    return "?";
}

const std::vector<ChannelInfo>& channel_manifest() {
    static const std::vector<ChannelInfo> channels = {
        {"radn", ChannelGroup::weather, CompositeRule::mean, "MJ/m2/day"},
        {"tmax", ChannelGroup::weather, CompositeRule::mean, "degC"},
        {"tmin", ChannelGroup::weather, CompositeRule::mean, "degC"},
        {"ppt", ChannelGroup::weather, CompositeRule::sum, "mm"},
        {"gcvi", ChannelGroup::vi, CompositeRule::mean, "1"},
        {"evi", ChannelGroup::vi, CompositeRule::mean, "1"},
        {"ndwi", ChannelGroup::vi, CompositeRule::mean, "1"},
        {"ndvi", ChannelGroup::vi, CompositeRule::mean, "1"},
        {"sm_surface", ChannelGroup::sm, CompositeRule::mean, "m3/m3"},
        {"sm_rootzone", ChannelGroup::sm, CompositeRule::mean, "m3/m3"},
        {"year", ChannelGroup::aux, CompositeRule::none, "year"},
        {"lat", ChannelGroup::aux, CompositeRule::none, "deg"},
        {"lon", ChannelGroup::aux, CompositeRule::none, "deg"},
        {"hist_avg_yield", ChannelGroup::aux, CompositeRule::none, "t/ha"},
    };
    return channels;
}

void Dataset::validate() const {
    std::set<std::pair<std::string, int>> keys;
    for (const auto& s : samples) {
        if (!keys.emplace(s.id, s.year).second)
            throw std::invalid_argument("duplicate sample key " + s.id + "/" + std::to_string(s.year));
        if (s.weather.shape() != Shape{timesteps, kWeatherChannels} || s.vis.shape() != Shape{timesteps, kViChannels} ||
            s.sm.shape() != Shape{timesteps, kSmChannels})
            throw std::invalid_argument("sample " + s.id + " has an inconsistent channel schema");
        if (level == Level::field &&
            std::ranges::any_of(s.vis.data(), [](double v) { return v != 0.0; }))
            throw std::invalid_argument("field sample " + s.id + " carries non-zero VI values");
    }
}

std::vector<int> Dataset::years() const {
    std::set<int> ys;
    for (const auto& s : samples) ys.insert(s.year);
    return {ys.begin(), ys.end()};
}

std::vector<std::string> samples_csv_header() {
    std::vector<std::string> h = {"id", "year", "lat", "lon", "hist_avg_yield", "yield", "sbar", "drought_flag"};
    for (const char* prefix : {"w_", "v_", "s_"}) {
        const std::size_t n = prefix[0] == 's' ? kSmChannels * kTimesteps : 4 * kTimesteps;
        for (std::size_t i = 1; i <= n; ++i) h.push_back(prefix + std::to_string(i));
    }
    return h;
}

static void append_channel_major(std::vector<std::string>& row, const Tensor& m) {
    for (std::size_t c = 0; c < m.cols(); ++c)
        for (std::size_t t = 0; t < m.rows(); ++t) row.push_back(format_double(m(t, c)));
}

void write_samples_csv(const std::filesystem::path& path, const Dataset& ds) {
    ds.validate();
    CsvWriter w(path);
    w.row(samples_csv_header());
    for (const auto& s : ds.samples) {
        std::vector<std::string> row = {s.id,
                                        std::to_string(s.year),
                                        format_double(s.lat),
                                        format_double(s.lon),
                                        format_double(s.hist_avg_yield),
                                        format_double(s.yield),
                                        format_double(s.sbar),
                                        s.drought ? "1" : "0"};
        append_channel_major(row, s.weather);
        append_channel_major(row, s.vis);
        append_channel_major(row, s.sm);
        w.row(row);
    }
}

Dataset read_samples_csv(const std::filesystem::path& path, Level level) {
    const auto table = read_csv(path);
    if (table.header != samples_csv_header())
        throw std::invalid_argument(path.string() + ": header does not match the samples.csv schema");
    Dataset ds;
    ds.level = level;
    for (const auto& r : table.rows) {
        Sample s;
        s.id = r[0];
        s.year = parse_int(r[1]);
        s.lat = parse_double(r[2]);
        s.lon = parse_double(r[3]);
        s.hist_avg_yield = parse_double(r[4]);
        s.yield = parse_double(r[5]);
        s.sbar = parse_double(r[6]);
        s.drought = parse_bool(r[7]);
        std::size_t k = 8;
        for (Tensor* m : {&s.weather, &s.vis, &s.sm})
            for (std::size_t c = 0; c < m->cols(); ++c)
                for (std::size_t t = 0; t < m->rows(); ++t) (*m)(t, c) = parse_double(r[k++]);
        ds.samples.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

void write_manifest(const std::filesystem::path& path, const Dataset& ds) {
    nlohmann::ordered_json j;
    j["level"] = to_string(ds.level);
    j["timesteps"] = ds.timesteps;
    j["window_days"] = kWindowDays;
    j["season"] = {{"start", "04-01"}, {"end", "10-31"}, {"dropped_trailing_days", kSeasonDays - kWindowDays * kTimesteps}};
    j["layout"] = "channel-major: column <prefix>_<c*T+t+1> holds channel c at timestep t";
    auto channels = nlohmann::ordered_json::array();
    for (const auto& c : channel_manifest()) {
        std::string column_prefix = c.group == ChannelGroup::weather ? "w_"
                                    : c.group == ChannelGroup::vi    ? "v_"
                                    : c.group == ChannelGroup::sm    ? "s_"
                                                                     : "";
        channels.push_back({{"name", c.name},
                            {"category", to_string(c.group)},
                            {"composite", to_string(c.rule)},
                            {"unit", c.unit},
                            {"column_prefix", column_prefix}});
    }
    j["channels"] = channels;
    j["samples"] = ds.samples.size();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace kgmlsm
