#include "kgmlsm/attnreport.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include "kgmlsm/csv.hpp"

namespace kgmlsm::attn {

std::vector<SampleAttention> extract(const model::Architecture& arch, const model::Scaler& scaler,
                                     const ParamStore& params, std::span<const Sample> samples, Exec exec) {
    std::vector<SampleAttention> out(samples.size());
    for_each_index(samples.size(), exec, [&](std::size_t i, int) {
        const auto& s = samples[i];
        out[i] = {s.id, s.year, s.drought, model::predict(arch, scaler, params, s).alpha};
    });
    return out;
}

std::vector<RawRow> to_rows(const model::Architecture& arch, std::span<const SampleAttention> attention) {
    const auto layout = model::token_layout(arch);
    const auto& manifest = channel_manifest();
    std::vector<RawRow> rows;
    for (const auto& a : attention) {
        if (a.alpha.size() != layout.size()) throw std::invalid_argument("attention vector does not match token layout");
        for (std::size_t k = 0; k < layout.size(); ++k)
            rows.push_back({a.id, a.year, manifest[layout[k].channel].name, layout[k].timestep + 1, a.alpha[k]});
    }
    return rows;
}

void write_raw_csv(const std::filesystem::path& path, std::span<const RawRow> rows) {
    CsvWriter w(path);
    w.row({"id", "year", "channel", "timestep", "alpha"});
    for (const auto& r : rows)
        w.row({r.id, std::to_string(r.year), r.channel, std::to_string(r.timestep), format_double(r.alpha)});
}

std::vector<RawRow> read_raw_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    const auto id = t.column("id"), year = t.column("year"), ch = t.column("channel"), ts = t.column("timestep"),
               al = t.column("alpha");
    std::vector<RawRow> rows;
    for (const auto& r : t.rows) rows.push_back({r[id], parse_int(r[year]), r[ch], parse_int(r[ts]), parse_double(r[al])});
    return rows;
}

std::vector<double> normalize_by_year(std::span<const int> years, std::span<const double> values) {
    if (years.size() != values.size()) throw std::invalid_argument("normalize_by_year: inputs not aligned");
    std::map<int, double> max;
    for (std::size_t i = 0; i < years.size(); ++i) {
        auto [it, fresh] = max.emplace(years[i], values[i]);
        if (!fresh) it->second = std::max(it->second, values[i]);
    }
    for (const auto& [y, m] : max)
        if (!(m > 0.0)) throw std::invalid_argument("normalize_by_year: year " + std::to_string(y) + " has no positive value");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] / max.at(years[i]);
    return out;
}

const char* to_string(Category c) {
    switch (c) {
        case Category::vis: return "VIs";
        case Category::weather: return "Weather";
        case Category::sm: return "SM";
    }
    return "?";
}

Category category_of(const std::string& channel) {
    for (const auto& c : channel_manifest()) {
        if (c.name != channel) continue;
        switch (c.group) {
            case ChannelGroup::weather: return Category::weather;
            case ChannelGroup::vi: return Category::vis;
            case ChannelGroup::sm: return Category::sm;
            case ChannelGroup::aux: break;
        }
    }
    throw std::invalid_argument("channel '" + channel + "' has no attention category");
}

static bool is_series(const RawRow& r) { return r.timestep > 0; }

CategorySeries category_average(std::span<const RawRow> sample_rows) {
    std::map<Category, std::array<double, kTimesteps>> sum;
    std::map<Category, std::array<int, kTimesteps>> count;
    for (const auto& r : sample_rows) {
        if (!is_series(r)) continue;
        if (r.timestep > static_cast<int>(kTimesteps)) throw std::invalid_argument("timestep out of range");
        const auto c = category_of(r.channel);
        const auto t = static_cast<std::size_t>(r.timestep - 1);
        sum[c][t] += r.alpha;
        count[c][t] += 1;
    }
    CategorySeries out;
    for (auto& [c, s] : sum) {
        auto& series = out[c];
        for (std::size_t t = 0; t < kTimesteps; ++t) {
            if (count[c][t] == 0) throw std::invalid_argument(std::string("category ") + to_string(c) + " lacks timestep " + std::to_string(t + 1));
            series[t] = s[t] / count[c][t];
        }
    }
    return out;
}

// Groups rows by (id, year) in order of first appearance.
static std::vector<std::pair<std::size_t, std::size_t>> sample_ranges(std::span<const RawRow> rows) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= rows.size(); ++i) {
        if (i == rows.size() || rows[i].id != rows[begin].id || rows[i].year != rows[begin].year) {
            ranges.emplace_back(begin, i);
            begin = i;
        }
    }
    if (rows.empty()) ranges.clear();
    return ranges;
}

std::vector<CategoryRow> category_table(std::span<const RawRow> rows) {
    std::vector<CategoryRow> out;
    CategorySeries total;
    const auto ranges = sample_ranges(rows);
    for (const auto& [b, e] : ranges) {
        const auto series = category_average(rows.subspan(b, e - b));
        for (const auto& [c, s] : series) {
            auto& acc = total[c];
            for (std::size_t t = 0; t < kTimesteps; ++t) {
                out.push_back({rows[b].id, rows[b].year, c, static_cast<int>(t + 1), s[t]});
                acc[t] += s[t];
            }
        }
    }
    for (const auto& [c, s] : total)
        for (std::size_t t = 0; t < kTimesteps; ++t)
            out.push_back({"ALL", 0, c, static_cast<int>(t + 1), s[t] / static_cast<double>(ranges.size())});
    return out;
}

void write_category_csv(const std::filesystem::path& path, std::span<const CategoryRow> rows) {
    CsvWriter w(path);
    w.row({"id", "year", "category", "timestep", "alpha_mean"});
    for (const auto& r : rows)
        w.row({r.id, std::to_string(r.year), to_string(r.category), std::to_string(r.timestep), format_double(r.value)});
}

std::vector<SmAttention> sm_attention(std::span<const RawRow> rows) {
    std::vector<SmAttention> out;
    for (const auto& [b, e] : sample_ranges(rows)) {
        double sum = 0.0;
        int n = 0;
        for (std::size_t i = b; i < e; ++i)
            if (is_series(rows[i]) && category_of(rows[i].channel) == Category::sm) {
                sum += rows[i].alpha;
                ++n;
            }
        if (n > 0) out.push_back({rows[b].id, rows[b].year, sum / n});
    }
    return out;
}

DroughtBoxes drought_distribution_stats(std::span<const double> sm_alpha, std::span<const bool> drought) {
    if (sm_alpha.size() != drought.size()) throw std::invalid_argument("drought stats: inputs not aligned");
    std::vector<double> d, n;
    for (std::size_t i = 0; i < sm_alpha.size(); ++i) (drought[i] ? d : n).push_back(sm_alpha[i]);
    if (d.empty()) throw std::invalid_argument("drought stats: no drought samples");
    if (n.empty()) throw std::invalid_argument("drought stats: no non-drought samples");
    return {box_stats(d), box_stats(n)};
}

void write_box_csv(const std::filesystem::path& path, const DroughtBoxes& boxes) {
    CsvWriter w(path);
    w.row({"class", "n", "median", "q1", "q3", "iqr", "lower_fence", "upper_fence", "whisker_low", "whisker_high",
           "outliers"});
    for (const auto& [name, b] : {std::pair{"drought", boxes.drought}, std::pair{"non_drought", boxes.nondrought}})
        w.row({name, std::to_string(b.n), format_double(b.median), format_double(b.q1), format_double(b.q3),
               format_double(b.iqr), format_double(b.lower_fence), format_double(b.upper_fence),
               format_double(b.whisker_low), format_double(b.whisker_high), std::to_string(b.outliers)});
}

std::vector<NormalizedRow> normalized_table(std::span<const RawRow> rows) {
    std::map<std::tuple<int, std::string, int>, std::pair<double, int>> acc;
    std::vector<std::tuple<int, std::string, int>> order;
    for (const auto& r : rows) {
        auto key = std::make_tuple(r.year, r.channel, r.timestep);
        auto [it, fresh] = acc.emplace(key, std::pair{0.0, 0});
        if (fresh) order.push_back(key);
        it->second.first += r.alpha;
        it->second.second += 1;
    }
    std::ranges::stable_sort(order, {}, [](const auto& k) { return std::get<0>(k); });
    std::vector<NormalizedRow> out;
    std::vector<int> years;
    std::vector<double> values;
    for (const auto& k : order) {
        const auto& [sum, n] = acc.at(k);
        out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), sum / n, 0.0});
        years.push_back(std::get<0>(k));
        values.push_back(sum / n);
    }
    const auto norm = normalize_by_year(years, values);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].normalized = norm[i];
    return out;
}

void write_normalized_csv(const std::filesystem::path& path, std::span<const NormalizedRow> rows) {
    CsvWriter w(path);
    w.row({"year", "channel", "timestep", "mean_alpha", "normalized"});
    for (const auto& r : rows)
        w.row({std::to_string(r.year), r.channel, std::to_string(r.timestep), format_double(r.mean_alpha),
               format_double(r.normalized)});
}

std::array<int, 2> month_windows(int month) {
    switch (month) {
        case 6: return {4, 5};
        case 7: return {6, 7};
        case 8: return {8, 9};
    }
    throw std::invalid_argument("month_windows covers June, July and August only");
}

void write_category_svg(const std::filesystem::path& path, std::span<const CategoryRow> rows) {
    constexpr double width = 640, height = 360, left = 60, right = 20, top = 30, bottom = 40;
    std::map<Category, std::array<double, kTimesteps>> series;
    double ymax = 0.0;
    for (const auto& r : rows) {
        if (r.id != "ALL") continue;
        series[r.category][static_cast<std::size_t>(r.timestep - 1)] = r.value;
        ymax = std::max(ymax, r.value);
    }
    if (series.empty()) throw std::invalid_argument("category svg: no ALL rows");
    if (ymax <= 0.0) ymax = 1.0;
    const auto px = [&](std::size_t t) { return left + (width - left - right) * static_cast<double>(t) / (kTimesteps - 1); };
    const auto py = [&](double v) { return height - bottom - (height - top - bottom) * v / ymax; };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    char buf[128];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\" font-family=\"sans-serif\" "
           "font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", left,
                  height - bottom, width - right, height - bottom);
    out << buf;
    std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", left, top, left,
                  height - bottom);
    out << buf;
    for (std::size_t t = 0; t < kTimesteps; ++t) {
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%g\" text-anchor=\"middle\">%zu</text>\n", px(t),
                      height - bottom + 16, t + 1);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.3g</text>\n", left - 6, top + 4, ymax);
    out << buf;
    out << "<text x=\"" << (width / 2) << "\" y=\"" << (height - 6) << "\" text-anchor=\"middle\">16-day window</text>\n";

    const std::map<Category, const char*> colour = {
        {Category::vis, "#2a9d8f"}, {Category::weather, "#e76f51"}, {Category::sm, "#264653"}};
    int legend = 0;
    for (const auto& [c, s] : series) {
        out << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << colour.at(c) << "\" points=\"";
        for (std::size_t t = 0; t < kTimesteps; ++t) {
            std::snprintf(buf, sizeof buf, "%s%.1f,%.1f", t ? " " : "", px(t), py(s[t]));
            out << buf;
        }
        out << "\"/>\n";
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%d\" fill=\"%s\">%s</text>\n", width - right - 80,
                      static_cast<int>(top) + 14 * legend++, colour.at(c), to_string(c));
        out << buf;
    }
    out << "</svg>\n";
}

}  // namespace kgmlsm::attn
