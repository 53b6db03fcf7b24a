#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace kgmlsm {

/// Shortest round-trip decimal representation.
std::string format_double(double v);
double parse_double(std::string_view s);
int parse_int(std::string_view s);
bool parse_bool(std::string_view s);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;
};

/// RFC-4180 reader: quoted fields, doubled quotes, CRLF or LF line ends.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text);

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path);
    void row(const std::vector<std::string>& fields);

private:
    std::ofstream out_;
};

std::string csv_escape(std::string_view field);

}  // namespace kgmlsm
