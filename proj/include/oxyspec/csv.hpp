#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace oxyspec::csv {

/// A header row plus rows of raw string cells.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws DataError when absent.
    std::size_t column(std::string_view name) const;
};

/// Comma-separated, first line is the header, blank lines skipped.
/// Every row must have as many cells as the header.
Table parse(std::string_view text, bool has_header = true);

Table read_file(const std::filesystem::path& path, bool has_header = true);

std::string read_text(const std::filesystem::path& path);

/// Strict decimal parse of a whole cell; throws DataError otherwise.
double to_double(std::string_view cell);
long long to_int(std::string_view cell);

/// Numeric view of all cells, row-major.
std::vector<std::vector<double>> numeric_rows(const Table& table);

} // namespace oxyspec::csv
