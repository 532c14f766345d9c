#include "oxyspec/csv.hpp"

#include "oxyspec/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace oxyspec::csv {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_cells(std::string_view line)
{
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.emplace_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return cells;
}

} // namespace

std::size_t Table::column(std::string_view name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
        throw DataError("csv: missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
}

Table parse(std::string_view text, bool has_header)
{
    Table table;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        const auto line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty())
            continue;
        auto cells = split_cells(line);
        if (has_header && table.header.empty()) {
            table.header = std::move(cells);
            width = table.header.size();
            continue;
        }
        if (width == 0)
            width = cells.size();
        if (cells.size() != width)
            throw DataError("csv: line " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(width));
        table.rows.push_back(std::move(cells));
    }
    if (has_header && table.header.empty())
        throw DataError("csv: missing header");
    return table;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Table read_file(const std::filesystem::path& path, bool has_header)
{
    return parse(read_text(path), has_header);
}

double to_double(std::string_view cell)
{
    cell = trim(cell);
    double value = 0.0;
    const auto* first = cell.data();
    const auto* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+')
        ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc{} || ptr != last)
        throw DataError("csv: not a number: '" + std::string(cell) + "'");
    return value;
}

long long to_int(std::string_view cell)
{
    cell = trim(cell);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size())
        throw DataError("csv: not an integer: '" + std::string(cell) + "'");
    return value;
}

std::vector<std::vector<double>> numeric_rows(const Table& table)
{
    std::vector<std::vector<double>> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        std::vector<double> values;
        values.reserve(row.size());
        for (const auto& cell : row)
            values.push_back(to_double(cell));
        out.push_back(std::move(values));
    }
    return out;
}

} // namespace oxyspec::csv
