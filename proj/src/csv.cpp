#include "stratadj/csv.hpp"

#include <charconv>
#include <fstream>
#include <string_view>

#include "stratadj/error.hpp"

namespace stratadj {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + what);
}

double parse_real(std::string_view cell, std::size_t line, std::string_view column) {
    double value = 0.0;
    const auto* begin = cell.data();
    const auto* end = cell.data() + cell.size();
    if (!cell.empty() && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (cell.empty() || ec != std::errc() || ptr != end) {
        fail(line, "column '" + std::string(column) + "': cannot parse '" + std::string(cell) + "' as a real");
    }
    return value;
}

}  // namespace

std::vector<RawRow> read_csv_rows(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        for (auto cell : split(line)) header.emplace_back(cell);
        break;
    }
    if (header.empty()) throw Error(ErrorKind::ParseError, "line 1: missing header row");
    if (!header.front().empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0) {
        header.front().erase(0, 3);
    }
    if (header.size() < 3 || header[0] != "stratum" || header[1] != "z" || header[2] != "y") {
        fail(line_no, "header must start with 'stratum,z,y'");
    }
    const std::size_t k = header.size() - 3;

    std::vector<RawRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            fail(line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                              std::to_string(cells.size()));
        }
        RawRow row;
        row.stratum = std::string(cells[0]);
        if (row.stratum.empty()) fail(line_no, "empty stratum label");
        if (cells[1] == "1") {
            row.z = 1;
        } else if (cells[1] == "0") {
            row.z = 0;
        } else {
            fail(line_no, "z must be 0 or 1, found '" + std::string(cells[1]) + "'");
        }
        row.y = parse_real(cells[2], line_no, "y");
        row.x.reserve(k);
        for (std::size_t c = 0; c < k; ++c) row.x.push_back(parse_real(cells[3 + c], line_no, header[3 + c]));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorKind::ParseError, "no data rows");
    return rows;
}

std::vector<RawRow> read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
    return read_csv_rows(in);
}

ObservedDataset load_dataset(const std::string& path) { return validate_dataset(read_csv_file(path)); }

}  // namespace stratadj
