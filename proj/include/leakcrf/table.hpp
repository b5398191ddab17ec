#pragma once

// Comma-delimited numeric tables with a named header row. Lines starting with
// '#' are comments; the first comment line conventionally carries the format tag.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace leakcrf {

/// Shortest round-trip decimal form; deterministic for a given value.
inline std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct Table {
    std::vector<std::string> comments;  // without the leading '#'
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ParseError("table has no column '" + std::string(name) + "'");
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

inline std::string table_to_string(const Table& t) {
    std::string out;
    for (const auto& c : t.comments) out += "#" + c + "\n";
    for (std::size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
    out += "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            out += format_number(row[i]);
        }
        out += "\n";
    }
    return out;
}

inline Table parse_table(const std::string& text, const std::string& origin = "table") {
    Table t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            t.comments.push_back(line.substr(1));
            continue;
        }
        auto cells = detail::split_csv_line(line);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            throw ParseError(origin + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            double v = 0.0;
            const auto& c = cells[i];
            auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (res.ec != std::errc() || res.ptr != c.data() + c.size())
                throw ParseError(origin + ":" + std::to_string(lineno) + ": field '" + t.header[i] +
                                 "' is not a number: '" + c + "'");
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (!have_header) throw ParseError(origin + ": missing header row");
    return t;
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_table(ss.str(), path);
}

inline void write_table(const Table& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out << table_to_string(t);
}

}  // namespace leakcrf
