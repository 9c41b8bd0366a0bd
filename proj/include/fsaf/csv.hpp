// csv.hpp - generic CSV-backed discrete black-box loader. Header row required,
// comma delimiter, decimal point, UTF-8. Features are min-max normalized to
// [0,1]^d, the objective is rescaled to [-2, 2].
#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fsaf/util.hpp"

namespace fsaf::env {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;  // selected columns only
};

namespace csv_detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

}  // namespace csv_detail

/// Parses the named columns of a CSV file. Errors carry 1-based line numbers.
inline CsvTable read_csv_columns(const std::string& path, const std::vector<std::string>& columns) {
    std::ifstream in(path);
    if (!in) throw IoError("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("csv: " + path + " is empty (no header row)");
    auto header = csv_detail::split_line(line);
    for (auto& h : header) h = csv_detail::trim(h);

    std::vector<int> col_idx;
    for (const auto& want : columns) {
        int found = -1;
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == want) {
                found = static_cast<int>(i);
                break;
            }
        if (found < 0) throw ParseError("csv: column '" + want + "' not found in " + path);
        col_idx.push_back(found);
    }

    CsvTable table;
    table.header = columns;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv_detail::trim(line).empty()) continue;
        auto cells = csv_detail::split_line(line);
        if (cells.size() < header.size())
            throw ParseError("csv: line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(col_idx.size());
        for (int ci : col_idx) {
            std::string cell = csv_detail::trim(cells[ci]);
            if (cell.empty())
                throw ParseError("csv: line " + std::to_string(line_no) + ": missing value in column '" +
                                 header[ci] + "'");
            try {
                std::size_t used = 0;
                double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument("trailing characters");
                row.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("csv: line " + std::to_string(line_no) + ": cannot parse '" + cell +
                                 "' as a number");
            }
        }
        table.rows.push_back(std::move(row));
    }
    if (table.rows.empty()) throw ParseError("csv: " + path + " has no data rows");
    return table;
}

}  // namespace fsaf::env
