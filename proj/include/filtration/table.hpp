#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "filtration/common.hpp"

namespace filtration {

/// Decimal with 17 significant digits; round-trips every double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Header plus rows of already formatted cells.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    Table() = default;
    explicit Table(std::vector<std::string> cols) : columns(std::move(cols)) {}

    template <class... Cells>
    void add(const Cells&... cells) {
        std::vector<std::string> row;
        (row.push_back(cell(cells)), ...);
        if (row.size() != columns.size()) throw Error("row width does not match header");
        rows.push_back(std::move(row));
    }

    void write_csv(std::ostream& os) const {
        write_row(os, columns);
        for (const auto& r : rows) write_row(os, r);
    }

private:
    static std::string cell(double v) { return format_double(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(long v) { return std::to_string(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "true" : "false"; }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }

    static void write_row(std::ostream& os, const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << '\n';
    }
};

}  // namespace filtration
