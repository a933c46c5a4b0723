#pragma once

// Observational data (y, d, x-vector, z-vector) and its CSV form. Columns are
// bound by name, so the column order of a file does not matter.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "model.hpp"

namespace ivpower {

struct Dataset {
    std::vector<int> y;
    std::vector<int> d;
    Eigen::MatrixXd X;  // n x k covariates, no intercept column
    Eigen::MatrixXd Z;  // n x m raw instruments
    std::vector<std::string> x_names;
    std::vector<std::string> z_names;

    std::size_t n() const { return y.size(); }

    void validate() const {
        const auto n_ = static_cast<Eigen::Index>(y.size());
        if (n_ < 1) throw DataError("dataset is empty");
        if (static_cast<Eigen::Index>(d.size()) != n_ || X.rows() != n_ || Z.rows() != n_)
            throw DataError("dataset columns differ in length");
        for (std::size_t i = 0; i < y.size(); ++i)
            if ((y[i] != 0 && y[i] != 1) || (d[i] != 0 && d[i] != 1))
                throw DataError("row " + std::to_string(i + 1) + ": y and d must be binary");
        if (!X.allFinite() || !Z.allFinite()) throw DataError("dataset has non-finite entries");
    }

    Dataset subset(const std::vector<std::size_t>& rows) const {
        Dataset out;
        out.x_names = x_names;
        out.z_names = z_names;
        out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
        out.Z.resize(static_cast<Eigen::Index>(rows.size()), Z.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto i = static_cast<Eigen::Index>(rows[r]);
            out.y.push_back(y[rows[r]]);
            out.d.push_back(d[rows[r]]);
            out.X.row(static_cast<Eigen::Index>(r)) = X.row(i);
            out.Z.row(static_cast<Eigen::Index>(r)) = Z.row(i);
        }
        return out;
    }
};

// A parsed CSV: header plus numeric columns.
struct Table {
    std::vector<std::string> names;
    std::vector<Vec> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    const Vec& column(const std::string& name) const {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw DataError("missing column '" + name + "'");
        return columns[static_cast<std::size_t>(it - names.begin())];
    }
    bool has(const std::string& name) const {
        return std::find(names.begin(), names.end(), name) != names.end();
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }
    return out;
}

inline double parse_double(const std::string& s, std::size_t row, const std::string& col) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != last)
        throw DataError("row " + std::to_string(row) + ", column '" + col + "': not a number: '" + s + "'");
    return v;
}

// "x10" sorts after "x2".
inline bool natural_less(const std::string& a, const std::string& b) {
    auto split = [](const std::string& s) {
        std::size_t k = s.size();
        while (k > 0 && std::isdigit(static_cast<unsigned char>(s[k - 1]))) --k;
        const long num = k < s.size() ? std::stol(s.substr(k)) : -1;
        return std::pair<std::string, long>(s.substr(0, k), num);
    };
    return split(a) < split(b);
}

inline bool is_indexed(const std::string& name, char prefix) {
    return name.size() >= 2 && name[0] == prefix &&
           std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

}  // namespace detail

inline Table read_table(std::istream& in) {
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV input is empty (header row is mandatory)");
    t.names = detail::split_csv_line(line);
    for (const auto& nm : t.names)
        if (nm.empty()) throw DataError("CSV header has an empty column name");
    t.columns.assign(t.names.size(), Vec{});
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != t.names.size())
            throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(t.names.size()) +
                            " fields, found " + std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c)
            t.columns[c].push_back(detail::parse_double(cells[c], row, t.names[c]));
    }
    return t;
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open data file '" + path + "'");
    return read_table(in);
}

// Binds named columns. With empty name lists, covariates are the columns
// x1, x2, ... and instruments z1, z2, ..., each in natural order.
inline Dataset dataset_from_table(const Table& t, const std::string& y_name = "y",
                                  const std::string& d_name = "d", std::vector<std::string> x_names = {},
                                  std::vector<std::string> z_names = {}) {
    if (x_names.empty())
        for (const auto& nm : t.names)
            if (detail::is_indexed(nm, 'x')) x_names.push_back(nm);
    if (z_names.empty())
        for (const auto& nm : t.names)
            if (detail::is_indexed(nm, 'z')) z_names.push_back(nm);
    std::sort(x_names.begin(), x_names.end(), detail::natural_less);
    std::sort(z_names.begin(), z_names.end(), detail::natural_less);

    Dataset ds;
    const auto n = t.rows();
    auto to_binary = [&](const std::string& name) {
        const auto& col = t.column(name);
        std::vector<int> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (col[i] != 0.0 && col[i] != 1.0)
                throw DataError("column '" + name + "' must be binary (row " + std::to_string(i + 2) + ")");
            out[i] = static_cast<int>(col[i]);
        }
        return out;
    };
    ds.y = to_binary(y_name);
    ds.d = to_binary(d_name);
    ds.x_names = x_names;
    ds.z_names = z_names;
    ds.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(x_names.size()));
    ds.Z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(z_names.size()));
    for (std::size_t c = 0; c < x_names.size(); ++c) {
        const auto& col = t.column(x_names[c]);
        for (std::size_t i = 0; i < n; ++i) ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = col[i];
    }
    for (std::size_t c = 0; c < z_names.size(); ++c) {
        const auto& col = t.column(z_names[c]);
        for (std::size_t i = 0; i < n; ++i) ds.Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = col[i];
    }
    ds.validate();
    return ds;
}

inline Dataset read_dataset(const std::string& path) { return dataset_from_table(read_table(path)); }

inline void write_dataset(std::ostream& os, const Dataset& ds) {
    os << "y,d";
    for (std::size_t c = 0; c < static_cast<std::size_t>(ds.X.cols()); ++c)
        os << ',' << (c < ds.x_names.size() ? ds.x_names[c] : "x" + std::to_string(c + 1));
    for (std::size_t c = 0; c < static_cast<std::size_t>(ds.Z.cols()); ++c)
        os << ',' << (c < ds.z_names.size() ? ds.z_names[c] : "z" + std::to_string(c + 1));
    os << '\n';
    char buf[64];
    auto put = [&](double v) {
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        os.write(buf, res.ptr - buf);
    };
    for (std::size_t i = 0; i < ds.n(); ++i) {
        os << ds.y[i] << ',' << ds.d[i];
        for (Eigen::Index c = 0; c < ds.X.cols(); ++c) {
            os << ',';
            put(ds.X(static_cast<Eigen::Index>(i), c));
        }
        for (Eigen::Index c = 0; c < ds.Z.cols(); ++c) {
            os << ',';
            put(ds.Z(static_cast<Eigen::Index>(i), c));
        }
        os << '\n';
    }
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write '" + path + "'");
    write_dataset(os, ds);
}

}  // namespace ivpower
