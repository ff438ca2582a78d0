#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pspower/dataset.hpp"
#include "pspower/errors.hpp"

namespace pspower::io {

namespace detail {

inline void put_double(std::ostream& os, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, res.ptr - buf);
}

inline double parse_double(std::string_view s, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw domain_error("csv line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string> expected_header(Eigen::Index p, bool fitted) {
    std::vector<std::string> h;
    for (Eigen::Index j = 1; j <= p; ++j) h.push_back("x" + std::to_string(j));
    for (const char* c : {"z", "y", "y1", "y0", "e_true"}) h.emplace_back(c);
    if (fitted) {
        h.emplace_back("e_hat");
        h.emplace_back("w_hat");
    }
    return h;
}

}  // namespace detail

/// Header `x1..xp,z,y,y1,y0,e_true` plus `e_hat,w_hat` when fitted columns are present.
/// Numbers use the shortest round-trip representation.
inline void write_csv(std::ostream& os, const Dataset& d) {
    const bool fitted = d.fitted_scores && d.fitted_linear;
    const auto header = detail::expected_header(d.covariates.cols(), fitted);
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j) os << ',';
        os << header[j];
    }
    os << '\n';
    for (Eigen::Index i = 0; i < d.z.size(); ++i) {
        for (Eigen::Index j = 0; j < d.covariates.cols(); ++j) {
            detail::put_double(os, d.covariates(i, j));
            os << ',';
        }
        for (double v : {d.z[i], d.y[i], d.y1[i], d.y0[i], d.true_scores[i]}) {
            detail::put_double(os, v);
            os << ',';
        }
        if (fitted) {
            detail::put_double(os, (*d.fitted_scores)[i]);
            os << ',';
            detail::put_double(os, (*d.fitted_linear)[i]);
            os << ',';
        }
        os.seekp(-1, std::ios_base::cur);
        os << '\n';
    }
}

inline Dataset read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw domain_error("csv: empty input");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto head = detail::split(line);
    Eigen::Index p = 0;
    while (static_cast<std::size_t>(p) < head.size() && head[static_cast<std::size_t>(p)] == "x" + std::to_string(p + 1)) {
        ++p;
    }
    const bool fitted = head.size() == static_cast<std::size_t>(p) + 7;
    const auto expect = detail::expected_header(p, fitted);
    if (head.size() != expect.size()) {
        throw domain_error("csv: unexpected header '" + line + "'");
    }
    for (std::size_t j = 0; j < expect.size(); ++j) {
        if (head[j] != expect[j]) {
            throw domain_error("csv: expected column '" + expect[j] + "', found '" + std::string(head[j]) + "'");
        }
    }

    std::vector<double> values;
    std::size_t rows = 0, lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split(line);
        if (cells.size() != expect.size()) {
            throw domain_error("csv line " + std::to_string(lineno) + ": wrong number of fields");
        }
        for (auto c : cells) values.push_back(detail::parse_double(c, lineno));
        ++rows;
    }

    const auto n = static_cast<Eigen::Index>(rows);
    const auto width = expect.size();
    Dataset d;
    d.covariates.resize(n, p);
    d.z.resize(n);
    d.y.resize(n);
    d.y1.resize(n);
    d.y0.resize(n);
    d.true_scores.resize(n);
    if (fitted) {
        d.fitted_scores.emplace(n);
        d.fitted_linear.emplace(n);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double* row = values.data() + static_cast<std::size_t>(i) * width;
        for (Eigen::Index j = 0; j < p; ++j) d.covariates(i, j) = row[j];
        d.z[i] = row[p];
        d.y[i] = row[p + 1];
        d.y1[i] = row[p + 2];
        d.y0[i] = row[p + 3];
        d.true_scores[i] = row[p + 4];
        if (fitted) {
            (*d.fitted_scores)[i] = row[p + 5];
            (*d.fitted_linear)[i] = row[p + 6];
        }
    }
    d.validate();
    return d;
}

/// One empirical-power result.
struct PowerRecord {
    double phi = 1.0;
    double rho2 = 0.0;
    std::int64_t n = 0;
    double power = 0.0;
    double mc_se = 0.0;
    std::string mode;
};

inline void to_json(nlohmann::json& j, const PowerRecord& r) {
    j = nlohmann::json{{"phi", r.phi}, {"rho2", r.rho2}, {"n", r.n},
                       {"power", r.power}, {"mc_se", r.mc_se}, {"mode", r.mode}};
}

inline void from_json(const nlohmann::json& j, PowerRecord& r) {
    j.at("phi").get_to(r.phi);
    j.at("rho2").get_to(r.rho2);
    j.at("n").get_to(r.n);
    j.at("power").get_to(r.power);
    j.at("mc_se").get_to(r.mc_se);
    j.at("mode").get_to(r.mode);
}

}  // namespace pspower::io
