#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pspower/pspower.hpp"

namespace pspower::cli {

enum exit_code : int { ok = 0, failure = 1, invalid = 2, infeasible = 3 };

class flag_error : public domain_error {
public:
    using domain_error::domain_error;
};

struct RunConfig {
    std::string subcommand;
    std::string format = "json";
    std::string output;

    double r = 0.5;
    double phi = 1.0;
    double rho2 = 0.0;
    std::optional<double> effect;
    std::optional<double> tau;
    std::optional<double> sd;
    double alpha = 0.05;
    double beta = 0.8;
    std::string estimand = "ate";
    std::string sided = "two";
    std::string wate_norm = "second-moment";
    std::optional<double> r2_bound;
    std::optional<double> v0;
    std::optional<std::int64_t> n;

    std::string phi_grid;
    std::string rho2_grid;

    double kappa = 1.0;
    std::optional<double> beta0;
    std::int64_t n_pop = 200000;
    double noise_sd = 4.0;
    std::string outcome = "continuous";
    double threshold = -2.0;
    std::int64_t reps = 2000;
    std::uint64_t seed = 20240601;
    std::string mode = "subsample";
    std::string scores = "true";
    bool fit = false;
};

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw flag_error(msg);
}

inline Estimand parse_estimand(const std::string& s) {
    if (s == "ate") return Estimand::ATE;
    if (s == "att") return Estimand::ATT;
    if (s == "ato") return Estimand::ATO;
    throw flag_error("--estimand must be one of ate, att, ato");
}

/// "a,b,c" or "start:stop:step" (stop included up to rounding).
inline std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
    require(!text.empty(), flag + " is required");
    auto num = [&](const std::string& s) {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        require(res.ec == std::errc{} && res.ptr == s.data() + s.size() && !s.empty(),
                flag + ": cannot parse '" + s + "'");
        return v;
    };
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
        require(parts.size() == 3, flag + ": range form is start:stop:step");
        const double a = num(parts[0]), b = num(parts[1]), step = num(parts[2]);
        require(step != 0.0 && (b - a) / step >= 0.0, flag + ": step does not move start towards stop");
        const auto count = static_cast<long>(std::floor((b - a) / step + 1e-9));
        require(count < 100000, flag + ": too many grid points");
        for (long i = 0; i <= count; ++i) out.push_back(a + static_cast<double>(i) * step);
    } else {
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ',');) out.push_back(num(p));
    }
    require(!out.empty(), flag + " is empty");
    return out;
}

inline DesignInputs design_inputs(const RunConfig& c) {
    require(c.r > 0.0 && c.r < 1.0, "--r must lie in (0, 1)");
    require(c.phi > 0.0 && c.phi <= 1.0, "--phi must lie in (0, 1]");
    require(c.rho2 >= 0.0 && c.rho2 < 1.0, "--rho2 must lie in [0, 1)");
    require(c.alpha > 0.0 && c.alpha < 0.5, "--alpha must lie in (0, 0.5)");
    require(c.beta > 0.5 && c.beta < 1.0, "--beta must lie in (0.5, 1)");
    require(c.sided == "one" || c.sided == "two", "--sided must be one or two");
    require(c.wate_norm == "second-moment" || c.wate_norm == "squared-mean",
            "--wate-norm must be second-moment or squared-mean");
    DesignInputs d;
    d.wate_normalization =
        c.wate_norm == "squared-mean" ? WateNormalization::squared_mean : WateNormalization::second_moment;
    if (c.effect) {
        require(!c.tau && !c.sd, "--effect cannot be combined with --tau/--sd");
        require(*c.effect > 0.0 && std::isfinite(*c.effect), "--effect must be > 0");
        d.tau_std = *c.effect;
    } else {
        require(c.tau && c.sd, "give --effect, or both --tau and --sd");
        require(*c.sd > 0.0, "--sd must be > 0");
        require(*c.tau > 0.0, "--tau must be > 0");
        d.tau_std = *c.tau / *c.sd;
    }
    d.alpha = c.alpha;
    d.beta = c.beta;
    d.sidedness = c.sided == "one" ? Sidedness::one : Sidedness::two;
    d.estimand = parse_estimand(c.estimand);
    d.overlap = {c.r, c.phi};
    d.rho2 = c.rho2;
    if (c.r2_bound) {
        require(*c.r2_bound >= 0.0 && *c.r2_bound < 1.0, "--r2-bound must lie in [0, 1)");
        require(c.rho2 <= *c.r2_bound, "--rho2 exceeds --r2-bound");
        d.r2_bound = RSquaredBound{*c.r2_bound};
    }
    if (c.v0) {
        require(*c.v0 > 0.0, "--v0 must be > 0");
        d.v0_override = *c.v0;
    }
    return d;
}

inline nlohmann::json design_json(const DesignResult& res, const DesignInputs& d) {
    return {{"n", res.n},
            {"power", res.power},
            {"v_total", res.variance.v_total},
            {"v_sh", res.variance.v_sh},
            {"v_adj", res.variance.v_adj},
            {"a", res.trace.beta.a},
            {"b", res.trace.beta.b},
            {"mu_e", res.trace.propensity.mu_e},
            {"sigma_e2", res.trace.propensity.sigma_e2},
            {"r", d.overlap.r},
            {"phi", d.overlap.phi},
            {"rho2", d.rho2},
            {"effect", d.tau_std},
            {"estimand", std::string(to_string(d.estimand))}};
}

/// Writes a flat list of JSON objects as CSV with the given column order.
inline void write_table_csv(std::ostream& os, const std::vector<std::string>& cols,
                            const nlohmann::json& rows) {
    for (std::size_t j = 0; j < cols.size(); ++j) os << (j ? "," : "") << cols[j];
    os << '\n';
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            if (j) os << ',';
            const auto it = row.find(cols[j]);
            if (it == row.end() || it->is_null()) continue;
            if (it->is_number_float()) {
                os << format_double(it->get<double>());
            } else if (it->is_number_integer()) {
                os << it->get<std::int64_t>();
            } else {
                std::string s = it->get<std::string>();
                for (auto& ch : s) {
                    if (ch == ',' || ch == '\n') ch = ';';
                }
                os << s;
            }
        }
        os << '\n';
    }
}

inline void emit(const RunConfig& c, std::ostream& out, const std::vector<std::string>& cols,
                 const nlohmann::json& rows, const nlohmann::json& json_doc) {
    std::ofstream file;
    std::ostream* os = &out;
    if (!c.output.empty()) {
        file.open(c.output);
        if (!file) throw flag_error("--output: cannot open '" + c.output + "'");
        os = &file;
    }
    if (c.format == "csv") {
        write_table_csv(*os, cols, rows);
    } else {
        *os << json_doc.dump(2) << '\n';
    }
}

inline int cmd_size(const RunConfig& c, std::ostream& out) {
    const DesignInputs d = design_inputs(c);
    const auto res = sample_size(d);
    const auto j = design_json(res, d);
    emit(c, out, {"n", "power", "v_total", "v_sh", "v_adj", "a", "b", "mu_e", "sigma_e2"},
         nlohmann::json::array({j}), j);
    return ok;
}

inline int cmd_power(const RunConfig& c, std::ostream& out) {
    const DesignInputs d = design_inputs(c);
    require(c.n.has_value(), "--n is required");
    require(*c.n >= 2, "--n must be >= 2");
    auto res = sample_size(d);
    nlohmann::json j = design_json(res, d);
    j["n_required"] = res.n;
    j["n"] = *c.n;
    j["power"] = detail::power_from_variance(d, res.variance.v_total, static_cast<double>(*c.n));
    emit(c, out, {"n", "power", "v_total", "v_sh", "v_adj", "n_required"}, nlohmann::json::array({j}), j);
    return ok;
}

inline int cmd_sensitivity(const RunConfig& c, std::ostream& out) {
    RunConfig base = c;
    const auto phis = parse_grid(c.phi_grid, "--phi-grid");
    const auto rho2s = parse_grid(c.rho2_grid, "--rho2-grid");
    for (double p : phis) require(p > 0.0 && p <= 1.0, "--phi-grid values must lie in (0, 1]");
    for (double v : rho2s) require(v >= 0.0 && v < 1.0, "--rho2-grid values must lie in [0, 1)");
    base.phi = phis.front();
    base.rho2 = 0.0;
    base.r2_bound.reset();
    DesignInputs d = design_inputs(base);
    if (c.r2_bound) {
        require(*c.r2_bound >= 0.0 && *c.r2_bound < 1.0, "--r2-bound must lie in [0, 1)");
        d.r2_bound = RSquaredBound{*c.r2_bound};
    }
    const auto cells = sensitivity_grid(d, phis, rho2s);
    nlohmann::json rows = nlohmann::json::array();
    bool any_ok = false, any_infeasible = false;
    for (const auto& cell : cells) {
        nlohmann::json row{{"phi", cell.phi}, {"rho2", cell.rho2}};
        if (cell.result) {
            any_ok = true;
            row["n"] = cell.result->n;
            row["power"] = cell.result->power;
            row["v_total"] = cell.result->variance.v_total;
            row["v_sh"] = cell.result->variance.v_sh;
            row["v_adj"] = cell.result->variance.v_adj;
            row["error"] = "";
        } else {
            if (cell.infeasible) any_infeasible = true;
            row["n"] = nullptr;
            row["power"] = nullptr;
            row["v_total"] = nullptr;
            row["v_sh"] = nullptr;
            row["v_adj"] = nullptr;
            row["error"] = cell.error;
        }
        rows.push_back(row);
    }
    emit(c, out, {"phi", "rho2", "n", "power", "v_total", "v_sh", "v_adj", "error"}, rows, rows);
    if (any_ok) return ok;
    return any_infeasible ? infeasible : invalid;
}

inline SimulationConfig simulation_config(const RunConfig& c) {
    SimulationConfig s;
    require(c.n_pop >= 1000, "--n-pop must be >= 1000");
    require(c.reps >= 1, "--reps must be >= 1");
    require(c.kappa >= 0.0, "--kappa must be >= 0");
    require(c.noise_sd >= 0.0, "--noise-sd must be >= 0");
    require(c.outcome == "continuous" || c.outcome == "binary", "--outcome must be continuous or binary");
    s.n_pop = c.n_pop;
    s.kappa = c.kappa;
    s.beta0 = c.beta0;
    s.tau = c.tau.value_or(1.0);
    s.noise_sd = c.noise_sd;
    s.outcome_kind = c.outcome == "binary" ? OutcomeKind::binary : OutcomeKind::continuous;
    s.binary_threshold = c.threshold;
    s.b_reps = c.reps;
    s.seed = c.seed;
    return s;
}

inline int cmd_simulate(const RunConfig& c, std::ostream& out) {
    const SimulationConfig s = simulation_config(c);
    require(c.n.has_value(), "--n is required");
    require(*c.n >= 4 && *c.n <= c.n_pop, "--n must lie in [4, --n-pop]");
    require(c.alpha > 0.0 && c.alpha < 0.5, "--alpha must lie in (0, 0.5)");
    require(c.mode == "subsample" || c.mode == "bootstrap", "--mode must be subsample or bootstrap");
    require(c.scores == "true" || c.scores == "fitted", "--scores must be true or fitted");
    require(c.sided == "one" || c.sided == "two", "--sided must be one or two");
    const TiltingFunction h{parse_estimand(c.estimand)};

    const Dataset pop = fit_logistic(generate(s));
    const auto summary = extract_summaries(pop);
    const auto est = empirical_power(
        pop, *c.n, s.b_reps, h, c.scores == "fitted", c.alpha,
        c.sided == "one" ? Sidedness::one : Sidedness::two,
        c.mode == "bootstrap" ? SamplingMode::with_replacement : SamplingMode::without_replacement,
        s.seed);
    io::PowerRecord rec{summary.phi_hat, summary.rho2_pooled, *c.n, est.power, est.mc_se, c.scores};
    const nlohmann::json j = rec;
    emit(c, out, {"phi", "rho2", "n", "power", "mc_se", "mode"}, nlohmann::json::array({j}), j);
    return ok;
}

inline int cmd_generate(const RunConfig& c, std::ostream& out) {
    const SimulationConfig s = simulation_config(c);
    Dataset pop = generate(s);
    if (c.fit) pop = fit_logistic(pop);
    std::ofstream file;
    std::ostream* os = &out;
    if (!c.output.empty()) {
        file.open(c.output);
        if (!file) throw flag_error("--output: cannot open '" + c.output + "'");
        os = &file;
    }
    io::write_csv(*os, pop);
    return ok;
}

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    RunConfig c;
    CLI::App app{"Sample size and power for propensity score weighting designs", "pspower"};
    app.set_config("--config", "", "Flat key = value file with flag names as keys");
    app.require_subcommand(1);
    app.fallthrough();

    app.add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--output", c.output, "Write the report to this file");

    app.add_option("--r", c.r, "Treated proportion");
    app.add_option("--phi", c.phi, "Overlap coefficient in (0, 1]");
    app.add_option("--rho2", c.rho2, "Squared confounder-outcome correlation");
    app.add_option("--effect", c.effect, "Standardized effect size");
    app.add_option("--tau", c.tau, "Raw effect (design: with --sd; simulate: true effect)");
    app.add_option("--sd", c.sd, "Outcome standard deviation for --tau");
    app.add_option("--alpha", c.alpha, "Type I error");
    app.add_option("--beta", c.beta, "Target power");
    app.add_option("--estimand", c.estimand, "ate, att or ato");
    app.add_option("--sided", c.sided, "one or two");
    app.add_option("--wate-norm", c.wate_norm, "ATT/ATO variance denominator: second-moment or squared-mean");
    app.add_option("--r2-bound", c.r2_bound, "Upper bound on rho2 (regression R^2)");
    app.add_option("--v0", c.v0, "Standardized variance with estimated scores");
    app.add_option("--n", c.n, "Sample size");
    app.add_option("--phi-grid", c.phi_grid, "Comma list or start:stop:step");
    app.add_option("--rho2-grid", c.rho2_grid, "Comma list or start:stop:step");

    app.add_option("--kappa", c.kappa, "Confounding strength");
    app.add_option("--beta0", c.beta0, "Propensity intercept");
    app.add_option("--n-pop", c.n_pop, "Superpopulation size");
    app.add_option("--noise-sd", c.noise_sd, "Outcome noise standard deviation");
    app.add_option("--outcome", c.outcome, "continuous or binary");
    app.add_option("--threshold", c.threshold, "Dichotomization threshold for binary outcomes");
    app.add_option("--reps", c.reps, "Monte Carlo replications");
    app.add_option("--seed", c.seed, "Master seed");
    app.add_option("--mode", c.mode, "subsample (without replacement) or bootstrap");
    app.add_option("--scores", c.scores, "true or fitted propensity scores");
    app.add_flag("--fit", c.fit, "generate: include fitted scores");

    auto* size = app.add_subcommand("size", "Minimal sample size");
    auto* power = app.add_subcommand("power", "Analytic power at --n");
    auto* sens = app.add_subcommand("sensitivity", "Sample sizes over a (phi, rho2) grid");
    auto* sim = app.add_subcommand("simulate", "Empirical power on a simulated superpopulation");
    auto* gen = app.add_subcommand("generate", "Write a simulated superpopulation as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return invalid;
    }

    try {
        if (size->parsed()) return cmd_size(c, out);
        if (power->parsed()) return cmd_power(c, out);
        if (sens->parsed()) return cmd_sensitivity(c, out);
        if (sim->parsed()) return cmd_simulate(c, out);
        if (gen->parsed()) return cmd_generate(c, out);
    } catch (const infeasible_overlap_error& e) {
        err << "error: " << e.what() << " (smallest attainable phi: " << e.min_attainable_phi() << ")\n";
        return infeasible;
    } catch (const domain_error& e) {
        err << "error: " << e.what() << '\n';
        return invalid;
    } catch (const bound_violation_error& e) {
        err << "error: " << e.what() << '\n';
        return invalid;
    } catch (const inconsistency_error& e) {
        err << "error: " << e.what() << '\n';
        return invalid;
    } catch (const error& e) {
        err << "error: " << e.what() << '\n';
        return failure;
    }
    return invalid;
}

}  // namespace pspower::cli
