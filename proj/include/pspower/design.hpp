#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pspower/errors.hpp"
#include "pspower/normal.hpp"
#include "pspower/outcome.hpp"
#include "pspower/parallel.hpp"
#include "pspower/propensity.hpp"
#include "pspower/variance.hpp"

namespace pspower {

enum class Sidedness { one, two };

/// Everything a design calculation needs. `tau_std` is the standardized effect tau / S.
struct DesignInputs {
    double alpha = 0.05;
    double beta = 0.8;
    double tau_std = 0.2;
    Sidedness sidedness = Sidedness::two;
    Estimand estimand = Estimand::ATE;
    OverlapSpec overlap{};
    double rho2 = 0.0;
    std::optional<RSquaredBound> r2_bound;
    /// Standardized estimated-score variance V~_0; enables the exact (non-bounding) formula.
    std::optional<double> v0_override;

    double solve_tol = 1e-10;
    QuadratureSettings quadrature{};
    WateNormalization wate_normalization = WateNormalization::second_moment;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 0.5)) {
            throw domain_error("alpha must lie in (0, 0.5)");
        }
        if (!(beta > 0.5 && beta < 1.0)) {
            throw domain_error("beta (target power) must lie in (0.5, 1)");
        }
        if (!(tau_std > 0.0) || !std::isfinite(tau_std)) {
            throw domain_error("standardized effect size must be finite and > 0");
        }
        overlap.validate();
        detail::require_rho2(rho2);
        if (r2_bound) {
            r2_bound->validate();
            if (!rho_bound_check(rho2, *r2_bound)) {
                throw bound_violation_error("rho2 = " + std::to_string(rho2) +
                                            " exceeds the R^2 bound " +
                                            std::to_string(r2_bound->r2));
            }
        }
        if (v0_override && !(*v0_override > 0.0)) {
            throw domain_error("v0 override must be > 0");
        }
    }
};

/// Solved propensity chain behind a design.
struct DesignTrace {
    BetaPropensity beta;
    LogitNormalPropensity propensity;
};

struct DesignResult {
    std::int64_t n = 0;
    double power = 0.0;
    VarianceBreakdown variance;
    DesignTrace trace;
};

/// z_{1 - alpha/2} (two-sided) or z_{1 - alpha} (one-sided).
inline double critical_value(double alpha, Sidedness s) {
    return normal_quantile(1.0 - (s == Sidedness::two ? 0.5 * alpha : alpha));
}

inline DesignTrace solve_trace(const DesignInputs& d) {
    DesignTrace t;
    t.beta = solve_beta(d.overlap, d.solve_tol);
    t.propensity = beta_to_logitnormal(t.beta, d.quadrature);
    return t;
}

inline VarianceBreakdown design_variance(const DesignInputs& d, const DesignTrace& t) {
    return variance_breakdown(d.estimand, t.propensity, d.rho2, d.quadrature, d.wate_normalization);
}

namespace detail {

inline double power_from_variance(const DesignInputs& d, double v, double n) {
    const double zq = critical_value(d.alpha, d.sidedness);
    if (d.v0_override) {
        return 1.0 - normal_cdf((zq * std::sqrt(v) - d.tau_std * std::sqrt(n)) /
                                std::sqrt(*d.v0_override));
    }
    return 1.0 - normal_cdf(zq - d.tau_std * std::sqrt(n / v));
}

inline std::int64_t size_from_variance(const DesignInputs& d, double v) {
    const double zq = critical_value(d.alpha, d.sidedness);
    const double zb = normal_quantile(d.beta);
    double raw = 0.0;
    if (d.v0_override) {
        const double root = zq * std::sqrt(v) + zb * std::sqrt(*d.v0_override);
        raw = root * root / (d.tau_std * d.tau_std);
    } else {
        raw = v * (zq + zb) * (zq + zb) / (d.tau_std * d.tau_std);
    }
    return std::max<std::int64_t>(2, static_cast<std::int64_t>(std::ceil(raw)));
}

}  // namespace detail

/// Minimal sample size N = ceil(V~ (z_q + z_beta)^2 / tau~^2).
inline DesignResult sample_size(const DesignInputs& d) {
    d.validate();
    DesignResult out;
    out.trace = solve_trace(d);
    out.variance = design_variance(d, out.trace);
    out.n = detail::size_from_variance(d, out.variance.v_total);
    out.power = detail::power_from_variance(d, out.variance.v_total, static_cast<double>(out.n));
    return out;
}

/// Analytic power 1 - Phi(z_q - tau~ sqrt(n / V~)) at sample size n.
inline double power_at(const DesignInputs& d, std::int64_t n) {
    d.validate();
    if (n < 2) {
        throw domain_error("power_at: n must be >= 2");
    }
    const auto trace = solve_trace(d);
    const auto v = design_variance(d, trace);
    return detail::power_from_variance(d, v.v_total, static_cast<double>(n));
}

/// Two-sample z-test size (z_q + z_beta)^2 / (r (1 - r) tau~^2).
inline std::int64_t ztest_size(double alpha, double beta, double r, double tau_std,
                               Sidedness sided = Sidedness::two) {
    if (!(alpha > 0.0 && alpha < 0.5) || !(beta > 0.5 && beta < 1.0) || !(r > 0.0 && r < 1.0) ||
        !(tau_std > 0.0)) {
        throw domain_error("ztest_size: arguments out of range");
    }
    const double z = critical_value(alpha, sided) + normal_quantile(beta);
    return static_cast<std::int64_t>(std::ceil(z * z / (r * (1.0 - r) * tau_std * tau_std)));
}

struct GridCell {
    double phi = 1.0;
    double rho2 = 0.0;
    std::optional<DesignResult> result;
    std::string error;
    bool infeasible = false;
};

/// Sample sizes over a (phi, rho^2) grid. Rows come back sorted by phi descending, then
/// rho^2 ascending; a failing cell records its message and the grid still completes.
inline std::vector<GridCell> sensitivity_grid(const DesignInputs& base, std::vector<double> phis,
                                              std::vector<double> rho2s,
                                              unsigned threads = default_thread_count()) {
    if (phis.empty() || rho2s.empty()) {
        throw domain_error("sensitivity_grid: grids must be non-empty");
    }
    std::sort(phis.begin(), phis.end(), std::greater<>());
    std::sort(rho2s.begin(), rho2s.end());

    // One propensity solve per phi, shared by its row.
    std::vector<std::optional<DesignTrace>> traces(phis.size());
    std::vector<std::string> trace_errors(phis.size());
    std::vector<char> trace_infeasible(phis.size(), 0);
    parallel_for(
        phis.size(),
        [&](std::size_t i) {
            try {
                DesignInputs d = base;
                d.overlap.phi = phis[i];
                d.overlap.validate();
                traces[i] = solve_trace(d);
            } catch (const infeasible_overlap_error& e) {
                trace_errors[i] = e.what();
                trace_infeasible[i] = 1;
            } catch (const error& e) {
                trace_errors[i] = e.what();
            }
        },
        threads);

    std::vector<GridCell> cells(phis.size() * rho2s.size());
    parallel_for(
        cells.size(),
        [&](std::size_t idx) {
            const std::size_t i = idx / rho2s.size(), j = idx % rho2s.size();
            GridCell& cell = cells[idx];
            cell.phi = phis[i];
            cell.rho2 = rho2s[j];
            if (!traces[i]) {
                cell.error = trace_errors[i];
                cell.infeasible = trace_infeasible[i] != 0;
                return;
            }
            try {
                DesignInputs d = base;
                d.overlap.phi = phis[i];
                d.rho2 = rho2s[j];
                d.validate();
                DesignResult res;
                res.trace = *traces[i];
                res.variance = design_variance(d, res.trace);
                res.n = detail::size_from_variance(d, res.variance.v_total);
                res.power = detail::power_from_variance(d, res.variance.v_total,
                                                        static_cast<double>(res.n));
                cell.result = res;
            } catch (const error& e) {
                cell.error = e.what();
            }
        },
        threads);
    return cells;
}

}  // namespace pspower
