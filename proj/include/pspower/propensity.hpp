#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>

#include "pspower/errors.hpp"
#include "pspower/quadrature.hpp"
#include "pspower/special_functions.hpp"

namespace pspower {

/// Overlap at or above this value is treated as the randomized-trial limit.
inline constexpr double kRandomizedPhi = 1.0 - 1e-9;

/// User-facing description of the treatment assignment: r = Pr(Z = 1) and overlap phi.
struct OverlapSpec {
    double r = 0.5;
    double phi = 1.0;

    void validate() const {
        if (!(r > 0.0 && r < 1.0)) {
            throw domain_error("OverlapSpec: r must lie in (0, 1)");
        }
        if (!(phi > 0.0 && phi <= 1.0)) {
            throw domain_error("OverlapSpec: phi must lie in (0, 1]");
        }
    }
};

/// Beta(a, b) law of the propensity score.
///
/// The randomized-trial limit (a, b -> infinity with a/(a+b) = r) is represented with
/// `degenerate = true` and infinite parameters.
struct BetaPropensity {
    double a = 1.0;
    double b = 1.0;
    bool degenerate = false;
    double limit_r = 0.5;

    static BetaPropensity randomized(double r) {
        constexpr double inf = std::numeric_limits<double>::infinity();
        return {inf, inf, true, r};
    }

    double r() const { return degenerate ? limit_r : a / (a + b); }
    double k() const { return a + b; }
};

/// Logit-normal propensity law: e(X) = expit(W_e), W_e ~ N(mu_e, sigma_e2), with the
/// arm-conditional mean and variance of W_e (index 0 = control, 1 = treated).
struct LogitNormalPropensity {
    double mu_e = 0.0;
    double sigma_e2 = 0.0;
    std::array<double, 2> cond_mean{};
    std::array<double, 2> cond_var{};
    /// Pr(Z = 1) implied by the logit-normal law, E[expit(W_e)].
    double implied_r = 0.5;

    bool degenerate() const { return sigma_e2 == 0.0; }
    GaussianWeight weight() const { return {mu_e, sigma_e2}; }
};

/// Bhattacharyya overlap of the arm-conditional propensity densities under Beta(a, b).
inline double overlap_from_beta(const BetaPropensity& p) {
    if (p.degenerate) {
        return 1.0;
    }
    if (!(p.a > 0.0) || !(p.b > 0.0) || !std::isfinite(p.a) || !std::isfinite(p.b)) {
        throw domain_error("overlap_from_beta: a and b must be finite and > 0");
    }
    return std::exp(log_gamma_half_ratio(p.a) + log_gamma_half_ratio(p.b));
}

/// phi as a function of the concentration k = a + b at fixed r.
inline double overlap_at_concentration(double k, double r) {
    return overlap_from_beta({k * r, k * (1.0 - r)});
}

/// Smallest k on which phi(k) is proven monotone: max{1/(2r), 1/(2(1-r))}.
inline double monotone_concentration_floor(double r) {
    return std::max(0.5 / r, 0.5 / (1.0 - r));
}

/// Solve Beta(k r, k (1 - r)) whose overlap equals spec.phi, by bisection on k.
inline BetaPropensity solve_beta(const OverlapSpec& spec, double tol = 1e-10) {
    spec.validate();
    if (!(tol > 0.0 && tol <= 1e-4)) {
        throw domain_error("solve_beta: tol must lie in (0, 1e-4]");
    }
    const double r = spec.r, target = spec.phi;
    if (target >= kRandomizedPhi) {
        return BetaPropensity::randomized(r);
    }

    constexpr double kCap = 1e12;
    double lo = monotone_concentration_floor(r) * (1.0 + 1e-12);
    const double phi_lo = overlap_at_concentration(lo, r);
    if (target < phi_lo - tol) {
        std::ostringstream msg;
        msg << "solve_beta: phi = " << target << " is below the minimum attainable overlap "
            << phi_lo << " at r = " << r;
        throw infeasible_overlap_error(msg.str(), phi_lo);
    }
    if (std::abs(target - phi_lo) <= tol) {
        return {lo * r, lo * (1.0 - r)};
    }

    double hi = 2.0 * lo;
    while (overlap_at_concentration(hi, r) < target) {
        lo = hi;
        hi *= 2.0;
        if (hi > kCap) {
            std::ostringstream msg;
            msg << "solve_beta: phi = " << target
                << " is numerically indistinguishable from 1 at r = " << r;
            throw infeasible_overlap_error(msg.str(), phi_lo);
        }
    }

    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 400; ++it) {
        mid = 0.5 * (lo + hi);
        const double f = overlap_at_concentration(mid, r);
        if (std::abs(f - target) <= tol || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
            break;
        }
        (f < target ? lo : hi) = mid;
    }
    return {mid * r, mid * (1.0 - r)};
}

/// Map Beta(a, b) to the KL-closest logit-normal law and compute the arm-conditional
/// moments of W_e.
inline LogitNormalPropensity beta_to_logitnormal(const BetaPropensity& p,
                                                 const QuadratureSettings& q = {}) {
    LogitNormalPropensity out;
    if (p.degenerate) {
        const double mu = logit(p.limit_r);
        out.mu_e = mu;
        out.sigma_e2 = 0.0;
        out.cond_mean = {mu, mu};
        out.cond_var = {0.0, 0.0};
        out.implied_r = p.limit_r;
        return out;
    }
    out.mu_e = digamma(p.a) - digamma(p.b);
    out.sigma_e2 = trigamma(p.a) + trigamma(p.b);
    const GaussianWeight w = out.weight();

    for (Arm z : {Arm::control, Arm::treated}) {
        const int i = static_cast<int>(z);
        const double sign = z == Arm::treated ? 1.0 : -1.0;
        const double mass = logistic_tilted_moment(0, z, w, q);
        const double mean = logistic_tilted_moment(1, z, w, q) / mass;
        // Central form avoids the E[W^2] - E[W]^2 cancellation when |mu_e| >> sigma_e.
        const double var =
            gaussian_expectation(
                [&](double x) { return (x - mean) * (x - mean) * expit(sign * x); }, w, q) /
            mass;
        out.cond_mean[i] = mean;
        out.cond_var[i] = var;
        if (z == Arm::treated) {
            out.implied_r = mass;
        }
    }
    return out;
}

/// Full (r, phi) -> logit-normal chain.
inline LogitNormalPropensity propensity_from_overlap(const OverlapSpec& spec, double tol = 1e-10,
                                                     const QuadratureSettings& q = {}) {
    return beta_to_logitnormal(solve_beta(spec, tol), q);
}

/// Empirical overlap from fitted scores: mean(sqrt(e (1 - e))) / sqrt(r (1 - r)).
inline double overlap_from_scores(std::span<const double> scores, double r) {
    if (scores.empty()) {
        throw domain_error("overlap_from_scores: empty score list");
    }
    if (!(r > 0.0 && r < 1.0)) {
        throw domain_error("overlap_from_scores: r must lie in (0, 1)");
    }
    double acc = 0.0;
    for (double e : scores) {
        if (!(e > 0.0 && e < 1.0)) {
            throw domain_error("overlap_from_scores: scores must lie in (0, 1)");
        }
        acc += std::sqrt(e * (1.0 - e));
    }
    return acc / static_cast<double>(scores.size()) / std::sqrt(r * (1.0 - r));
}

}  // namespace pspower
