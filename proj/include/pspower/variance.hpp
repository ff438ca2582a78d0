#pragma once

#include <cmath>
#include <string_view>

#include "pspower/errors.hpp"
#include "pspower/outcome.hpp"
#include "pspower/propensity.hpp"
#include "pspower/quadrature.hpp"

namespace pspower {

enum class Estimand { ATE, ATT, ATO };

inline std::string_view to_string(Estimand e) {
    switch (e) {
        case Estimand::ATE: return "ate";
        case Estimand::ATT: return "att";
        case Estimand::ATO: return "ato";
    }
    return "?";
}

/// Tilting function h of the weighted average treatment effect, expressed through the
/// propensity score e (or its logit w).
struct TiltingFunction {
    Estimand kind = Estimand::ATE;

    double of_score(double e) const {
        switch (kind) {
            case Estimand::ATE: return 1.0;
            case Estimand::ATT: return e;
            case Estimand::ATO: return e * (1.0 - e);
        }
        return 1.0;
    }
    double operator()(double w) const { return of_score(expit(w)); }

    /// Balancing weights w_1 = h / e and w_0 = h / (1 - e).
    double treated_weight(double e) const {
        switch (kind) {
            case Estimand::ATE: return 1.0 / e;
            case Estimand::ATT: return 1.0;
            case Estimand::ATO: return 1.0 - e;
        }
        return 1.0 / e;
    }
    double control_weight(double e) const {
        switch (kind) {
            case Estimand::ATE: return 1.0 / (1.0 - e);
            case Estimand::ATT: return e / (1.0 - e);
            case Estimand::ATO: return e;
        }
        return 1.0 / (1.0 - e);
    }
    /// d w_1 / d eta and d w_0 / d eta for a logistic score e = expit(eta).
    double treated_weight_slope(double e) const {
        switch (kind) {
            case Estimand::ATE: return -(1.0 - e) / e;
            case Estimand::ATT: return 0.0;
            case Estimand::ATO: return -e * (1.0 - e);
        }
        return 0.0;
    }
    double control_weight_slope(double e) const {
        switch (kind) {
            case Estimand::ATE: return e / (1.0 - e);
            case Estimand::ATT: return e / (1.0 - e);
            case Estimand::ATO: return e * (1.0 - e);
        }
        return 0.0;
    }
};

/// Standardized variance V~ = V~_SH + rho^2 V~_adj.
struct VarianceBreakdown {
    double v_total = 0.0;
    double v_sh = 0.0;
    double v_adj = 0.0;
};

/// Denominator of the WATE variance.
enum class WateNormalization {
    /// E[h^2], the default.
    second_moment,
    /// E[h]^2; the M-estimation (sandwich) asymptotic variance.
    squared_mean,
};

namespace detail {

inline void require_rho2(double rho2) {
    if (!(rho2 >= 0.0 && rho2 < 1.0)) {
        throw domain_error("rho2 must lie in [0, 1)");
    }
}

}  // namespace detail

/// Closed-form standardized ATE variance under the pooled convention (S^2 = 1).
inline VarianceBreakdown ate_variance_std(const LogitNormalPropensity& ps, double rho2) {
    detail::require_rho2(rho2);
    const double mu = ps.mu_e, s2 = ps.sigma_e2;
    const double e_minus = std::exp(-mu + 0.5 * s2);
    const double e_plus = std::exp(mu + 0.5 * s2);

    VarianceBreakdown out;
    out.v_sh = 2.0 + e_minus + e_plus;
    if (ps.degenerate()) {
        // sigma_e^2 / sigma_{e|z}^2 -> 1 in the randomized limit, so the rho^2 terms cancel.
        out.v_adj = 0.0;
        out.v_total = out.v_sh;
        return out;
    }
    const double cv1 = ps.cond_var[1], cv0 = ps.cond_var[0];
    if (!(cv1 > 0.0) || !(cv0 > 0.0)) {
        if (rho2 > 0.0) {
            throw inconsistency_error(
                "ate_variance_std: zero conditional variance of W_e with sigma_e^2 > 0");
        }
        out.v_adj = 0.0;
        out.v_total = out.v_sh;
        return out;
    }
    const double q1 = s2 * (s2 + 1.0) / cv1, q0 = s2 * (s2 + 1.0) / cv0;
    out.v_adj = s2 / cv1 + s2 / cv0 - 2.0 + (q1 - 1.0) * e_minus + (q0 - 1.0) * e_plus;
    out.v_total = rho2 * (s2 / cv1 + s2 / cv0) + 2.0 * (1.0 - rho2) +
                  (rho2 * q1 + (1.0 - rho2)) * e_minus + (rho2 * q0 + (1.0 - rho2)) * e_plus;
    return out;
}

/// Raw ATE variance (outcome units squared) of the latent model, unpooled.
inline double ate_variance_raw(const OutcomeModel& m, const LogitNormalPropensity& ps) {
    const double mu = ps.mu_e, s2 = ps.sigma_e2;
    const double a1 = m.slope[1], a0 = m.slope[0];
    const double e_minus = std::exp(-mu + 0.5 * s2);
    const double e_plus = std::exp(mu + 0.5 * s2);
    return (a1 * a1 + a0 * a0) * s2 + (m.resid_var[1] + m.resid_var[0]) +
           (a1 * a1 * s2 * (s2 + 1.0) + m.resid_var[1]) * e_minus +
           (a0 * a0 * s2 * (s2 + 1.0) + m.resid_var[0]) * e_plus;
}

/// Standardized latent model for pooled S^2 = 1 and rho_1^2 = rho_0^2 = rho2 (rho2 may be 1).
inline OutcomeModel standardized_model(const LogitNormalPropensity& ps, double rho2) {
    OutcomeModel m;
    for (int z = 0; z < 2; ++z) {
        const double cv = ps.cond_var[z];
        m.slope[z] = cv > 0.0 ? std::sqrt(rho2 / cv) : 0.0;
        m.resid_mean[z] = 0.0;
        m.resid_var[z] = 1.0 - rho2;
    }
    return m;
}

/// Variance of the Hajek WATE estimator under the latent model, by quadrature.
///
/// The 1/e and 1/(1-e) factors are split as 1 + exp(-/+w) and the exponential is absorbed
/// into a shifted Gaussian, so every integrand is bounded by a polynomial times h^2.
inline double wate_variance(const TiltingFunction& h, const OutcomeModel& m,
                            const LogitNormalPropensity& ps, const QuadratureSettings& q = {},
                            WateNormalization norm = WateNormalization::second_moment) {
    const double mu = ps.mu_e, s2 = ps.sigma_e2;
    if (ps.degenerate()) {
        // Constant score: h is constant and W_e equals its tilted mean.
        const double e = expit(mu);
        return m.resid_var[1] / e + m.resid_var[0] / (1.0 - e);
    }
    const GaussianWeight w{mu, s2};
    const GaussianWeight w_minus{mu - s2, s2};
    const GaussianWeight w_plus{mu + s2, s2};

    const double eh = gaussian_expectation(h, w, q);
    const double ehw = gaussian_expectation([&](double x) { return h(x) * x; }, w, q);
    const double centre = ehw / eh;

    auto arm_term = [&](int z) {
        const double a2 = m.slope[z] * m.slope[z], r2 = m.resid_var[z];
        auto g = [&, a2, r2](double x) {
            const double hx = h(x);
            return (a2 * (x - centre) * (x - centre) + r2) * hx * hx;
        };
        const double base = gaussian_expectation(g, w, q);
        const double shift = z == 1 ? std::exp(-mu + 0.5 * s2) : std::exp(mu + 0.5 * s2);
        return base + shift * gaussian_expectation(g, z == 1 ? w_minus : w_plus, q);
    };
    const double numer = arm_term(1) + arm_term(0);

    double denom = 0.0;
    if (norm == WateNormalization::squared_mean) {
        denom = eh * eh;
    } else if (h.kind == Estimand::ATE) {
        denom = 1.0;
    } else {
        denom = gaussian_expectation([&](double x) { const double hx = h(x); return hx * hx; }, w, q);
    }
    return numer / denom;
}

/// Standardized variance breakdown for any estimand. For ATE this is the closed form;
/// for ATT/ATO the quadrature result, which is affine in rho^2.
inline VarianceBreakdown variance_breakdown(Estimand estimand, const LogitNormalPropensity& ps,
                                            double rho2, const QuadratureSettings& q = {},
                                            WateNormalization norm = WateNormalization::second_moment) {
    detail::require_rho2(rho2);
    if (estimand == Estimand::ATE) {
        return ate_variance_std(ps, rho2);
    }
    const TiltingFunction h{estimand};
    VarianceBreakdown out;
    out.v_sh = wate_variance(h, standardized_model(ps, 0.0), ps, q, norm);
    out.v_adj = ps.degenerate() ? 0.0
                                : wate_variance(h, standardized_model(ps, 1.0), ps, q, norm) - out.v_sh;
    out.v_total = rho2 == 0.0 ? out.v_sh : wate_variance(h, standardized_model(ps, rho2), ps, q, norm);
    return out;
}

}  // namespace pspower
