#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <sstream>

#include "pspower/errors.hpp"
#include "pspower/propensity.hpp"

namespace pspower {

/// Observed-arm outcome summaries: means E_z, variances S_z^2 and correlations
/// rho_z = cor(Y, W_e | Z = z). Index 0 is control, 1 is treated.
struct OutcomeSummary {
    std::array<double, 2> mean{};
    std::array<double, 2> var{1.0, 1.0};
    std::array<double, 2> rho{};

    /// Pooled convention S_1^2 = S_0^2 = S^2 and rho_1 = rho_0 = rho.
    static OutcomeSummary pooled(double s2, double rho, double e1 = 0.0, double e0 = 0.0) {
        OutcomeSummary s;
        s.mean = {e0, e1};
        s.var = {s2, s2};
        s.rho = {rho, rho};
        s.validate();
        return s;
    }

    /// Remark-3 convention for binary outcomes: S^2 = p (1 - p) with p the pooled mean.
    static OutcomeSummary binary(double p, double rho, double e1, double e0) {
        if (!(p > 0.0 && p < 1.0)) {
            throw domain_error("OutcomeSummary::binary: pooled mean must lie in (0, 1)");
        }
        return pooled(p * (1.0 - p), rho, e1, e0);
    }

    void validate() const {
        for (int z = 0; z < 2; ++z) {
            if (!(var[z] > 0.0) || !std::isfinite(var[z])) {
                throw domain_error("OutcomeSummary: arm variances must be finite and > 0");
            }
            if (!(rho[z] > -1.0 && rho[z] < 1.0)) {
                throw domain_error("OutcomeSummary: correlations must lie in (-1, 1)");
            }
            if (!std::isfinite(mean[z])) {
                throw domain_error("OutcomeSummary: arm means must be finite");
            }
        }
    }
};

/// Latent model Y(z) = a_z W_e + eps_z, eps_z ~ N(mu_z, sigma_z^2).
struct OutcomeModel {
    std::array<double, 2> slope{};
    std::array<double, 2> resid_mean{};
    std::array<double, 2> resid_var{};
};

/// Upper bound R^2 on rho^2 from the outcome-on-covariates regression.
struct RSquaredBound {
    double r2 = 0.0;

    void validate() const {
        if (!(r2 >= 0.0 && r2 < 1.0)) {
            throw domain_error("RSquaredBound: r2 must lie in [0, 1)");
        }
    }
};

inline bool rho_bound_check(double rho2, const RSquaredBound& bound) {
    return rho2 <= bound.r2;
}

/// Solve (a_z, mu_z, sigma_z^2) from the observed summaries.
///
/// a_z = rho_z sqrt(S_z^2 / V(W_e | Z = z)); this is the form that keeps
/// S_z^2 = a_z^2 V(W_e | Z = z) + sigma_z^2.
inline OutcomeModel solve_outcome_model(const OutcomeSummary& s, const LogitNormalPropensity& ps,
                                        std::optional<RSquaredBound> bound = std::nullopt) {
    s.validate();
    if (bound) {
        bound->validate();
    }
    OutcomeModel m;
    for (int z = 0; z < 2; ++z) {
        const double rho = s.rho[z];
        if (bound && !rho_bound_check(rho * rho, *bound)) {
            std::ostringstream msg;
            msg << "solve_outcome_model: rho_" << z << "^2 = " << rho * rho
                << " exceeds the R^2 bound " << bound->r2;
            throw bound_violation_error(msg.str());
        }
        const double cv = ps.cond_var[z];
        if (!std::isfinite(cv) || !std::isfinite(ps.cond_mean[z]) || cv < 0.0) {
            throw domain_error("solve_outcome_model: propensity conditional moments must be finite");
        }
        if (cv == 0.0) {
            if (rho != 0.0) {
                throw inconsistency_error(
                    "solve_outcome_model: W_e is constant within an arm, so it cannot correlate "
                    "with the outcome (rho must be 0)");
            }
            m.slope[z] = 0.0;
        } else {
            m.slope[z] = rho * std::sqrt(s.var[z] / cv);
        }
        m.resid_mean[z] = s.mean[z] - m.slope[z] * ps.cond_mean[z];
        m.resid_var[z] = (1.0 - rho * rho) * s.var[z];
    }
    return m;
}

}  // namespace pspower
