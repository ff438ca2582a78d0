#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "pspower/dataset.hpp"
#include "pspower/errors.hpp"
#include "pspower/logistic.hpp"
#include "pspower/variance.hpp"

namespace pspower {

namespace detail {

inline const Eigen::VectorXd& scores_for(const Dataset& data, bool use_fitted) {
    if (use_fitted) {
        if (!data.fitted_scores) {
            throw domain_error("fitted scores requested but the dataset has none");
        }
        return *data.fitted_scores;
    }
    return data.true_scores;
}

struct ArmMeans {
    double xi1 = 0.0;
    double xi0 = 0.0;
};

inline ArmMeans weighted_arm_means(const Dataset& data, const TiltingFunction& h, bool use_fitted) {
    const Eigen::VectorXd& e = scores_for(data, use_fitted);
    double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
    for (Eigen::Index i = 0; i < data.z.size(); ++i) {
        if (data.z[i] == 1.0) {
            const double w = h.treated_weight(e[i]);
            num1 += w * data.y[i];
            den1 += w;
        } else {
            const double w = h.control_weight(e[i]);
            num0 += w * data.y[i];
            den0 += w;
        }
    }
    if (!(den1 > 0.0) || !(den0 > 0.0)) {
        throw estimation_error("hajek: a treatment arm is empty or carries zero weight");
    }
    return {num1 / den1, num0 / den0};
}

}  // namespace detail

/// Hajek (ratio-normalized) weighting estimator of the WATE with tilting function h.
inline double hajek(const Dataset& data, const TiltingFunction& h, bool use_fitted) {
    const auto m = detail::weighted_arm_means(data, h, use_fitted);
    return m.xi1 - m.xi0;
}

/// Empirical M-estimation sandwich variance of the Hajek estimator, on the sqrt(n) scale
/// (divide by n for Var(tau_hat)).
///
/// With use_fitted = false the scores are treated as known and the result is
/// b11 / a11^2 + b22 / a22^2. With use_fitted = true the estimating equations are stacked
/// with the logistic score X~(z - e) and the full A^{-1} B A^{-T} is formed.
inline double hajek_sandwich_variance(const Dataset& data, const TiltingFunction& h,
                                      bool use_fitted) {
    const Eigen::VectorXd& e = detail::scores_for(data, use_fitted);
    const auto means = detail::weighted_arm_means(data, h, use_fitted);
    const auto n = data.z.size();
    const double nd = static_cast<double>(n);

    if (!use_fitted) {
        double a11 = 0.0, a22 = 0.0, b11 = 0.0, b22 = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (data.z[i] == 1.0) {
                const double w = h.treated_weight(e[i]);
                const double phi = w * (data.y[i] - means.xi1);
                a11 += w;
                b11 += phi * phi;
            } else {
                const double w = h.control_weight(e[i]);
                const double phi = w * (data.y[i] - means.xi0);
                a22 += w;
                b22 += phi * phi;
            }
        }
        a11 /= nd, a22 /= nd, b11 /= nd, b22 /= nd;
        return b11 / (a11 * a11) + b22 / (a22 * a22);
    }

    const Eigen::MatrixXd xt = with_intercept(data.covariates);
    const auto p = xt.cols();
    const auto dim = 2 + p;
    if (n < p + 2) {
        throw rank_deficiency_error("hajek_sandwich_variance: need n >= p + 2");
    }

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd phi(n, dim);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ei = e[i], zi = data.z[i], yi = data.y[i];
        const auto xi = xt.row(i);
        if (zi == 1.0) {
            const double w = h.treated_weight(ei);
            a(0, 0) += w;
            a.block(0, 2, 1, p) -= (yi - means.xi1) * h.treated_weight_slope(ei) * xi;
            phi(i, 0) = w * (yi - means.xi1);
            phi(i, 1) = 0.0;
        } else {
            const double w = h.control_weight(ei);
            a(1, 1) += w;
            a.block(1, 2, 1, p) -= (yi - means.xi0) * h.control_weight_slope(ei) * xi;
            phi(i, 0) = 0.0;
            phi(i, 1) = w * (yi - means.xi0);
        }
        phi.block(i, 2, 1, p) = (zi - ei) * xi;
        info.noalias() += ei * (1.0 - ei) * xi.transpose() * xi;
    }
    a.bottomRightCorner(p, p) = info;
    a /= nd;
    const Eigen::MatrixXd b = phi.transpose() * phi / nd;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) {
        throw rank_deficiency_error(
            "hajek_sandwich_variance: the propensity information block is singular; drop "
            "collinear or constant covariates");
    }
    Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
    u[0] = 1.0;
    u[1] = -1.0;
    // u' A^{-1} B A^{-T} u = v' B v with v = A^{-T} u
    const Eigen::VectorXd v = lu.transpose().solve(u);
    return v.dot(b * v);
}

}  // namespace pspower
