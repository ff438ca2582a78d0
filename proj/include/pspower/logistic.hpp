#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "pspower/dataset.hpp"
#include "pspower/errors.hpp"
#include "pspower/special_functions.hpp"

namespace pspower {

/// [1, X] with an intercept column first.
inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
}

/// Logistic regression of z on X by iteratively reweighted least squares (Newton).
///
/// Stops once ||X~'(z - e)|| / n <= tol. Returns a copy of `data` carrying the fitted
/// linear predictor and scores.
inline Dataset fit_logistic(const Dataset& data, double tol = 1e-10, int max_iter = 100) {
    constexpr double kClamp = 1e-12;
    const Eigen::MatrixXd xt = with_intercept(data.covariates);
    const auto n = xt.rows(), p = xt.cols();
    if (n <= p) {
        throw rank_deficiency_error("fit_logistic: need more units than coefficients");
    }
    const double nd = static_cast<double>(n);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta(n), e(n), w(n);
    std::vector<double> trace;
    bool separation = false;
    Eigen::LLT<Eigen::MatrixXd> info;

    for (int it = 0; it <= max_iter; ++it) {
        eta.noalias() = xt * beta;
        separation = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            double ei = expit(eta[i]);
            if (ei < kClamp || ei > 1.0 - kClamp) {
                separation = true;
                ei = std::clamp(ei, kClamp, 1.0 - kClamp);
            }
            e[i] = ei;
            w[i] = ei * (1.0 - ei);
        }
        const Eigen::VectorXd grad = xt.transpose() * (data.z - e);
        const double gnorm = grad.norm() / nd;
        trace.push_back(gnorm);

        Eigen::MatrixXd hess = xt.transpose() * w.asDiagonal() * xt;
        info.compute(hess);
        if (info.info() != Eigen::Success) {
            throw rank_deficiency_error(
                "fit_logistic: information matrix is singular (collinear covariates or an "
                "empty arm)");
        }
        if (gnorm <= tol) {
            Dataset out = data;
            LogisticFit fit;
            fit.coef = beta;
            fit.std_err = info.solve(Eigen::MatrixXd::Identity(p, p)).diagonal().cwiseSqrt();
            fit.iterations = it;
            fit.gradient_norm = gnorm;
            fit.separation = separation;
            out.fit = std::move(fit);
            out.fitted_linear = eta;
            out.fitted_scores = e;
            return out;
        }
        beta += info.solve(grad);
    }
    std::ostringstream msg;
    msg << "fit_logistic: no convergence after " << max_iter << " iterations; gradient norms:";
    for (double g : trace) {
        msg << ' ' << g;
    }
    throw convergence_error(msg.str(), trace.back(), trace.back());
}

}  // namespace pspower
