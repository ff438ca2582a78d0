#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>

#include <Eigen/Dense>

#include "pspower/errors.hpp"

namespace pspower {

/// Coefficients of a fitted logistic propensity model (intercept first).
struct LogisticFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd std_err;
    int iterations = 0;
    double gradient_norm = 0.0;
    /// Some fitted scores hit the [1e-12, 1 - 1e-12] clamp (quasi-separation).
    bool separation = false;
};

/// Unit-level table: covariates X (n x p), treatment z, observed y, both potential
/// outcomes (simulation only), the true propensity and optionally a fitted one.
struct Dataset {
    Eigen::MatrixXd covariates;
    Eigen::VectorXd z;
    Eigen::VectorXd y;
    Eigen::VectorXd y1;
    Eigen::VectorXd y0;
    Eigen::VectorXd true_scores;
    std::optional<Eigen::VectorXd> fitted_scores;
    std::optional<Eigen::VectorXd> fitted_linear;
    std::optional<LogisticFit> fit;

    std::size_t size() const { return static_cast<std::size_t>(z.size()); }
    std::size_t num_covariates() const { return static_cast<std::size_t>(covariates.cols()); }

    void validate() const {
        const auto n = z.size();
        if (covariates.rows() != n || y.size() != n || y1.size() != n || y0.size() != n ||
            true_scores.size() != n) {
            throw domain_error("Dataset: column lengths differ");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (z[i] != 0.0 && z[i] != 1.0) {
                throw domain_error("Dataset: z must be binary");
            }
            if (y[i] != (z[i] == 1.0 ? y1[i] : y0[i])) {
                throw domain_error("Dataset: y must equal z*y1 + (1-z)*y0");
            }
            if (!(true_scores[i] > 0.0 && true_scores[i] < 1.0)) {
                throw domain_error("Dataset: true scores must lie in (0, 1)");
            }
        }
    }

    /// Rows in the given order (repeats allowed). Fitted columns are carried along but the
    /// model fit itself is dropped, since it belongs to the parent sample.
    Dataset subset(std::span<const std::size_t> rows) const {
        Dataset out;
        const auto m = static_cast<Eigen::Index>(rows.size());
        out.covariates.resize(m, covariates.cols());
        out.z.resize(m);
        out.y.resize(m);
        out.y1.resize(m);
        out.y0.resize(m);
        out.true_scores.resize(m);
        if (fitted_scores) out.fitted_scores.emplace(m);
        if (fitted_linear) out.fitted_linear.emplace(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]);
            out.covariates.row(k) = covariates.row(i);
            out.z[k] = z[i];
            out.y[k] = y[i];
            out.y1[k] = y1[i];
            out.y0[k] = y0[i];
            out.true_scores[k] = true_scores[i];
            if (fitted_scores) (*out.fitted_scores)[k] = (*fitted_scores)[i];
            if (fitted_linear) (*out.fitted_linear)[k] = (*fitted_linear)[i];
        }
        return out;
    }
};

/// Independent, reproducible stream number `stream` of a master seed (SplitMix64 mixing).
inline std::mt19937_64 make_rng_stream(std::uint64_t seed, std::uint64_t stream) {
    auto mix = [](std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    };
    const std::uint64_t a = mix(seed), b = mix(a ^ mix(stream + 0x632BE59BD9B4E019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace pspower
