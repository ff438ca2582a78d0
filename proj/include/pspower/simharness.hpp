#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pspower/dataset.hpp"
#include "pspower/design.hpp"
#include "pspower/errors.hpp"
#include "pspower/hajek.hpp"
#include "pspower/logistic.hpp"
#include "pspower/normal.hpp"
#include "pspower/parallel.hpp"
#include "pspower/propensity.hpp"
#include "pspower/special_functions.hpp"
#include "pspower/variance.hpp"

namespace pspower {

enum class OutcomeKind { continuous, binary };

inline constexpr int kNumCovariates = 10;
inline constexpr std::array<double, kNumCovariates> kPropensityCoef{1, 1, -1, 0, -2, 1, 0.5, 0, 0, 0};
inline constexpr std::array<double, kNumCovariates> kOutcomeCoef{1, 1, -1, -1, 0, -1, -1, 0, 1, 1};

struct SimulationConfig {
    std::int64_t n_pop = 200000;
    double kappa = 1.0;
    /// Propensity intercept; resolved from kappa when empty.
    std::optional<double> beta0;
    double tau = 1.0;
    double noise_sd = 4.0;
    OutcomeKind outcome_kind = OutcomeKind::continuous;
    double binary_threshold = -2.0;
    std::int64_t b_reps = 2000;
    std::uint64_t seed = 20240601;

    void validate() const {
        if (n_pop < 1000) throw domain_error("n_pop must be >= 1000");
        if (b_reps < 1) throw domain_error("b_reps must be >= 1");
        if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw domain_error("kappa must be finite and >= 0");
        if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw domain_error("noise_sd must be >= 0");
        if (!std::isfinite(tau)) throw domain_error("tau must be finite");
        if (beta0 && !std::isfinite(*beta0)) throw domain_error("beta0 must be finite");
    }
};

namespace detail {

inline constexpr std::int64_t kGenerateChunk = 4096;

template <class Rng>
void draw_covariates(Rng& rng, double* x) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    constexpr double probs[4] = {0.2, 0.4, 0.6, 0.8};
    for (int j = 0; j < 4; ++j) {
        x[j] = unif(rng) < probs[j] ? 1.0 : 0.0;
    }
    x[4] = unif(rng);
    for (int j = 0; j < 3; ++j) {
        std::poisson_distribution<int> pois(static_cast<double>(j + 1));
        x[5 + j] = static_cast<double>(pois(rng));
    }
    // Gamma(shape 2, rate 3)
    x[8] = std::gamma_distribution<double>(2.0, 1.0 / 3.0)(rng);
    const double g1 = std::gamma_distribution<double>(2.0, 1.0)(rng);
    const double g2 = std::gamma_distribution<double>(3.0, 1.0)(rng);
    x[9] = g1 / (g1 + g2);
}

inline double dot_coef(const double* x, const std::array<double, kNumCovariates>& c) {
    double s = 0.0;
    for (int j = 0; j < kNumCovariates; ++j) s += x[j] * c[static_cast<std::size_t>(j)];
    return s;
}

}  // namespace detail

/// Intercept giving a treated share of 1/2: tabulated values on the standard kappa grid,
/// otherwise bisection on a 10^6-unit covariate pilot.
inline double resolve_intercept(double kappa, std::uint64_t seed = 7, std::int64_t pilot = 1000000) {
    constexpr std::array<std::pair<double, double>, 6> table{
        {{0.0, 0.0}, {0.25, -0.248}, {0.5, -0.489}, {0.75, -0.722}, {0.9, -0.860}, {1.0, -0.951}}};
    for (const auto& [k, b0] : table) {
        if (std::abs(kappa - k) < 1e-12) return b0;
    }
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
        throw domain_error("resolve_intercept: kappa must be finite and >= 0");
    }
    std::vector<double> lin(static_cast<std::size_t>(pilot));
    auto rng = make_rng_stream(seed, 0xB0);
    double x[kNumCovariates];
    for (auto& v : lin) {
        detail::draw_covariates(rng, x);
        v = kappa * detail::dot_coef(x, kPropensityCoef);
    }
    auto mean_score = [&](double b0) {
        double s = 0.0;
        for (double v : lin) s += expit(b0 + v);
        return s / static_cast<double>(lin.size());
    };
    double lo = -50.0, hi = 50.0;
    for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_score(mid) < 0.5 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Superpopulation with ten covariates, logistic treatment assignment and Gaussian
/// (optionally dichotomized) potential outcomes. Deterministic in cfg.seed regardless of
/// the thread count.
inline Dataset generate(const SimulationConfig& cfg, unsigned threads = default_thread_count()) {
    cfg.validate();
    const double b0 = cfg.beta0 ? *cfg.beta0 : resolve_intercept(cfg.kappa, cfg.seed);
    const std::int64_t n = cfg.n_pop;
    Dataset d;
    d.covariates.resize(n, kNumCovariates);
    d.z.resize(n);
    d.y.resize(n);
    d.y1.resize(n);
    d.y0.resize(n);
    d.true_scores.resize(n);

    const auto chunks = static_cast<std::size_t>((n + detail::kGenerateChunk - 1) / detail::kGenerateChunk);
    parallel_for(
        chunks,
        [&](std::size_t c) {
            auto rng = make_rng_stream(cfg.seed, c);
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            std::normal_distribution<double> gauss(0.0, 1.0);
            const std::int64_t begin = static_cast<std::int64_t>(c) * detail::kGenerateChunk;
            const std::int64_t end = std::min(n, begin + detail::kGenerateChunk);
            double x[kNumCovariates];
            for (std::int64_t i = begin; i < end; ++i) {
                detail::draw_covariates(rng, x);
                for (int j = 0; j < kNumCovariates; ++j) d.covariates(i, j) = x[j];
                double e = expit(b0 + cfg.kappa * detail::dot_coef(x, kPropensityCoef));
                e = std::clamp(e, 1e-15, 1.0 - 1e-15);
                d.true_scores[i] = e;
                d.z[i] = unif(rng) < e ? 1.0 : 0.0;
                const double base = detail::dot_coef(x, kOutcomeCoef);
                double y1 = base + cfg.tau + cfg.noise_sd * gauss(rng);
                double y0 = base + cfg.noise_sd * gauss(rng);
                if (cfg.outcome_kind == OutcomeKind::binary) {
                    y1 = y1 > cfg.binary_threshold ? 1.0 : 0.0;
                    y0 = y0 > cfg.binary_threshold ? 1.0 : 0.0;
                }
                d.y1[i] = y1;
                d.y0[i] = y0;
                d.y[i] = d.z[i] == 1.0 ? y1 : y0;
            }
        },
        threads);
    return d;
}

/// Design inputs read off a dataset with a fitted propensity model.
struct SummaryExtract {
    double r = 0.0;
    double phi_hat = 0.0;
    double e1 = 0.0, e0 = 0.0;
    double s1_2 = 0.0, s0_2 = 0.0;
    double rho1 = 0.0, rho0 = 0.0;
    double s2_pooled = 0.0;
    double rho2_pooled = 0.0;
    double r2 = 0.0;
};

inline SummaryExtract extract_summaries(const Dataset& data) {
    if (!data.fitted_scores || !data.fitted_linear) {
        throw domain_error("extract_summaries: fit the propensity model first");
    }
    const auto n = data.z.size();
    const Eigen::VectorXd& w = *data.fitted_linear;
    SummaryExtract s;

    double cnt[2] = {0, 0}, my[2] = {0, 0}, mw[2] = {0, 0};
    for (Eigen::Index i = 0; i < n; ++i) {
        const int a = data.z[i] == 1.0 ? 1 : 0;
        cnt[a] += 1;
        my[a] += data.y[i];
        mw[a] += w[i];
    }
    if (cnt[0] < 2 || cnt[1] < 2) {
        throw estimation_error("extract_summaries: each arm needs at least two units");
    }
    for (int a = 0; a < 2; ++a) {
        my[a] /= cnt[a];
        mw[a] /= cnt[a];
    }
    double syy[2] = {0, 0}, sww[2] = {0, 0}, syw[2] = {0, 0};
    for (Eigen::Index i = 0; i < n; ++i) {
        const int a = data.z[i] == 1.0 ? 1 : 0;
        const double dy = data.y[i] - my[a], dw = w[i] - mw[a];
        syy[a] += dy * dy;
        sww[a] += dw * dw;
        syw[a] += dy * dw;
    }
    for (int a = 0; a < 2; ++a) {
        if (!(syy[a] > 0.0) || !(sww[a] > 0.0)) {
            throw estimation_error("extract_summaries: zero outcome or score variance in an arm");
        }
    }
    const double nd = static_cast<double>(n);
    s.r = cnt[1] / nd;
    const Eigen::VectorXd& e = *data.fitted_scores;
    s.phi_hat = overlap_from_scores(std::span<const double>(e.data(), static_cast<std::size_t>(e.size())), s.r);
    s.e1 = my[1];
    s.e0 = my[0];
    s.s1_2 = syy[1] / (cnt[1] - 1);
    s.s0_2 = syy[0] / (cnt[0] - 1);
    s.rho1 = syw[1] / std::sqrt(syy[1] * sww[1]);
    s.rho0 = syw[0] / std::sqrt(syy[0] * sww[0]);
    s.s2_pooled = (syy[0] + syy[1]) / (nd - 2.0);
    // pooled: arm-centered outcome against the linear predictor centered over the whole sample
    const double w_bar = (cnt[0] * mw[0] + cnt[1] * mw[1]) / nd;
    const double sww_total = sww[0] + sww[1] + cnt[0] * (mw[0] - w_bar) * (mw[0] - w_bar) +
                             cnt[1] * (mw[1] - w_bar) * (mw[1] - w_bar);
    const double c = syw[0] + syw[1];
    s.rho2_pooled = c * c / ((syy[0] + syy[1]) * sww_total);

    Eigen::VectorXd yc(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        yc[i] = data.y[i] - my[data.z[i] == 1.0 ? 1 : 0];
    }
    const Eigen::MatrixXd xt = with_intercept(data.covariates);
    const Eigen::MatrixXd gram = xt.transpose() * xt;
    const Eigen::VectorXd coef = gram.ldlt().solve(xt.transpose() * yc);
    const double ssr = (yc - xt * coef).squaredNorm();
    const double sst = (yc.array() - yc.mean()).square().sum();
    s.r2 = 1.0 - ssr / sst;
    return s;
}

enum class SamplingMode { without_replacement, with_replacement };

inline std::string_view to_string(SamplingMode m) {
    return m == SamplingMode::with_replacement ? "with_replacement" : "without_replacement";
}

struct PowerEstimate {
    double power = 0.0;
    double mc_se = 0.0;
    std::int64_t rejections = 0;
    std::int64_t failures = 0;
    std::int64_t reps = 0;
    /// Largest balancing weight seen in any replicate.
    double max_weight = 0.0;
};

/// Sorted sample of n distinct indices from [0, pop) (Floyd's algorithm).
template <class Rng>
std::vector<std::size_t> sample_without_replacement(std::size_t pop, std::size_t n, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(n);
    std::vector<char> taken(pop, 0);
    for (std::size_t j = pop - n; j < pop; ++j) {
        const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
        const std::size_t pick = taken[t] ? j : t;
        taken[pick] = 1;
        out.push_back(pick);
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Rejection rate of the Wald test tau_hat / sqrt(V_hat / n) over b_reps subsamples of size
/// n drawn from `pop`. Replicate k uses the RNG stream (seed, k).
inline PowerEstimate empirical_power(const Dataset& pop, std::int64_t n, std::int64_t b_reps,
                                     const TiltingFunction& h, bool use_fitted, double alpha = 0.05,
                                     Sidedness sided = Sidedness::two,
                                     SamplingMode mode = SamplingMode::without_replacement,
                                     std::uint64_t seed = 1,
                                     unsigned threads = default_thread_count()) {
    const auto pop_n = static_cast<std::int64_t>(pop.size());
    if (n < 4 || n > pop_n) {
        throw domain_error("empirical_power: need 4 <= n <= population size");
    }
    if (b_reps < 1) {
        throw domain_error("empirical_power: b_reps must be >= 1");
    }
    if (!(alpha > 0.0 && alpha < 0.5)) {
        throw domain_error("empirical_power: alpha must lie in (0, 0.5)");
    }
    const double zq = critical_value(alpha, sided);
    const auto reps = static_cast<std::size_t>(b_reps);
    std::vector<signed char> outcome(reps, -1);
    std::vector<double> max_w(reps, 0.0);

    parallel_for(
        reps,
        [&](std::size_t k) {
            auto rng = make_rng_stream(seed, k);
            std::vector<std::size_t> rows;
            const auto un = static_cast<std::size_t>(n);
            if (mode == SamplingMode::without_replacement) {
                rows = sample_without_replacement(pop.size(), un, rng);
            } else {
                rows.resize(un);
                std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
                for (auto& r : rows) r = pick(rng);
            }
            try {
                Dataset sub = pop.subset(rows);
                if (use_fitted) {
                    sub = fit_logistic(sub);
                }
                const double est = hajek(sub, h, use_fitted);
                const double v = hajek_sandwich_variance(sub, h, use_fitted);
                if (!(v > 0.0) || !std::isfinite(v)) {
                    return;
                }
                const double t = est / std::sqrt(v / static_cast<double>(n));
                const bool reject = sided == Sidedness::two ? std::abs(t) > zq : t > zq;
                outcome[k] = reject ? 1 : 0;
                const Eigen::VectorXd& e = use_fitted ? *sub.fitted_scores : sub.true_scores;
                double mw = 0.0;
                for (Eigen::Index i = 0; i < e.size(); ++i) {
                    mw = std::max(mw, sub.z[i] == 1.0 ? h.treated_weight(e[i]) : h.control_weight(e[i]));
                }
                max_w[k] = mw;
            } catch (const error&) {
                // counted as a failed replicate
            }
        },
        threads);

    PowerEstimate out;
    out.reps = b_reps;
    for (std::size_t k = 0; k < reps; ++k) {
        if (outcome[k] < 0) {
            ++out.failures;
        } else {
            out.rejections += outcome[k];
        }
        out.max_weight = std::max(out.max_weight, max_w[k]);
    }
    const auto ok = b_reps - out.failures;
    if (ok > 0) {
        out.power = static_cast<double>(out.rejections) / static_cast<double>(ok);
        out.mc_se = std::sqrt(out.power * (1.0 - out.power) / static_cast<double>(ok));
    }
    return out;
}

/// Correlation between the sorted values and normal quantiles at the plotting positions
/// (i - 0.375) / (n + 0.25).
inline double normality_diagnostic(std::vector<double> values) {
    const std::size_t n = values.size();
    if (n < 30) {
        throw domain_error("normality_diagnostic: need at least 30 values");
    }
    std::sort(values.begin(), values.end());
    if (values.front() == values.back()) {
        throw domain_error("normality_diagnostic: constant input has no defined correlation");
    }
    const double nd = static_cast<double>(n);
    double mx = 0.0, mq = 0.0;
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (nd + 0.25));
        mx += values[i];
        mq += q[i];
    }
    mx /= nd;
    mq /= nd;
    double sxx = 0.0, sqq = 0.0, sxq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = values[i] - mx, dq = q[i] - mq;
        sxx += dx * dx;
        sqq += dq * dq;
        sxq += dx * dq;
    }
    return sxq / std::sqrt(sxx * sqq);
}

}  // namespace pspower
