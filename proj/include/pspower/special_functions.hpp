#pragma once

#include <cmath>
#include <string>

#include "pspower/errors.hpp"

namespace pspower {

namespace detail {

inline void require_positive(double x, const char* fn) {
    if (!std::isfinite(x) || x <= 0.0) {
        throw domain_error(std::string(fn) + ": argument must be finite and > 0, got " +
                           std::to_string(x));
    }
}

// Recurrence shifts the argument to at least this value before the asymptotic series.
inline constexpr long double kAsymptoticThreshold = 10.0L;

}  // namespace detail

/// Logistic function 1 / (1 + exp(-x)), evaluated without overflow.
inline double expit(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
    detail::require_positive(x, "log_gamma");
    return std::lgamma(x);
}

/// Digamma function psi(x) = d/dx ln Gamma(x), x > 0.
inline double digamma(double x) {
    detail::require_positive(x, "digamma");
    long double z = x;
    long double acc = 0.0L;
    while (z < detail::kAsymptoticThreshold) {
        acc -= 1.0L / z;
        z += 1.0L;
    }
    const long double inv = 1.0L / z;
    const long double inv2 = inv * inv;
    // -sum B_{2k} / (2k z^{2k}), k = 1..7
    long double series =
        inv2 * (1.0L / 12 -
                inv2 * (1.0L / 120 -
                        inv2 * (1.0L / 252 -
                                inv2 * (1.0L / 240 -
                                        inv2 * (1.0L / 132 -
                                                inv2 * (691.0L / 32760 - inv2 * (1.0L / 12)))))));
    acc += std::log(z) - 0.5L * inv - series;
    return static_cast<double>(acc);
}

/// Trigamma function psi'(x), x > 0.
inline double trigamma(double x) {
    detail::require_positive(x, "trigamma");
    long double z = x;
    long double acc = 0.0L;
    while (z < detail::kAsymptoticThreshold) {
        acc += 1.0L / (z * z);
        z += 1.0L;
    }
    const long double inv = 1.0L / z;
    const long double inv2 = inv * inv;
    // sum B_{2k} / z^{2k+1}, k = 1..7
    long double series =
        inv * inv2 *
        (1.0L / 6 -
         inv2 * (1.0L / 30 -
                 inv2 * (1.0L / 42 -
                         inv2 * (1.0L / 30 -
                                 inv2 * (5.0L / 66 - inv2 * (691.0L / 2730 - inv2 * (7.0L / 6)))))));
    acc += inv + 0.5L * inv2 + series;
    return static_cast<double>(acc);
}

/// ln[ Gamma(a + 1/2) / (sqrt(a) Gamma(a)) ], accurate for arbitrarily large a.
///
/// The plain lgamma difference cancels catastrophically once a is large; for a >= 8 the
/// Stirling remainders are differenced instead.
inline double log_gamma_half_ratio(double a) {
    detail::require_positive(a, "log_gamma_half_ratio");
    if (a < 8.0) {
        return std::lgamma(a + 0.5) - std::lgamma(a) - 0.5 * std::log(a);
    }
    auto stirling_tail = [](long double x) {
        const long double inv = 1.0L / x;
        const long double inv2 = inv * inv;
        return inv * (1.0L / 12 -
                      inv2 * (1.0L / 360 -
                              inv2 * (1.0L / 1260 -
                                      inv2 * (1.0L / 1680 - inv2 * (1.0L / 1188)))));
    };
    const long double la = a;
    const long double head = la * std::log1p(0.5L / la) - 0.5L;
    return static_cast<double>(head + stirling_tail(la + 0.5L) - stirling_tail(la));
}

}  // namespace pspower
