#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <type_traits>

#include "pspower/errors.hpp"
#include "pspower/special_functions.hpp"

namespace pspower {

/// Normal law N(mu, sigma2) used as the integration weight.
struct GaussianWeight {
    double mu = 0.0;
    double sigma2 = 1.0;

    void validate() const {
        if (!std::isfinite(mu) || !std::isfinite(sigma2) || sigma2 <= 0.0) {
            throw domain_error("GaussianWeight: mu must be finite and sigma2 finite and > 0");
        }
    }
    double sigma() const { return std::sqrt(sigma2); }
};

struct QuadratureSettings {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    std::size_t max_subdivisions = 50000;
    /// Half-width of the integration window in units of sigma.
    double truncation_radius = 8.0;

    void validate() const {
        if (!(abs_tol > 0.0 && abs_tol < 1.0) || !(rel_tol > 0.0 && rel_tol < 1.0)) {
            throw domain_error("QuadratureSettings: tolerances must lie in (0, 1)");
        }
        if (max_subdivisions == 0) {
            throw domain_error("QuadratureSettings: max_subdivisions must be positive");
        }
        if (!(truncation_radius >= 8.0) || !std::isfinite(truncation_radius)) {
            throw domain_error("QuadratureSettings: truncation_radius must be >= 8");
        }
    }
};

enum class Arm : int { control = 0, treated = 1 };

namespace detail {

template <class F>
class AdaptiveSimpson {
public:
    AdaptiveSimpson(F& f, std::size_t budget) : f_(f), budget_(budget) {}

    double run(double a, double b, double eps) {
        const double fa = f_(a), fb = f_(b), fm = f_(0.5 * (a + b));
        return recurse(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), eps, 0);
    }

    double error_bound() const { return error_; }
    bool exhausted() const { return exhausted_; }

private:
    static double simpson(double a, double b, double fa, double fm, double fb) {
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    }

    double recurse(double a, double b, double fa, double fm, double fb, double whole, double eps,
                   int depth) {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = f_(lm), frm = f_(rm);
        const double left = simpson(a, m, fa, flm, fm);
        const double right = simpson(m, b, fm, frm, fb);
        const double delta = left + right - whole;
        if (std::abs(delta) <= 15.0 * eps || exhausted_ || depth >= kMaxDepth) {
            if (std::abs(delta) > 15.0 * eps) {
                exhausted_ = true;
            }
            error_ += std::abs(delta) / 15.0;
            return left + right + delta / 15.0;
        }
        if (++subdivisions_ > budget_) {
            exhausted_ = true;
            error_ += std::abs(delta) / 15.0;
            return left + right + delta / 15.0;
        }
        return recurse(a, m, fa, flm, fm, left, 0.5 * eps, depth + 1) +
               recurse(m, b, fm, frm, fb, right, 0.5 * eps, depth + 1);
    }

    static constexpr int kMaxDepth = 60;
    F& f_;
    std::size_t budget_;
    std::size_t subdivisions_ = 0;
    double error_ = 0.0;
    bool exhausted_ = false;
};

}  // namespace detail

/// Adaptive Simpson rule with Richardson correction on [a, b].
///
/// The interval is first cut into 16 panels; the global tolerance
/// max(abs_tol, rel_tol * |coarse estimate|) is shared among them by width.
template <class F>
double integrate(F&& f, double a, double b, const QuadratureSettings& s = {}) {
    s.validate();
    constexpr int kPanels = 16;
    const double h = (b - a) / kPanels;

    double coarse = 0.0;
    for (int i = 0; i < kPanels; ++i) {
        const double lo = a + i * h, hi = lo + h;
        coarse += h / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
    }
    const double eps = std::max(s.abs_tol, s.rel_tol * std::abs(coarse));

    detail::AdaptiveSimpson<std::remove_reference_t<F>> rule(f, s.max_subdivisions);
    double total = 0.0;
    for (int i = 0; i < kPanels; ++i) {
        const double lo = a + i * h;
        total += rule.run(lo, i + 1 == kPanels ? b : lo + h, eps / kPanels);
    }
    if (rule.exhausted()) {
        std::ostringstream msg;
        msg << "adaptive Simpson did not converge within " << s.max_subdivisions
            << " subdivisions (estimate " << total << ", error bound " << rule.error_bound()
            << ")";
        throw convergence_error(msg.str(), total, rule.error_bound());
    }
    return total;
}

/// E[f(W)] for W ~ N(mu, sigma2), truncated to mu +/- R sigma.
template <class F>
double gaussian_expectation(F&& f, const GaussianWeight& w, const QuadratureSettings& s = {}) {
    w.validate();
    const double mu = w.mu, sd = w.sigma();
    constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    auto integrand = [&](double t) { return f(mu + sd * t) * inv_sqrt_2pi * std::exp(-0.5 * t * t); };
    const double R = s.truncation_radius;
    return integrate(integrand, -R, R, s);
}

/// Unnormalized arm-tilted moment: E[W^m expit((-1)^{1-z} W)] for W ~ N(mu, sigma2), m in {0,1,2}.
inline double logistic_tilted_moment(int m, Arm z, const GaussianWeight& w,
                                     const QuadratureSettings& s = {}) {
    if (m < 0 || m > 2) {
        throw domain_error("logistic_tilted_moment: m must be 0, 1 or 2");
    }
    const double sign = z == Arm::treated ? 1.0 : -1.0;
    return gaussian_expectation(
        [m, sign](double x) { return std::pow(x, m) * expit(sign * x); }, w, s);
}

}  // namespace pspower
