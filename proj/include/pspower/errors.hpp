#pragma once

#include <stdexcept>
#include <string>

namespace pspower {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument is outside the domain of the operation.
class domain_error : public error {
public:
    using error::error;
};

/// Adaptive quadrature or an iterative solver ran out of budget.
class convergence_error : public error {
public:
    convergence_error(const std::string& what, double estimate, double error_bound)
        : error(what), estimate_(estimate), error_bound_(error_bound) {}

    double estimate() const noexcept { return estimate_; }
    double error_bound() const noexcept { return error_bound_; }

private:
    double estimate_;
    double error_bound_;
};

/// The requested overlap is below what is attainable for the given treatment proportion.
class infeasible_overlap_error : public error {
public:
    infeasible_overlap_error(const std::string& what, double min_phi)
        : error(what), min_phi_(min_phi) {}

    double min_attainable_phi() const noexcept { return min_phi_; }

private:
    double min_phi_;
};

/// Inputs contradict each other (e.g. a constant propensity correlated with the outcome).
class inconsistency_error : public error {
public:
    using error::error;
};

/// A correlation exceeds the user supplied R-squared bound.
class bound_violation_error : public error {
public:
    using error::error;
};

/// A moment matrix that must be inverted is singular.
class rank_deficiency_error : public error {
public:
    using error::error;
};

/// A data-driven estimator cannot be formed (empty arm, zero variance, ...).
class estimation_error : public error {
public:
    using error::error;
};

}  // namespace pspower
