#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace msde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when an iterative method or a time-stepping scheme cannot produce a
/// finite, converged answer. Carries the last residual (or NaN when the
/// failure is not residual-based) and the time-step index where applicable.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, double residual = -1.0, long step = -1)
        : std::runtime_error(what), residual_(residual), step_(step) {}

    double residual() const noexcept { return residual_; }
    long step() const noexcept { return step_; }

private:
    double residual_;
    long step_;
};

/// Point-outside-domain and similar precondition failures on geometric input.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline bool all_finite(const Eigen::Ref<const Vector>& v) {
    return v.allFinite();
}

}  // namespace msde
