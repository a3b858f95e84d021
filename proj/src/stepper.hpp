#pragma once

// Shared resolvent-step recursion behind simulate, simulate_controlled and
// solve_skeleton. Keeping a single loop is what makes the eps = 0 controlled
// path bitwise equal to the skeleton path.

#include "msde/simulation.hpp"

#include <cmath>
#include <string>

namespace msde::detail {

inline void check_common(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                         const TimeGrid& grid) {
    if (model.dim() != op.dim()) throw std::invalid_argument("model and operator dimensions differ");
    if (x0.size() != model.dim()) throw std::invalid_argument("initial point dimension mismatch");
    if (!x0.allFinite()) throw std::invalid_argument("initial point must be finite");
    if (!op.in_domain_closure(x0)) throw DomainError("initial point outside the domain of the operator");
    if (grid.steps < 1 || !(grid.horizon > 0.0)) throw std::invalid_argument("invalid time grid");
}

/// control may be null (no control drift); noise may be null when
/// noise_scale == 0.
inline SolutionPath advance(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                            const TimeGrid& grid, const Control* control, double noise_scale,
                            const BrownianPath* noise) {
    const int m = model.dim();
    const int d = model.noise_dim();
    const int n = grid.steps;
    const double dt = grid.dt();

    SolutionPath path;
    path.grid = grid;
    path.X.resize(m, n + 1);
    path.K.resize(m, n + 1);
    path.total_variation.resize(n + 1);
    path.X.col(0) = x0;
    path.K.col(0).setZero();
    path.total_variation[0] = 0.0;

    Vector x = x0;
    Vector y(m), b(m), next(m), dk(m), kick(d);
    Matrix sig(m, d);
    double tv = 0.0;
    for (int k = 0; k < n; ++k) {
        model.drift_into(x, b);
        model.diffusion_into(x, sig);
        y = x + b * dt;
        if (control != nullptr) {
            kick = control->values.col(control->interval_of_step(k, n)) * dt;
            y.noalias() += sig * kick;
        }
        if (noise_scale != 0.0) {
            kick = noise->increments.col(k) * noise_scale;
            y.noalias() += sig * kick;
        }
        next = y;
        op.resolvent_inplace(dt, next);
        if (!next.allFinite()) {
            throw NumericalError("non-finite state at step " + std::to_string(k + 1), -1.0, k + 1);
        }
        dk = y - next;
        tv += dk.norm();
        path.K.col(k + 1) = path.K.col(k) + dk;
        path.X.col(k + 1) = next;
        path.total_variation[k + 1] = tv;
        x = next;
    }
    return path;
}

}  // namespace msde::detail
