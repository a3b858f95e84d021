#pragma once

#include "msde/common.hpp"
#include "msde/functional.hpp"
#include "msde/models.hpp"
#include "msde/monotone_operator.hpp"
#include "msde/simulation.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace msde {

/// Deterministic controlled recursion
///   y = X_k + b(X_k) dt + sigma(X_k) hdot(t_k) dt,  X_{k+1} = J_dt(y),
/// with the compensator tracked exactly as in simulate.
SolutionPath solve_skeleton(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                            const Control& h, const TimeGrid& grid);

enum class GradientMethod { FiniteDifference, Adjoint };

struct RateOptions {
    int control_intervals = 32;  // M
    int steps = 512;             // N, a multiple of M
    std::vector<double> penalties{1e2, 1e3, 1e4};
    int multiplier_updates = 20;  // per penalty stage
    double tol = 1e-6;            // gradient norm
    double resid = 1e-4;          // endpoint residual
    int max_iterations = 2000;    // per inner solve
    int restarts = 3;
    double restart_scale = 0.5;
    std::uint64_t seed = 0;
    GradientMethod gradient = GradientMethod::FiniteDifference;
};

struct RateResult {
    double value = 0.0;  // 1/2 |h*|^2
    Control control;
    SolutionPath skeleton;
    int iterations = 0;
    double gradient_norm = 0.0;
    double residual = 0.0;
    bool converged = false;
};

/// Cost of a skeleton path and its gradient with respect to every state.
using PathCost = std::function<double(const Matrix&)>;
using PathCostGradient = std::function<void(const Matrix&, Matrix&)>;

/// J(h) = 1/2 |h|^2 + cost(X^h) over piecewise-constant controls, with
/// gradients by forward differences or by the discrete adjoint of the
/// resolvent-step recursion. Controls are flattened column-major (d x M).
class ActionObjective {
public:
    ActionObjective(const Model& model, const MonotoneOperator& op, Vector x0, TimeGrid sim_grid,
                    TimeGrid control_grid, PathCost cost, PathCostGradient cost_gradient);

    int size() const noexcept { return dim_controls_; }
    Control to_control(const Vector& flat) const;
    Vector flatten(const Control& h) const;

    SolutionPath path(const Vector& flat) const;
    double value(const Vector& flat) const;
    Vector gradient_fd(const Vector& flat, double value_at) const;
    /// nullopt when the operator has no closed-form resolvent Jacobian.
    std::optional<Vector> gradient_adjoint(const Vector& flat) const;
    Vector gradient(const Vector& flat, double value_at, GradientMethod method) const;

private:
    Model model_;
    MonotoneOperator op_;
    Vector x0_;
    TimeGrid sim_grid_;
    TimeGrid control_grid_;
    PathCost cost_;
    PathCostGradient cost_gradient_;
    int dim_controls_;
};

/// I(target) restricted to endpoint events: minimizes 1/2 |h|^2 subject to
/// X^h(T) = target with an augmented-Lagrangian penalty and continuation over
/// opts.penalties, gradient descent with Barzilai-Borwein trial steps and
/// Armijo backtracking, and opts.restarts seeded random starts after h = 0.
RateResult minimize_endpoint_rate(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                                  const Eigen::Ref<const Vector>& target, double horizon, const RateOptions& opts = {});

struct LaplaceCandidate {
    double value = 0.0;  // inf of g(X^h) + 1/2 |h|^2
    double functional_value = 0.0;
    double action = 0.0;  // 1/2 |h*|^2
    Control control;
    SolutionPath skeleton;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
};

LaplaceCandidate evaluate_laplace_candidate(const Model& model, const MonotoneOperator& op,
                                            const Eigen::Ref<const Vector>& x0, const PathFunctional& g,
                                            double horizon, const RateOptions& opts = {});

}  // namespace msde
