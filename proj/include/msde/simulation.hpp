#pragma once

#include "msde/common.hpp"
#include "msde/models.hpp"
#include "msde/monotone_operator.hpp"

#include <cstdint>
#include <limits>

namespace msde {

/// Uniform grid on [0, T] with N steps.
struct TimeGrid {
    double horizon = 1.0;
    int steps = 1;

    static TimeGrid make(double horizon, int steps);

    double dt() const noexcept { return horizon / steps; }
    double time(int k) const noexcept { return k == steps ? horizon : k * dt(); }
    bool operator==(const TimeGrid&) const = default;
};

/// Piecewise-constant control hdot on M equal intervals; values is d x M.
struct Control {
    TimeGrid grid;
    Matrix values;

    static Control zero(const TimeGrid& grid, int noise_dim);
    static Control constant(const TimeGrid& grid, const Eigen::Ref<const Vector>& value);

    int noise_dim() const noexcept { return static_cast<int>(values.rows()); }
    int intervals() const noexcept { return grid.steps; }
    /// Control interval that contains simulation step k of an N-step grid.
    /// Requires N to be a multiple of M.
    int interval_of_step(int k, int sim_steps) const noexcept { return k / (sim_steps / grid.steps); }
    void check_compatible(const TimeGrid& sim_grid) const;
};

/// Integral of |hdot|^2 over [0, T], exact for piecewise-constant controls.
double action_norm(const Control& h);

/// Brownian increments, d x N, each N(0, dt).
struct BrownianPath {
    TimeGrid grid;
    Matrix increments;
    std::uint64_t seed = 0;

    static BrownianPath generate(const TimeGrid& grid, int noise_dim, std::uint64_t seed);
    /// The same Brownian path on a grid with steps / factor steps.
    BrownianPath coarsened(int factor) const;
};

/// Discrete solution pair (X, K). Columns are time points 0..N.
struct SolutionPath {
    TimeGrid grid;
    Matrix X;
    Matrix K;
    Vector total_variation;
    double epsilon = 0.0;
    std::uint64_t seed = 0;

    int dim() const noexcept { return static_cast<int>(X.rows()); }
    int steps() const noexcept { return grid.steps; }
    /// Max over k of |X_k - other_k|.
    double sup_distance(const SolutionPath& other) const;
};

/// Resolvent-step Euler for dX in b dt + sqrt(eps) sigma dW - A(X) dt:
///   y = X_k + b(X_k) dt + sqrt(eps) sigma(X_k) dW_k,
///   X_{k+1} = J_dt(y),  K_{k+1} = K_k + (y - X_{k+1}).
/// Requires 0 < eps <= 1 and x0 in the closure of D(A).
SolutionPath simulate(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                      double eps, const TimeGrid& grid, const BrownianPath& noise);

/// As simulate with the extra drift sigma(X_k) hdot(t_k) dt. eps = 0 is
/// accepted and gives the skeleton recursion exactly.
SolutionPath simulate_controlled(const Model& model, const MonotoneOperator& op,
                                 const Eigen::Ref<const Vector>& x0, double eps, const Control& h,
                                 const TimeGrid& grid, const BrownianPath& noise);

struct SolutionPropertyReport {
    double tolerance = 0.0;
    double probe_min_slack = std::numeric_limits<double>::infinity();
    double pair_min_slack = std::numeric_limits<double>::quiet_NaN();
    double cepa_min_slack = std::numeric_limits<double>::infinity();
    bool probe_ok = false;
    bool pair_ok = true;  // vacuous without a companion path
    bool cepa_ok = false;
    bool passed() const noexcept { return probe_ok && pair_ok && cepa_ok; }
};

/// Slack constant C in tol = C sqrt(dt) (1 + sup|X|) (1 + |K|_T).
inline constexpr double kPropertySlackConstant = 0.05;

/// Discrete forms of the solution inequalities, each evaluated over every
/// prefix [0, t_k] with increments dK_k = K_{k+1} - K_k paired with the
/// post-resolvent state X_{k+1}:
///   (a) sum <X - alpha, dK - beta dt> >= -tol   for sampled (alpha, beta) in Gr(A)
///   (b) sum <X - X', dK - dK'> >= -tol          against `companion`, if given
///   (c) sum <X - a, dK> >= gamma |K| - mu sum |X - a| dt - gamma mu t - tol
SolutionPropertyReport check_solution_properties(const SolutionPath& path, const MonotoneOperator& op,
                                                 int probe_count, std::uint64_t seed,
                                                 const SolutionPath* companion = nullptr);

}  // namespace msde
