#include "msde/skeleton.hpp"

#include "msde/rng.hpp"
#include "stepper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace msde {

SolutionPath solve_skeleton(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                            const Control& h, const TimeGrid& grid) {
    detail::check_common(model, op, x0, grid);
    if (h.noise_dim() != model.noise_dim()) throw std::invalid_argument("control dimension differs from noise dimension");
    h.check_compatible(grid);
    SolutionPath p = detail::advance(model, op, x0, grid, &h, 0.0, nullptr);
    p.epsilon = 0.0;
    return p;
}

// ---------------------------------------------------------------------------
// ActionObjective

ActionObjective::ActionObjective(const Model& model, const MonotoneOperator& op, Vector x0, TimeGrid sim_grid,
                                 TimeGrid control_grid, PathCost cost, PathCostGradient cost_gradient)
    : model_(model),
      op_(op),
      x0_(std::move(x0)),
      sim_grid_(sim_grid),
      control_grid_(control_grid),
      cost_(std::move(cost)),
      cost_gradient_(std::move(cost_gradient)),
      dim_controls_(model.noise_dim() * control_grid.steps) {
    detail::check_common(model_, op_, x0_, sim_grid_);
    Control::zero(control_grid_, model_.noise_dim()).check_compatible(sim_grid_);
}

Control ActionObjective::to_control(const Vector& flat) const {
    Control h{control_grid_, Matrix(model_.noise_dim(), control_grid_.steps)};
    h.values = Eigen::Map<const Matrix>(flat.data(), model_.noise_dim(), control_grid_.steps);
    return h;
}

Vector ActionObjective::flatten(const Control& h) const {
    return Eigen::Map<const Vector>(h.values.data(), h.values.size());
}

SolutionPath ActionObjective::path(const Vector& flat) const {
    const Control h = to_control(flat);
    return detail::advance(model_, op_, x0_, sim_grid_, &h, 0.0, nullptr);
}

double ActionObjective::value(const Vector& flat) const {
    const SolutionPath p = path(flat);
    return 0.5 * flat.squaredNorm() * control_grid_.dt() + cost_(p.X);
}

Vector ActionObjective::gradient_fd(const Vector& flat, double value_at) const {
    Vector grad(flat.size());
    Vector probe = flat;
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        const double step = 1e-6 * (1.0 + std::abs(flat[i]));
        probe[i] = flat[i] + step;
        grad[i] = (value(probe) - value_at) / step;
        probe[i] = flat[i];
    }
    return grad;
}

std::optional<Vector> ActionObjective::gradient_adjoint(const Vector& flat) const {
    if (op_.variant() == OperatorVariant::SumWithLipschitz) return std::nullopt;
    const Control h = to_control(flat);
    const int m = model_.dim();
    const int d = model_.noise_dim();
    const int n = sim_grid_.steps;
    const double dt = sim_grid_.dt();

    // forward pass keeping the pre-resolvent points
    Matrix X(m, n + 1);
    Matrix Y(m, n);
    X.col(0) = x0_;
    Vector b(m);
    Matrix sig(m, d);
    Vector kick(d);
    for (int k = 0; k < n; ++k) {
        const Vector x = X.col(k);
        model_.drift_into(x, b);
        model_.diffusion_into(x, sig);
        Vector y = x + b * dt;
        kick = h.values.col(h.interval_of_step(k, n)) * dt;
        y.noalias() += sig * kick;
        Y.col(k) = y;
        op_.resolvent_inplace(dt, y);
        X.col(k + 1) = y;
    }

    Matrix cost_grad;
    cost_gradient_(X, cost_grad);
    Matrix grad_h = Matrix::Zero(d, control_grid_.steps);
    Vector lam = cost_grad.col(n);
    for (int k = n - 1; k >= 0; --k) {
        const auto jac = op_.resolvent_jacobian(dt, Y.col(k));
        if (!jac) return std::nullopt;
        const Vector mu = jac->transpose() * lam;
        const Vector x = X.col(k);
        const int j = h.interval_of_step(k, n);
        model_.diffusion_into(x, sig);
        grad_h.col(j).noalias() += dt * (sig.transpose() * mu);
        const Vector u = h.values.col(j);
        const Matrix dstate = model_.drift_jacobian(x) + model_.diffusion_action_jacobian(x, u);
        lam = mu + dt * (dstate.transpose() * mu) + cost_grad.col(k);
    }
    grad_h += h.values * control_grid_.dt();
    return Vector(Eigen::Map<const Vector>(grad_h.data(), grad_h.size()));
}

Vector ActionObjective::gradient(const Vector& flat, double value_at, GradientMethod method) const {
    if (method == GradientMethod::Adjoint) {
        if (auto g = gradient_adjoint(flat)) return *g;
    }
    return gradient_fd(flat, value_at);
}

// ---------------------------------------------------------------------------
// Optimizer

namespace {

struct DescentResult {
    Vector x;
    double f = 0.0;
    Vector grad;
    int iterations = 0;
    bool converged = false;
};

DescentResult gradient_descent(const ActionObjective& obj, Vector x, double tol, int max_iter,
                               GradientMethod method) {
    DescentResult r;
    r.f = obj.value(x);
    r.grad = obj.gradient(x, r.f, method);
    double alpha = 1.0;
    constexpr double kArmijo = 1e-4;
    for (int it = 0; it < max_iter; ++it) {
        const double gn2 = r.grad.squaredNorm();
        if (std::sqrt(gn2) < tol) {
            r.converged = true;
            break;
        }
        double trial = alpha;
        bool accepted = false;
        Vector xn;
        double fn = 0.0;
        for (int ls = 0; ls < 60; ++ls) {
            xn = x - trial * r.grad;
            fn = obj.value(xn);
            if (std::isfinite(fn) && fn <= r.f - kArmijo * trial * gn2) {
                accepted = true;
                break;
            }
            trial *= 0.5;
        }
        if (!accepted) break;
        Vector gn = obj.gradient(xn, fn, method);
        const Vector s = xn - x;
        const Vector yv = gn - r.grad;
        const double sy = s.dot(yv);
        alpha = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * trial;
        alpha = std::clamp(alpha, 1e-12, 1e12);
        x = std::move(xn);
        r.f = fn;
        r.grad = std::move(gn);
        ++r.iterations;
    }
    r.x = std::move(x);
    if (!r.converged) r.converged = r.grad.norm() < tol;
    return r;
}

void validate_options(const RateOptions& opts) {
    if (opts.control_intervals < 1 || opts.steps < 1 || opts.steps % opts.control_intervals != 0) {
        throw std::invalid_argument("rate options: steps must be a positive multiple of control_intervals");
    }
    if (opts.penalties.empty()) throw std::invalid_argument("rate options: empty penalty schedule");
    for (double rho : opts.penalties) {
        if (!(rho > 0.0)) throw std::invalid_argument("rate options: penalties must be positive");
    }
    if (!(opts.tol > 0.0) || !(opts.resid > 0.0)) throw std::invalid_argument("rate options: tolerances must be positive");
    if (opts.restarts < 0 || opts.max_iterations < 1 || opts.multiplier_updates < 1) {
        throw std::invalid_argument("rate options: iteration counts must be positive");
    }
}

std::vector<Vector> starting_points(int size, const RateOptions& opts) {
    std::vector<Vector> starts;
    starts.push_back(Vector::Zero(size));
    for (int r = 0; r < opts.restarts; ++r) {
        Engine eng = make_engine(derive_seed(opts.seed, static_cast<std::uint64_t>(r), 0x72737472));
        std::normal_distribution<double> normal(0.0, opts.restart_scale);
        Vector h(size);
        for (int i = 0; i < size; ++i) h[i] = normal(eng);
        starts.push_back(std::move(h));
    }
    return starts;
}

// true if candidate (conv_a, val_a) should replace the incumbent
bool better(bool conv_a, double val_a, bool conv_b, double val_b) {
    if (conv_a != conv_b) return conv_a;
    return val_a < val_b - 1e-9;
}

}  // namespace

RateResult minimize_endpoint_rate(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                                  const Eigen::Ref<const Vector>& target, double horizon, const RateOptions& opts) {
    validate_options(opts);
    const TimeGrid sim = TimeGrid::make(horizon, opts.steps);
    const TimeGrid ctrl = TimeGrid::make(horizon, opts.control_intervals);
    if (target.size() != model.dim() || !target.allFinite()) throw std::invalid_argument("rate: bad target");
    if (!op.in_domain_closure(target)) throw DomainError("rate: target outside the domain of the operator");
    const Vector y = target;

    std::optional<RateResult> best;
    for (const Vector& start : starting_points(model.noise_dim() * ctrl.steps, opts)) {
        Vector h = start;
        Vector nu = Vector::Zero(model.dim());
        int iterations = 0;
        bool converged = false;
        double grad_norm = std::numeric_limits<double>::infinity();
        double resid = std::numeric_limits<double>::infinity();
        for (double rho : opts.penalties) {
            double prev = std::numeric_limits<double>::infinity();
            for (int u = 0; u < opts.multiplier_updates; ++u) {
                const Vector mult = nu;
                auto cost = [&y, mult, rho](const Matrix& X) {
                    const Vector r = X.col(X.cols() - 1) - y;
                    return mult.dot(r) + 0.5 * rho * r.squaredNorm();
                };
                auto cost_grad = [&y, mult, rho](const Matrix& X, Matrix& g) {
                    g.setZero(X.rows(), X.cols());
                    g.col(X.cols() - 1) = mult + rho * (X.col(X.cols() - 1) - y);
                };
                ActionObjective obj(model, op, x0, sim, ctrl, cost, cost_grad);
                DescentResult dr = gradient_descent(obj, h, opts.tol, opts.max_iterations, opts.gradient);
                iterations += dr.iterations;
                h = dr.x;
                grad_norm = dr.grad.norm();
                const Vector r = obj.path(h).X.col(sim.steps) - y;
                resid = r.norm();
                if (resid < opts.resid && dr.converged) {
                    converged = true;
                    break;
                }
                nu += rho * r;
                if (resid > 0.25 * prev) break;
                prev = resid;
            }
            if (converged) break;
        }

        RateResult res;
        res.control = Control{ctrl, Eigen::Map<const Matrix>(h.data(), model.noise_dim(), ctrl.steps)};
        res.value = 0.5 * action_norm(res.control);
        res.iterations = iterations;
        res.gradient_norm = grad_norm;
        res.residual = resid;
        res.converged = converged;
        if (!best || better(res.converged, res.value, best->converged, best->value)) {
            best = std::move(res);
        }
    }
    best->skeleton = solve_skeleton(model, op, x0, best->control, sim);
    return std::move(*best);
}

LaplaceCandidate evaluate_laplace_candidate(const Model& model, const MonotoneOperator& op,
                                            const Eigen::Ref<const Vector>& x0, const PathFunctional& g,
                                            double horizon, const RateOptions& opts) {
    validate_options(opts);
    const TimeGrid sim = TimeGrid::make(horizon, opts.steps);
    const TimeGrid ctrl = TimeGrid::make(horizon, opts.control_intervals);
    if (g.kind == FunctionalKind::EndpointDistanceCap && g.target.size() != model.dim()) {
        throw std::invalid_argument("laplace candidate: functional target dimension mismatch");
    }
    if (g.kind == FunctionalKind::RunningMaxCap && g.component >= model.dim()) {
        throw std::invalid_argument("laplace candidate: functional component out of range");
    }
    auto cost = [&g](const Matrix& X) { return g.value(X); };
    auto cost_grad = [&g](const Matrix& X, Matrix& out) { g.gradient(X, out); };
    ActionObjective obj(model, op, x0, sim, ctrl, cost, cost_grad);

    std::optional<LaplaceCandidate> best;
    for (const Vector& start : starting_points(obj.size(), opts)) {
        DescentResult dr = gradient_descent(obj, start, opts.tol, opts.max_iterations, opts.gradient);
        LaplaceCandidate c;
        c.control = obj.to_control(dr.x);
        c.value = dr.f;
        c.action = 0.5 * action_norm(c.control);
        c.iterations = dr.iterations;
        c.gradient_norm = dr.grad.norm();
        c.converged = dr.converged;
        if (!best || better(c.converged, c.value, best->converged, best->value)) best = std::move(c);
    }
    best->skeleton = solve_skeleton(model, op, x0, best->control, sim);
    best->functional_value = g.value(best->skeleton.X);
    return std::move(*best);
}

}  // namespace msde
