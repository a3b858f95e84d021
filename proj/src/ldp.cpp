#include "msde/ldp.hpp"

#include "msde/parallel.hpp"
#include "msde/rng.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace msde {

namespace {

constexpr std::uint64_t kNoisePurpose = 0x6e6f697365;  // "noise"

BrownianPath path_noise(const Model& model, const MonteCarloOptions& mc, long i) {
    return BrownianPath::generate(mc.grid, model.noise_dim(), derive_seed(mc.seed, static_cast<std::uint64_t>(i), kNoisePurpose));
}

void check_mc(const MonteCarloOptions& mc, long min_paths) {
    if (mc.n_paths < min_paths) {
        throw std::invalid_argument("n_paths must be >= " + std::to_string(min_paths));
    }
}

void check_eps_list(std::span<const double> eps_list, bool allow_zero) {
    if (eps_list.empty()) throw std::invalid_argument("eps list is empty");
    for (double e : eps_list) {
        const bool ok = allow_zero ? (e >= 0.0 && e <= 1.0) : (e > 0.0 && e <= 1.0);
        if (!ok) throw std::invalid_argument("eps out of range: " + std::to_string(e));
    }
}

double mean_of(const std::vector<double>& v) {
    return pairwise_sum(v) / static_cast<double>(v.size());
}

double sup_sq(const Matrix& X) {
    return X.colwise().squaredNorm().maxCoeff();
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

}  // namespace

EventSpec EventSpec::endpoint_beyond_level(int component, double level, bool closed) {
    if (component < 0) throw std::invalid_argument("event: negative component");
    EventSpec e;
    e.kind = EventKind::EndpointBeyondLevel;
    e.component = component;
    e.level = level;
    e.closed = closed;
    return e;
}

EventSpec EventSpec::endpoint_in_ball(Vector center, double radius, bool closed) {
    if (!(radius > 0.0)) throw std::invalid_argument("event: radius must be positive");
    EventSpec e;
    e.kind = EventKind::EndpointInBall;
    e.center = std::move(center);
    e.radius = radius;
    e.closed = closed;
    return e;
}

EventSpec EventSpec::tube(Matrix reference, double radius, bool closed) {
    if (!(radius > 0.0)) throw std::invalid_argument("event: radius must be positive");
    if (reference.cols() < 2) throw std::invalid_argument("event: tube reference needs at least two time points");
    EventSpec e;
    e.kind = EventKind::TubeAroundPath;
    e.reference = std::move(reference);
    e.radius = radius;
    e.closed = closed;
    return e;
}

EventSpec EventSpec::running_max_above(int component, double level, bool closed) {
    if (component < 0) throw std::invalid_argument("event: negative component");
    EventSpec e;
    e.kind = EventKind::RunningMaxAboveLevel;
    e.component = component;
    e.level = level;
    e.closed = closed;
    return e;
}

bool EventSpec::occurs(const SolutionPath& path) const {
    const int n = path.steps();
    auto beyond = [this](double v, double bound) { return closed ? v >= bound : v > bound; };
    auto within = [this](double v, double bound) { return closed ? v <= bound : v < bound; };
    switch (kind) {
        case EventKind::EndpointBeyondLevel:
            if (component >= path.dim()) throw std::invalid_argument("event component out of range");
            return beyond(path.X(component, n), level);
        case EventKind::EndpointInBall:
            if (center.size() != path.dim()) throw std::invalid_argument("event centre has the wrong dimension");
            return within((path.X.col(n) - center).norm(), radius);
        case EventKind::TubeAroundPath:
            if (reference.rows() != path.dim() || reference.cols() != path.X.cols()) {
                throw std::invalid_argument("tube reference has the wrong shape");
            }
            return within((path.X - reference).colwise().norm().maxCoeff(), radius);
        case EventKind::RunningMaxAboveLevel:
            if (component >= path.dim()) throw std::invalid_argument("event component out of range");
            return beyond(path.X.row(component).maxCoeff(), level);
    }
    return false;
}

std::string EventSpec::id() const {
    const std::string rel = closed ? "closed" : "open";
    switch (kind) {
        case EventKind::EndpointBeyondLevel:
            return "endpoint_beyond_level[" + std::to_string(component) + "," + fmt(level) + "," + rel + "]";
        case EventKind::EndpointInBall:
            return "endpoint_in_ball[" + fmt(radius) + "," + rel + "]";
        case EventKind::TubeAroundPath:
            return "tube[" + fmt(radius) + "," + rel + "]";
        case EventKind::RunningMaxAboveLevel:
            return "running_max_above[" + std::to_string(component) + "," + fmt(level) + "," + rel + "]";
    }
    return "unknown";
}

std::vector<MCEstimate> estimate_event(const Model& model, const MonotoneOperator& op,
                                       const Eigen::Ref<const Vector>& x0, std::span<const double> eps_list,
                                       const EventSpec& event, const MonteCarloOptions& mc, const Control* tilt) {
    check_mc(mc, 100);
    check_eps_list(eps_list, false);
    if (tilt != nullptr) {
        if (tilt->noise_dim() != model.noise_dim()) throw std::invalid_argument("tilt dimension differs from noise dimension");
        tilt->check_compatible(mc.grid);
    }
    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    const std::size_t ne = eps_list.size();
    // weighted indicators per eps, path-major within each eps block
    std::vector<std::vector<double>> wi(ne, std::vector<double>(n, 0.0));
    const double dt = mc.grid.dt();

    parallel_for(n, mc.workers, [&](std::size_t i) {
        const BrownianPath noise = path_noise(model, mc, static_cast<long>(i));
        double a = 0.0;
        double b = 0.0;
        if (tilt != nullptr) {
            for (int k = 0; k < mc.grid.steps; ++k) {
                const auto hk = tilt->values.col(tilt->interval_of_step(k, mc.grid.steps));
                a += hk.dot(noise.increments.col(k));
                b += hk.squaredNorm() * dt;
            }
        }
        for (std::size_t j = 0; j < ne; ++j) {
            const double eps = eps_list[j];
            double w = 1.0;
            bool hit = false;
            if (tilt != nullptr) {
                hit = event.occurs(simulate_controlled(model, op, x0, eps, *tilt, mc.grid, noise));
                w = std::exp(-a / std::sqrt(eps) - b / (2.0 * eps));
            } else {
                hit = event.occurs(simulate(model, op, x0, eps, mc.grid, noise));
            }
            wi[j][i] = hit ? w : 0.0;
        }
    });

    std::vector<MCEstimate> out;
    out.reserve(ne);
    for (std::size_t j = 0; j < ne; ++j) {
        const auto& v = wi[j];
        MCEstimate est;
        est.epsilon = eps_list[j];
        est.event_id = event.id();
        est.n_paths = mc.n_paths;
        const double sum = pairwise_sum(v);
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = v[i] * v[i];
        const double sum_sq = pairwise_sum(sq);
        const double mean = sum / static_cast<double>(n);
        std::vector<double> dev(n);
        for (std::size_t i = 0; i < n; ++i) dev[i] = (v[i] - mean) * (v[i] - mean);
        const double var = pairwise_sum(dev) / static_cast<double>(n - 1);
        est.p_hat = std::clamp(mean, 0.0, 1.0);
        est.std_error = std::sqrt(var / static_cast<double>(n));
        est.neg_eps_log_p = est.p_hat > 0.0 ? -est.epsilon * std::log(est.p_hat)
                                            : std::numeric_limits<double>::infinity();
        est.ess = sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
        est.degenerate = est.ess < 10.0;
        if (tilt != nullptr) est.tilt = *tilt;
        out.push_back(std::move(est));
    }
    return out;
}

ExtrapolationFit fit_extrapolation(std::span<const double> eps, std::span<const double> values, FitModel model) {
    if (eps.size() != values.size()) throw std::invalid_argument("fit: eps and values differ in length");
    std::vector<double> distinct(eps.begin(), eps.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) throw std::invalid_argument("fit: at least three distinct eps are required");
    const int cols = model == FitModel::Affine ? 2 : 3;
    const int rows = static_cast<int>(eps.size());
    Matrix A(rows, cols);
    Vector y(rows);
    for (int i = 0; i < rows; ++i) {
        if (!std::isfinite(values[i])) throw std::invalid_argument("fit: non-finite value at eps " + fmt(eps[i]));
        if (model == FitModel::AffineLog && !(eps[i] > 0.0)) throw std::invalid_argument("fit: log model needs eps > 0");
        A(i, 0) = 1.0;
        A(i, 1) = eps[i];
        if (cols == 3) A(i, 2) = eps[i] * std::log(eps[i]);
        y[i] = values[i];
    }
    const Vector coef = A.colPivHouseholderQr().solve(y);
    const Vector res = y - A * coef;
    ExtrapolationFit fit;
    fit.model = model;
    fit.intercept = coef[0];
    fit.slope = coef[1];
    fit.log_coefficient = cols == 3 ? coef[2] : 0.0;
    fit.eps.assign(eps.begin(), eps.end());
    fit.residuals.assign(res.data(), res.data() + res.size());
    return fit;
}

ExtrapolationFit ldp_slope(std::span<const MCEstimate> estimates, FitModel model) {
    std::vector<double> eps;
    std::vector<double> vals;
    std::vector<double> excluded;
    for (const auto& e : estimates) {
        if (e.degenerate || !std::isfinite(e.neg_eps_log_p)) {
            excluded.push_back(e.epsilon);
        } else {
            eps.push_back(e.epsilon);
            vals.push_back(e.neg_eps_log_p);
        }
    }
    std::vector<double> distinct = eps;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) {
        std::string msg = "ldp_slope: fewer than three non-degenerate eps; excluded eps:";
        for (double e : excluded) msg += " " + fmt(e);
        throw std::invalid_argument(msg);
    }
    ExtrapolationFit fit = fit_extrapolation(eps, vals, model);
    fit.excluded_eps = std::move(excluded);
    return fit;
}

double laplace_estimate(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                        double eps, const PathFunctional& g, const MonteCarloOptions& mc) {
    check_mc(mc, 1);
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("laplace_estimate: eps must be in (0, 1]");
    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    std::vector<double> expo(n);
    parallel_for(n, mc.workers, [&](std::size_t i) {
        const BrownianPath noise = path_noise(model, mc, static_cast<long>(i));
        expo[i] = -g.value(simulate(model, op, x0, eps, mc.grid, noise).X) / eps;
    });
    const double mx = *std::max_element(expo.begin(), expo.end());
    if (mx == -std::numeric_limits<double>::infinity() || std::isnan(mx)) {
        throw NumericalError("laplace_estimate: every exponent is -inf");
    }
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = std::exp(expo[i] - mx);
    return eps * (mx + std::log(mean_of(shifted)));
}

LD1Report test_ld1(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                   const Control& h, std::span<const double> eps_list, const MonteCarloOptions& mc,
                   const LD1Options& opts) {
    check_mc(mc, 1);
    check_eps_list(eps_list, true);
    const BrownianPath none{mc.grid, Matrix::Zero(model.noise_dim(), mc.grid.steps), 0};
    const SolutionPath skel = simulate_controlled(model, op, x0, 0.0, h, mc.grid, none);

    LD1Report rep;
    rep.eps.assign(eps_list.begin(), eps_list.end());
    std::sort(rep.eps.begin(), rep.eps.end(), std::greater<>());
    rep.skeleton_sup_sq = sup_sq(skel.X);
    rep.threshold = opts.relative_threshold * rep.skeleton_sup_sq + opts.absolute_threshold;

    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    const std::size_t ne = rep.eps.size();
    std::vector<std::vector<double>> d(ne, std::vector<double>(n, 0.0));
    parallel_for(n, mc.workers, [&](std::size_t i) {
        const BrownianPath noise = path_noise(model, mc, static_cast<long>(i));
        for (std::size_t j = 0; j < ne; ++j) {
            if (rep.eps[j] == 0.0) continue;
            const SolutionPath p = simulate_controlled(model, op, x0, rep.eps[j], h, mc.grid, noise);
            d[j][i] = sup_sq(p.X - skel.X);
        }
    });
    for (const auto& v : d) rep.mean_sup_sq.push_back(mean_of(v));

    rep.decreasing = true;
    for (std::size_t j = 1; j < ne; ++j) {
        if (rep.eps[j] < rep.eps[j - 1] && !(rep.mean_sup_sq[j] < rep.mean_sup_sq[j - 1])) rep.decreasing = false;
    }
    rep.below_threshold = rep.mean_sup_sq.back() < rep.threshold;
    return rep;
}

double initial_condition_lipschitz(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x,
                                   const Eigen::Ref<const Vector>& y, double eps, const MonteCarloOptions& mc) {
    check_mc(mc, 1);
    const double gap = (x - y).squaredNorm();
    if (!(gap > 0.0)) throw std::invalid_argument("initial_condition_lipschitz: x and y coincide");
    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    std::vector<double> r(n);
    parallel_for(n, mc.workers, [&](std::size_t i) {
        const BrownianPath noise = path_noise(model, mc, static_cast<long>(i));
        const SolutionPath px = simulate(model, op, x, eps, mc.grid, noise);
        const SolutionPath py = simulate(model, op, y, eps, mc.grid, noise);
        r[i] = sup_sq(px.X - py.X) / gap;
    });
    return mean_of(r);
}

MomentVariation moment_variation(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                                 double eps, const MonteCarloOptions& mc) {
    check_mc(mc, 1);
    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    std::vector<double> s(n);
    std::vector<double> tv(n);
    parallel_for(n, mc.workers, [&](std::size_t i) {
        const BrownianPath noise = path_noise(model, mc, static_cast<long>(i));
        const SolutionPath p = simulate(model, op, x0, eps, mc.grid, noise);
        s[i] = sup_sq(p.X);
        tv[i] = p.total_variation[p.steps()];
    });
    return MomentVariation{mean_of(s), mean_of(tv)};
}

std::pair<double, double> sup_mean_refinement(const Model& model, const MonotoneOperator& op,
                                              const Eigen::Ref<const Vector>& x0, double eps,
                                              const MonteCarloOptions& mc, int factor) {
    check_mc(mc, 1);
    if (factor < 1) throw std::invalid_argument("sup_mean_refinement: factor must be >= 1");
    const TimeGrid fine{mc.grid.horizon, mc.grid.steps * factor};
    MonteCarloOptions fine_mc = mc;
    fine_mc.grid = fine;
    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    std::vector<double> coarse(n);
    std::vector<double> refined(n);
    parallel_for(n, mc.workers, [&](std::size_t i) {
        const BrownianPath noise = path_noise(model, fine_mc, static_cast<long>(i));
        const BrownianPath cnoise = noise.coarsened(factor);
        coarse[i] = simulate(model, op, x0, eps, mc.grid, cnoise).X.colwise().norm().maxCoeff();
        refined[i] = simulate(model, op, x0, eps, fine, noise).X.colwise().norm().maxCoeff();
    });
    return {mean_of(coarse), mean_of(refined)};
}

}  // namespace msde
