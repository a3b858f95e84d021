#include "msde/simulation.hpp"

#include "msde/rng.hpp"
#include "stepper.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace msde {

TimeGrid TimeGrid::make(double horizon, int steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("time grid: horizon must be positive");
    if (steps < 1) throw std::invalid_argument("time grid: steps must be >= 1");
    return TimeGrid{horizon, steps};
}

Control Control::zero(const TimeGrid& grid, int noise_dim) {
    if (noise_dim < 1) throw std::invalid_argument("control: noise dimension must be >= 1");
    return Control{grid, Matrix::Zero(noise_dim, grid.steps)};
}

Control Control::constant(const TimeGrid& grid, const Eigen::Ref<const Vector>& value) {
    if (value.size() < 1) throw std::invalid_argument("control: empty value");
    Control h{grid, Matrix(value.size(), grid.steps)};
    for (int j = 0; j < grid.steps; ++j) h.values.col(j) = value;
    return h;
}

void Control::check_compatible(const TimeGrid& sim_grid) const {
    if (grid.horizon != sim_grid.horizon) throw std::invalid_argument("control horizon differs from simulation horizon");
    if (values.cols() != grid.steps) throw std::invalid_argument("control: value count differs from interval count");
    if (sim_grid.steps % grid.steps != 0) {
        throw std::invalid_argument("control intervals (" + std::to_string(grid.steps) +
                                    ") must divide simulation steps (" + std::to_string(sim_grid.steps) + ")");
    }
    if (!values.allFinite()) throw std::invalid_argument("control values must be finite");
}

double action_norm(const Control& h) {
    return h.values.colwise().squaredNorm().sum() * h.grid.dt();
}

BrownianPath BrownianPath::generate(const TimeGrid& grid, int noise_dim, std::uint64_t seed) {
    BrownianPath p;
    p.grid = grid;
    p.seed = seed;
    p.increments.resize(noise_dim, grid.steps);
    Engine eng = make_engine(seed);
    std::normal_distribution<double> normal;
    const double sd = std::sqrt(grid.dt());
    for (int k = 0; k < grid.steps; ++k) {
        for (int i = 0; i < noise_dim; ++i) p.increments(i, k) = sd * normal(eng);
    }
    return p;
}

BrownianPath BrownianPath::coarsened(int factor) const {
    if (factor < 1 || grid.steps % factor != 0) throw std::invalid_argument("coarsened: factor must divide steps");
    BrownianPath p;
    p.grid = TimeGrid{grid.horizon, grid.steps / factor};
    p.seed = seed;
    p.increments = Matrix::Zero(increments.rows(), p.grid.steps);
    for (int k = 0; k < grid.steps; ++k) p.increments.col(k / factor) += increments.col(k);
    return p;
}

double SolutionPath::sup_distance(const SolutionPath& other) const {
    return (X - other.X).colwise().norm().maxCoeff();
}

namespace {

void check_noise(const Model& model, const TimeGrid& grid, const BrownianPath& noise) {
    if (!(noise.grid == grid)) throw std::invalid_argument("noise grid differs from simulation grid");
    if (noise.increments.rows() != model.noise_dim() || noise.increments.cols() != grid.steps) {
        throw std::invalid_argument("noise increments have the wrong shape");
    }
}

}  // namespace

SolutionPath simulate(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0, double eps,
                      const TimeGrid& grid, const BrownianPath& noise) {
    detail::check_common(model, op, x0, grid);
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("simulate: eps must be in (0, 1]");
    check_noise(model, grid, noise);
    SolutionPath p = detail::advance(model, op, x0, grid, nullptr, std::sqrt(eps), &noise);
    p.epsilon = eps;
    p.seed = noise.seed;
    return p;
}

SolutionPath simulate_controlled(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                                 double eps, const Control& h, const TimeGrid& grid, const BrownianPath& noise) {
    detail::check_common(model, op, x0, grid);
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("simulate_controlled: eps must be in [0, 1]");
    if (h.noise_dim() != model.noise_dim()) throw std::invalid_argument("control dimension differs from noise dimension");
    h.check_compatible(grid);
    if (eps > 0.0) check_noise(model, grid, noise);
    SolutionPath p = detail::advance(model, op, x0, grid, &h, std::sqrt(eps), eps > 0.0 ? &noise : nullptr);
    p.epsilon = eps;
    p.seed = noise.seed;
    return p;
}

SolutionPropertyReport check_solution_properties(const SolutionPath& path, const MonotoneOperator& op,
                                                 int probe_count, std::uint64_t seed,
                                                 const SolutionPath* companion) {
    const int n = path.steps();
    const int m = path.dim();
    const double dt = path.grid.dt();
    if (m != op.dim()) throw std::invalid_argument("check_solution_properties: dimension mismatch");

    double scale_x = path.X.colwise().norm().maxCoeff();
    if (companion != nullptr) {
        if (!(companion->grid == path.grid) || companion->dim() != m) {
            throw std::invalid_argument("check_solution_properties: companion path has a different shape");
        }
        scale_x = std::max(scale_x, companion->X.colwise().norm().maxCoeff());
    }
    SolutionPropertyReport rep;
    rep.tolerance = kPropertySlackConstant * std::sqrt(dt) * (1.0 + scale_x) * (1.0 + path.total_variation[n]);

    // (a) constant probes (alpha, beta) in Gr(A)
    std::vector<std::pair<Vector, Vector>> probes = op.reference_graph_points();
    Engine eng = make_engine(derive_seed(seed, 0, 0x70726f62));
    const auto [centre, half_width] = op.sampling_region();
    std::uniform_real_distribution<double> unif(-half_width, half_width);
    for (int s = 0; s < probe_count; ++s) {
        Vector z(m);
        for (int i = 0; i < m; ++i) z[i] = centre[i] + unif(eng);
        Vector alpha = op.resolvent(1.0, z);
        Vector beta = z - alpha;
        probes.emplace_back(std::move(alpha), std::move(beta));
    }
    for (const auto& [alpha, beta] : probes) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            acc += (path.X.col(k + 1) - alpha).dot(path.K.col(k + 1) - path.K.col(k) - beta * dt);
            rep.probe_min_slack = std::min(rep.probe_min_slack, acc);
        }
    }
    rep.probe_ok = rep.probe_min_slack >= -rep.tolerance;

    // (b) pairwise monotonicity of two solutions
    if (companion != nullptr) {
        double acc = 0.0;
        rep.pair_min_slack = std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; ++k) {
            const Vector dk = path.K.col(k + 1) - path.K.col(k);
            const Vector dk2 = companion->K.col(k + 1) - companion->K.col(k);
            acc += (path.X.col(k + 1) - companion->X.col(k + 1)).dot(dk - dk2);
            rep.pair_min_slack = std::min(rep.pair_min_slack, acc);
        }
        rep.pair_ok = rep.pair_min_slack >= -rep.tolerance;
    }

    // (c) interior-ball inequality
    const CepaConstants cc = cepa_constants(op, seed);
    double lhs = 0.0;
    double drift_term = 0.0;
    for (int k = 0; k < n; ++k) {
        const Vector rel = path.X.col(k + 1) - cc.a;
        lhs += rel.dot(path.K.col(k + 1) - path.K.col(k));
        drift_term += rel.norm() * dt;
        const double t = (k + 1) * dt;
        const double rhs = cc.gamma * path.total_variation[k + 1] - cc.mu * drift_term - cc.gamma * cc.mu * t;
        rep.cepa_min_slack = std::min(rep.cepa_min_slack, lhs - rhs);
    }
    rep.cepa_ok = rep.cepa_min_slack >= -rep.tolerance;
    return rep;
}

}  // namespace msde
