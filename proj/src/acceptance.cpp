#include "msde/acceptance.hpp"

#include "msde/ldp.hpp"
#include "msde/parallel.hpp"
#include "msde/rng.hpp"
#include "msde/skeleton.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace msde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Budget {
    const char* name;
    double seconds;
};

constexpr Budget kBudgets[kCriterionCount] = {
    {"operator property suite", 10.0},
    {"solution property suite", 30.0},
    {"reflected-law oracle", 60.0},
    {"rate-function oracles", 60.0},
    {"adjoint gradient check", 10.0},
    {"LDP extrapolation", 120.0},
    {"Laplace principle", 120.0},
    {"LD1 convergence", 60.0},
    {"uniformity in eps", 60.0},
};

double gaussian_tail(double z) {
    return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

double half_normal_cdf(double x) {
    return x <= 0.0 ? 0.0 : std::erf(x / std::numbers::sqrt2);
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

ConvexDomain half_line() {
    return ConvexDomain::box(Vector::Zero(1), Vector::Constant(1, kInf));
}

// I for the linear recursion x <- a x + dt h on N steps, minimized exactly:
// the endpoint is linear in h, so the constrained least-norm control is
// proportional to the coefficient vector.
double discrete_ou_rate(double lambda, double x0, double y, double T, int N) {
    const double dt = T / N;
    const double a = 1.0 - lambda * dt;
    double sum_c2 = 0.0;
    double pw = 1.0;
    for (int k = N - 1; k >= 0; --k) {
        sum_c2 += (dt * pw) * (dt * pw);
        pw *= a;
    }
    const double r = y - pw * x0;
    return 0.5 * r * r * dt / sum_c2;
}

struct Recorder {
    CriterionResult& r;
    void metric(const std::string& k, double v) { r.metrics.emplace_back(k, v); }
    void note(const std::string& s) { r.notes.push_back(s); }
};

// ---------------------------------------------------------------- 1

struct OpCase {
    std::string name;
    MonotoneOperator op;
    std::optional<ConvexDomain> domain;
};

Vector sample_in(const ConvexDomain& d, Engine& eng, const Vector& centre, double half) {
    std::uniform_real_distribution<double> u(-half, half);
    for (int tries = 0; tries < 100000; ++tries) {
        Vector z(d.dim());
        for (int i = 0; i < d.dim(); ++i) z[i] = centre[i] + u(eng);
        if (d.contains(z, 0.0)) return z;
    }
    throw std::runtime_error("rejection sampling failed");
}

void criterion_1(Recorder rec, const AcceptanceOptions& opts) {
    std::vector<HalfSpace> faces{{vec({-1, 0, 0}), 0.0}, {vec({0, -1, 0}), 0.0}, {vec({0, 0, -1}), 0.0},
                                 {vec({1, 0, 0}), 1.0},  {vec({0, 1, 0}), 1.0},  {vec({0, 0, 1}), 1.0},
                                 {vec({1, 1, 1}), 2.0},  {vec({1, -1, 0}), 0.5}};
    std::vector<OpCase> cases;
    auto add_domain = [&](std::string name, ConvexDomain d) {
        cases.push_back({std::move(name), MonotoneOperator::indicator(d), d});
    };
    add_domain("half_space", ConvexDomain::half_space(vec({1, -2, 0.5}), 0.3));
    add_domain("box", ConvexDomain::box(vec({-1, 0, -kInf}), vec({1, 2, 0.5})));
    add_domain("ball", ConvexDomain::ball(vec({0.2, -0.1, 0.3}), 1.5));
    add_domain("polytope", ConvexDomain::polytope(faces, vec({0.4, 0.4, 0.4})));
    cases.push_back({"sign_graph", MonotoneOperator::graph(FilledGraph::sign()), std::nullopt});
    {
        AffineMonotoneMap L{Matrix(3, 3), vec({0.1, -0.2, 0.0})};
        L.matrix << 0.5, 1.0, 0.0, -1.0, 0.2, 0.0, 0.0, 0.0, 0.1;
        cases.push_back({"ball_plus_affine", MonotoneOperator::sum(ConvexDomain::ball(Vector::Zero(3), 1.0), L),
                         std::nullopt});
    }

    constexpr long kSamples = 10000;
    constexpr int kWitnesses = 4;
    constexpr double kTol = 1e-9;
    long total_violations = 0;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const auto& cs = cases[c];
        const int m = cs.op.dim();
        Engine eng = make_engine(derive_seed(opts.seed, c, 1));
        const auto [centre, half_width] = cs.op.sampling_region();
        std::uniform_real_distribution<double> u(-3.0 * half_width, 3.0 * half_width);
        std::uniform_real_distribution<double> lam(0.05, 2.0);
        auto draw = [&] {
            Vector x(m);
            for (int i = 0; i < m; ++i) x[i] = centre[i] + u(eng);
            return x;
        };
        long idem = 0, nonexp = 0, vi = 0, firm = 0;
        double worst = 0.0;
        for (long s = 0; s < kSamples; ++s) {
            const Vector x = draw();
            const Vector y = draw();
            const double l = lam(eng);
            const Vector jx = cs.op.resolvent(l, x);
            const Vector jy = cs.op.resolvent(l, y);
            const double f = (jx - jy).squaredNorm() - (jx - jy).dot(x - y);
            if (f > kTol) ++firm;
            worst = std::max(worst, f);
            if (cs.domain) {
                const auto& d = *cs.domain;
                const Vector px = d.project(x);
                const Vector py = d.project(y);
                const double e1 = (d.project(px) - px).norm();
                const double e2 = (px - py).norm() - (x - y).norm();
                if (e1 > kTol) ++idem;
                if (e2 > kTol) ++nonexp;
                worst = std::max({worst, e1, e2});
                for (int w = 0; w < kWitnesses; ++w) {
                    const Vector z = sample_in(d, eng, centre, half_width);
                    const double e3 = (x - px).dot(z - px);
                    if (e3 > kTol) ++vi;
                    worst = std::max(worst, e3);
                }
            }
        }
        const MonotonicityReport mono = verify_monotone(cs.op, kSamples, derive_seed(opts.seed, c, 2));
        const long v = idem + nonexp + vi + firm + (mono.passed ? 0 : 1);
        total_violations += v;
        rec.metric(cs.name + ".violations", static_cast<double>(v));
        rec.metric(cs.name + ".worst_excess", worst);
        rec.metric(cs.name + ".min_monotone_inner", mono.min_inner);
    }
    rec.metric("samples_per_kind", kSamples);
    rec.metric("total_violations", static_cast<double>(total_violations));
    rec.r.passed = total_violations == 0;
}

// ---------------------------------------------------------------- 2

void criterion_2(Recorder rec, const AcceptanceOptions& opts) {
    struct Case {
        std::string name;
        Model model;
        MonotoneOperator op;
        Vector x0;
    };
    const auto ball = MonotoneOperator::indicator(ConvexDomain::ball(Vector::Zero(2), 1.0));
    const auto line = MonotoneOperator::indicator(half_line());
    std::vector<Case> cases{
        {"brownian_half_line", Model::brownian(1), line, Vector::Zero(1)},
        {"ou_half_line", Model::ornstein_uhlenbeck(1.0, 1), line, Vector::Zero(1)},
        {"brownian_unit_ball", Model::brownian(2), ball, Vector::Zero(2)},
        {"ou_unit_ball", Model::ornstein_uhlenbeck(1.0, 2), ball, Vector::Zero(2)},
    };
    constexpr int kPaths = 100;
    constexpr int kProbes = 16;
    const TimeGrid grid{1.0, 2048};
    bool all = true;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const auto& cs = cases[c];
        std::vector<SolutionPath> paths(kPaths);
        parallel_for(kPaths, opts.workers, [&](std::size_t i) {
            const auto noise = BrownianPath::generate(grid, cs.model.noise_dim(), derive_seed(opts.seed, i, 100 + c));
            paths[i] = simulate(cs.model, cs.op, cs.x0, 1.0, grid, noise);
        });
        std::vector<SolutionPropertyReport> reps(kPaths);
        parallel_for(kPaths, opts.workers, [&](std::size_t i) {
            reps[i] = check_solution_properties(paths[i], cs.op, kProbes, derive_seed(opts.seed, i, 200 + c),
                                                &paths[(i + 1) % kPaths]);
        });
        double worst = kInf;
        int failed = 0;
        double max_tv = 0.0;
        for (int i = 0; i < kPaths; ++i) {
            const auto& r = reps[i];
            const double m = std::min({r.probe_min_slack, r.pair_min_slack, r.cepa_min_slack});
            worst = std::min(worst, m / r.tolerance);
            if (!r.passed()) ++failed;
            max_tv = std::max(max_tv, paths[i].total_variation[grid.steps]);
        }
        all = all && failed == 0;
        rec.metric(cs.name + ".failed_paths", failed);
        rec.metric(cs.name + ".min_slack_over_tol", worst);
        rec.metric(cs.name + ".max_total_variation", max_tv);
    }
    rec.metric("C", kPropertySlackConstant);
    rec.r.passed = all;
}

// ---------------------------------------------------------------- 3

void criterion_3(Recorder rec, const AcceptanceOptions& opts) {
    constexpr long kPaths = 100000;
    const TimeGrid grid{1.0, 2048};
    const Model bm = Model::brownian(1);
    const auto op = MonotoneOperator::indicator(half_line());
    const Vector x0 = Vector::Zero(1);
    std::vector<double> end(kPaths);
    parallel_for(kPaths, opts.workers, [&](std::size_t i) {
        const auto noise = BrownianPath::generate(grid, 1, derive_seed(opts.seed, i, 300));
        end[i] = simulate(bm, op, x0, 1.0, grid, noise).X(0, grid.steps);
    });
    std::sort(end.begin(), end.end());
    double ks = 0.0;
    const double n = static_cast<double>(kPaths);
    for (long i = 0; i < kPaths; ++i) {
        const double f = half_normal_cdf(end[i]);
        ks = std::max({ks, (i + 1) / n - f, f - i / n});
    }
    const double critical = 1.628 / std::sqrt(n);
    double mean = pairwise_sum(end) / n;
    rec.metric("ks", ks);
    rec.metric("critical_1pct", critical);
    rec.metric("mean_X_T", mean);
    rec.metric("mean_half_normal", std::sqrt(2.0 / std::numbers::pi));
    rec.note("projected Euler under-shoots the reflected law by about 0.58 sqrt(dt) in mean; at N = 2048 that bias alone exceeds the critical KS distance for 1e5 paths");
    rec.r.passed = ks < critical;
}

// ---------------------------------------------------------------- 4

void criterion_4(Recorder rec, const AcceptanceOptions& opts) {
    RateOptions ro;
    ro.seed = opts.seed;
    const Vector x0 = Vector::Zero(1);
    const Vector y = Vector::Ones(1);
    const auto free_op = MonotoneOperator::indicator(ConvexDomain::whole_space(1));
    const auto line = MonotoneOperator::indicator(half_line());

    const RateResult a = minimize_endpoint_rate(Model::brownian(1), free_op, x0, y, 1.0, ro);
    const bool pass_a = a.converged && std::abs(a.value - 0.5) < 1e-3;

    const double closed = 1.0 / (1.0 - std::exp(-2.0));
    const double oracle = discrete_ou_rate(1.0, 0.0, 1.0, 1.0, 200000);
    const bool oracle_ok = std::abs(oracle - closed) < 1e-4;
    const RateResult b = minimize_endpoint_rate(Model::ornstein_uhlenbeck(1.0, 1), free_op, x0, y, 1.0, ro);
    const bool pass_b = oracle_ok && b.converged && std::abs(b.value - closed) < 1e-2;

    const RateResult c = minimize_endpoint_rate(Model::brownian(1), line, x0, y, 1.0, ro);
    const bool pass_c = c.converged && std::abs(c.value - a.value) < 1e-3;

    rec.metric("a.value", a.value);
    rec.metric("a.residual", a.residual);
    rec.metric("b.value", b.value);
    rec.metric("b.closed_form", closed);
    rec.metric("b.fine_grid_oracle", oracle);
    rec.metric("c.value", c.value);
    rec.metric("c.minus_free", c.value - a.value);
    rec.r.passed = pass_a && pass_b && pass_c;
}

// ---------------------------------------------------------------- 5

void criterion_5(Recorder rec, const AcceptanceOptions& opts) {
    constexpr int kConfigs = 20;
    const TimeGrid sim{1.0, 128};
    const TimeGrid ctrl{1.0, 16};
    double worst = 0.0;
    int checked = 0;
    Engine eng = make_engine(derive_seed(opts.seed, 0, 500));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int attempts = 0;
    while (checked < kConfigs) {
        if (++attempts > 50 * kConfigs) throw std::runtime_error("could not draw interior configurations");
        const int kind = static_cast<int>(u(eng) * 4.0);
        std::optional<Model> model;
        std::optional<MonotoneOperator> op;
        Vector x0;
        switch (kind) {
            case 0:
                model = Model::ornstein_uhlenbeck(0.2 + 1.8 * u(eng), 1);
                op = MonotoneOperator::indicator(half_line());
                x0 = Vector::Constant(1, 0.8 + 0.4 * u(eng));
                break;
            case 1:
                model = Model::state_dependent(0.1 + 0.4 * u(eng), 1, -1, 10.0, 0.5 * u(eng));
                op = MonotoneOperator::indicator(half_line());
                x0 = Vector::Constant(1, 0.8 + 0.4 * u(eng));
                break;
            case 2:
                model = Model::double_well(1);
                op = MonotoneOperator::indicator(ConvexDomain::box(Vector::Constant(1, -3.0), Vector::Constant(1, 3.0)));
                x0 = Vector::Constant(1, -0.5 + u(eng));
                break;
            default:
                model = Model::ornstein_uhlenbeck(0.2 + 1.8 * u(eng), 2);
                op = MonotoneOperator::indicator(ConvexDomain::ball(Vector::Zero(2), 3.0));
                x0 = vec({u(eng) - 0.5, u(eng) - 0.5});
                break;
        }
        const int d = model->noise_dim();
        const Vector target = Vector::Constant(model->dim(), 0.5 * (u(eng) - 0.5));
        const double rho = 100.0;
        PathCost cost = [&](const Matrix& X) { return 0.5 * rho * (X.col(X.cols() - 1) - target).squaredNorm(); };
        PathCostGradient cost_grad = [&](const Matrix& X, Matrix& G) {
            G.setZero(X.rows(), X.cols());
            G.col(X.cols() - 1) = rho * (X.col(X.cols() - 1) - target);
        };
        const ActionObjective obj(*model, *op, x0, sim, ctrl, cost, cost_grad);
        Vector flat(obj.size());
        for (int i = 0; i < obj.size(); ++i) flat[i] = 0.6 * (u(eng) - 0.5);
        const SolutionPath p = obj.path(flat);
        if (p.total_variation[sim.steps] != 0.0) continue;  // a constraint became active
        (void)d;
        const double f = obj.value(flat);
        const Vector g_fd = obj.gradient_fd(flat, f);
        const auto g_adj = obj.gradient_adjoint(flat);
        if (!g_adj) throw std::runtime_error("adjoint gradient unavailable for an indicator operator");
        const double rel = (*g_adj - g_fd).norm() / std::max(g_adj->norm(), 1e-12);
        worst = std::max(worst, rel);
        ++checked;
    }
    rec.metric("configurations", checked);
    rec.metric("max_relative_error", worst);
    rec.r.passed = worst < 1e-4;
}

// ---------------------------------------------------------------- 6

void criterion_6(Recorder rec, const AcceptanceOptions& opts) {
    const std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
    const Model bm = Model::brownian(1);
    const auto free_op = MonotoneOperator::indicator(ConvexDomain::whole_space(1));
    const Vector x0 = Vector::Zero(1);
    RateOptions ro;
    ro.seed = opts.seed;
    const RateResult hstar = minimize_endpoint_rate(bm, free_op, x0, Vector::Ones(1), 1.0, ro);
    MonteCarloOptions mc{TimeGrid{1.0, ro.steps}, 100000, derive_seed(opts.seed, 0, 600), opts.workers};
    const auto est = estimate_event(bm, free_op, x0, eps, EventSpec::endpoint_beyond_level(0, 1.0), mc, &hstar.control);
    const ExtrapolationFit fit = ldp_slope(est);

    std::vector<double> exact(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) exact[i] = -eps[i] * std::log(gaussian_tail(1.0 / std::sqrt(eps[i])));
    const ExtrapolationFit oracle = fit_extrapolation(eps, exact);
    const ExtrapolationFit oracle_log = fit_extrapolation(eps, exact, FitModel::AffineLog);
    const ExtrapolationFit mc_log = ldp_slope(est, FitModel::AffineLog);

    for (std::size_t i = 0; i < est.size(); ++i) {
        const double p = gaussian_tail(1.0 / std::sqrt(eps[i]));
        rec.metric("eps=" + std::to_string(eps[i]).substr(0, 4) + ".z_vs_exact", (est[i].p_hat - p) / est[i].std_error);
    }
    rec.metric("mc.intercept", fit.intercept);
    rec.metric("mc.rel_error", std::abs(fit.intercept - 0.5) / 0.5);
    rec.metric("exact.intercept", oracle.intercept);
    rec.metric("exact.rel_error", std::abs(oracle.intercept - 0.5) / 0.5);
    rec.metric("exact.affine_log_intercept", oracle_log.intercept);
    rec.metric("mc.affine_log_intercept", mc_log.intercept);
    rec.note("the exact tail sequence carries an eps log eps prefactor term; an affine fit over eps in [0.05, 0.4] cannot remove it, so the 2% self-check on the exact oracle fails and the Monte Carlo intercept inherits the same bias");
    rec.r.passed = std::abs(fit.intercept - 0.5) <= 0.10 * 0.5 && std::abs(oracle.intercept - 0.5) <= 0.02 * 0.5;
}

// ---------------------------------------------------------------- 7

void criterion_7(Recorder rec, const AcceptanceOptions& opts) {
    const std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
    const Model bm = Model::brownian(1);
    const auto free_op = MonotoneOperator::indicator(ConvexDomain::whole_space(1));
    const Vector x0 = Vector::Zero(1);
    const auto g = PathFunctional::endpoint_distance_cap(Vector::Ones(1), 1.0);
    RateOptions ro;
    ro.seed = opts.seed;
    const LaplaceCandidate cand = evaluate_laplace_candidate(bm, free_op, x0, g, 1.0, ro);
    std::vector<double> vals;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        MonteCarloOptions mc{TimeGrid{1.0, ro.steps}, 100000, derive_seed(opts.seed, 0, 700), opts.workers};
        vals.push_back(laplace_estimate(bm, free_op, x0, eps[i], g, mc));
        rec.metric("eps=" + std::to_string(eps[i]).substr(0, 4) + ".estimate", vals.back());
    }
    const ExtrapolationFit fit = fit_extrapolation(eps, vals);
    const double reference = -cand.value;
    rec.metric("candidate.inf_g_plus_I", cand.value);
    rec.metric("mc.intercept", fit.intercept);
    rec.metric("rel_error", std::abs(fit.intercept - reference) / std::abs(reference));
    rec.r.passed = cand.converged && std::abs(fit.intercept - reference) <= 0.15 * std::abs(reference);
}

// ---------------------------------------------------------------- 8

void criterion_8(Recorder rec, const AcceptanceOptions& opts) {
    const std::vector<double> eps{0.4, 0.1, 0.025};
    const Model ou = Model::ornstein_uhlenbeck(1.0, 1);
    const TimeGrid grid{1.0, 512};
    const Control h = Control::constant(grid, Vector::Ones(1));
    MonteCarloOptions mc{grid, 1000, derive_seed(opts.seed, 0, 800), opts.workers};
    const Vector x0 = Vector::Zero(1);

    const LD1Report refl = test_ld1(ou, MonotoneOperator::indicator(half_line()), x0, h, eps, mc);
    const LD1Report free = test_ld1(ou, MonotoneOperator::indicator(ConvexDomain::whole_space(1)), x0, h, eps, mc);
    bool strictly = true;
    for (std::size_t i = 1; i < refl.eps.size(); ++i) strictly = strictly && refl.mean_sup_sq[i] < refl.mean_sup_sq[i - 1];
    double worst_prop = 0.0;
    for (std::size_t i = 0; i < free.eps.size(); ++i) {
        const double per_eps = free.mean_sup_sq[i] / free.eps[i];
        const double base = free.mean_sup_sq[0] / free.eps[0];
        worst_prop = std::max(worst_prop, std::abs(per_eps / base - 1.0));
    }
    for (std::size_t i = 0; i < refl.eps.size(); ++i) {
        rec.metric("reflected.eps=" + std::to_string(refl.eps[i]).substr(0, 5), refl.mean_sup_sq[i]);
    }
    rec.metric("reflected.below_threshold", refl.below_threshold ? 1.0 : 0.0);
    rec.metric("free.max_proportionality_error", worst_prop);
    rec.r.passed = strictly && worst_prop < 0.20;
}

// ---------------------------------------------------------------- 9

void criterion_9(Recorder rec, const AcceptanceOptions& opts) {
    const std::vector<double> eps{0.1, 0.5, 1.0};
    const Model ou = Model::ornstein_uhlenbeck(1.0, 1);
    const auto op = MonotoneOperator::indicator(half_line());
    const TimeGrid grid{1.0, 512};
    MonteCarloOptions mc{grid, 1000, derive_seed(opts.seed, 0, 900), opts.workers};
    const Vector x = Vector::Constant(1, 1.0);
    auto spread = [](const std::vector<double>& v) {
        return *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
    };
    bool ok = true;
    for (double gap : {0.1, 0.01}) {
        std::vector<double> r;
        for (double e : eps) r.push_back(initial_condition_lipschitz(ou, op, x, x + Vector::Constant(1, gap), e, mc));
        const double s = spread(r);
        ok = ok && s < 3.0;
        rec.metric("lipschitz.gap=" + std::to_string(gap).substr(0, 4) + ".max_over_min", s);
    }
    std::vector<double> mv;
    for (double e : eps) mv.push_back(moment_variation(ou, op, x, e, mc).combined());
    const double s = spread(mv);
    ok = ok && s < 3.0;
    rec.metric("moment_variation.max_over_min", s);
    rec.metric("moment_variation.eps=1", mv.back());
    rec.r.passed = ok;
}

}  // namespace

CriterionResult run_criterion(int id, const AcceptanceOptions& opts) {
    if (id < 1 || id > kCriterionCount) throw std::invalid_argument("criterion id must be in 1..9");
    CriterionResult r;
    r.id = id;
    r.name = kBudgets[id - 1].name;
    Recorder rec{r};
    const auto t0 = std::chrono::steady_clock::now();
    static const std::function<void(Recorder, const AcceptanceOptions&)> table[kCriterionCount] = {
        criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
        criterion_6, criterion_7, criterion_8, criterion_9};
    table[id - 1](rec, opts);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.seconds > kBudgets[id - 1].seconds) {
        r.passed = false;
        r.notes.push_back("runtime budget of " + std::to_string(kBudgets[id - 1].seconds) + " s exceeded");
    }
    return r;
}

std::vector<CriterionResult> run_acceptance(std::span<const int> ids, const AcceptanceOptions& opts) {
    std::vector<CriterionResult> out;
    for (int id : ids) out.push_back(run_criterion(id, opts));
    return out;
}

std::string format_result(const CriterionResult& r) {
    std::ostringstream os;
    os.precision(6);
    os << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << " " << r.name << ":";
    for (const auto& [k, v] : r.metrics) os << " " << k << "=" << v;
    os << " time=" << r.seconds << "s";
    return os.str();
}

}  // namespace msde
