#include "msde/functional.hpp"
#include "msde/rng.hpp"
#include "msde/skeleton.hpp"

#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

using namespace msde;
using Catch::Approx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

MonotoneOperator half_line() {
    return MonotoneOperator::indicator(ConvexDomain::box(Vector::Zero(1), Vector::Constant(1, kInf)));
}

MonotoneOperator free_line() {
    return MonotoneOperator::indicator(ConvexDomain::whole_space(1));
}

Vector scalar(double x) {
    return Vector::Constant(1, x);
}

RateOptions quick(int M, int N) {
    RateOptions o;
    o.control_intervals = M;
    o.steps = N;
    o.restarts = 1;
    return o;
}

// closed-form OU rate in continuous time: lambda (y - e^{-lambda T} x0)^2 / (1 - e^{-2 lambda T})
double ou_rate(double lambda, double x0, double y, double T) {
    const double r = y - std::exp(-lambda * T) * x0;
    return lambda * r * r / (1.0 - std::exp(-2.0 * lambda * T));
}

}  // namespace

TEST_CASE("reflected skeleton with a constant downward control stops at the wall", "[skeleton]") {
    const TimeGrid grid = TimeGrid::make(1.0, 1000);
    const Control h = Control::constant(TimeGrid::make(1.0, 10), scalar(-2.0));
    const SolutionPath p = solve_skeleton(Model::brownian(1), half_line(), scalar(1.0), h, grid);
    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.time(k);
        REQUIRE(p.X(0, k) == Approx(std::max(0.0, 1.0 - 2.0 * t)).margin(1e-12));
        REQUIRE(p.K(0, k) == Approx(std::min(0.0, 1.0 - 2.0 * t)).margin(1e-12));
    }
    CHECK(p.total_variation[grid.steps] == Approx(1.0).margin(1e-12));
}

TEST_CASE("action norm of piecewise-constant controls", "[action]") {
    const TimeGrid cg = TimeGrid::make(2.0, 4);
    CHECK(action_norm(Control::zero(cg, 3)) == 0.0);
    CHECK(action_norm(Control::constant(cg, scalar(3.0))) == Approx(18.0));
    Control h = Control::zero(cg, 2);
    h.values << 1, 0, 0, 2, 0, 1, 0, 0;
    // each interval has length 0.5
    CHECK(action_norm(h) == Approx(0.5 * (1 + 1 + 0 + 4)));
}

TEST_CASE("discrete linear endpoint rate: closed form agrees with the KKT solve", "[oracle]") {
    for (double lambda : {0.0, 1.0, 2.5}) {
        for (int N : {8, 64}) {
            CHECK(oracle::linear_endpoint_rate(lambda, 0.3, 1.2, 1.0, N) ==
                  Approx(oracle::linear_endpoint_rate_kkt(lambda, 0.3, 1.2, 1.0, N)).epsilon(1e-10));
        }
    }
    CHECK(oracle::linear_endpoint_rate(1.0, 0.0, 1.0, 1.0, 200000) == Approx(ou_rate(1.0, 0.0, 1.0, 1.0)).epsilon(1e-4));
}

TEST_CASE("Brownian endpoint rate is |y - x0|^2 / (2T)", "[rate]") {
    const RateResult r = minimize_endpoint_rate(Model::brownian(1), free_line(), scalar(0.0), scalar(1.0), 1.0, quick(16, 128));
    CHECK(r.converged);
    CHECK(r.value == Approx(0.5).epsilon(1e-3));
    CHECK(r.residual < 1e-4);
    const RateResult r2 = minimize_endpoint_rate(Model::brownian(1), free_line(), scalar(0.0), scalar(2.0), 1.0, quick(16, 128));
    CHECK(r2.value == Approx(4.0 * r.value).epsilon(2e-3));
}

TEST_CASE("OU endpoint rate matches the discrete oracle", "[rate]") {
    const int N = 64;
    const RateResult r =
        minimize_endpoint_rate(Model::ornstein_uhlenbeck(1.0), free_line(), scalar(0.0), scalar(1.0), 1.0, quick(N, N));
    CHECK(r.value == Approx(oracle::linear_endpoint_rate(1.0, 0.0, 1.0, 1.0, N)).epsilon(2e-3));
}

TEST_CASE("rate at the starting point vanishes", "[rate]") {
    const RateResult r =
        minimize_endpoint_rate(Model::ornstein_uhlenbeck(1.0), free_line(), scalar(0.0), scalar(0.0), 1.0, quick(8, 64));
    CHECK(r.value < 1e-6);
}

TEST_CASE("minimized rate never exceeds a feasible control's action", "[rate]") {
    // constant control (y - x0)/T is feasible for free Brownian motion
    const RateResult r =
        minimize_endpoint_rate(Model::brownian(1), free_line(), scalar(0.2), scalar(-0.9), 2.0, quick(8, 64));
    const Control c = Control::constant(TimeGrid::make(2.0, 8), scalar(-1.1 / 2.0));
    CHECK(r.value <= 0.5 * action_norm(c) + 1e-4);
    // and the returned control reproduces the endpoint
    const SolutionPath p = solve_skeleton(Model::brownian(1), free_line(), scalar(0.2), r.control, TimeGrid::make(2.0, 64));
    CHECK(p.X(0, 64) == Approx(-0.9).margin(1e-3));
    CHECK(0.5 * action_norm(r.control) == Approx(r.value).epsilon(1e-9));
}

TEST_CASE("rate is stable under grid refinement", "[rate][refinement]") {
    const Model ou = Model::ornstein_uhlenbeck(1.0);
    const double a = minimize_endpoint_rate(ou, free_line(), scalar(0.0), scalar(1.0), 1.0, quick(16, 256)).value;
    const double b = minimize_endpoint_rate(ou, free_line(), scalar(0.0), scalar(1.0), 1.0, quick(32, 512)).value;
    CHECK(std::abs(a - b) / b < 0.05);
    CHECK(b == Approx(ou_rate(1.0, 0.0, 1.0, 1.0)).epsilon(0.02));
}

TEST_CASE("reflection does not change a rate whose optimal path stays inside", "[rate][reflection]") {
    const Model ou = Model::ornstein_uhlenbeck(1.0);
    const double free = minimize_endpoint_rate(ou, free_line(), scalar(0.0), scalar(1.0), 1.0, quick(16, 256)).value;
    const double refl = minimize_endpoint_rate(ou, half_line(), scalar(0.0), scalar(1.0), 1.0, quick(16, 256)).value;
    CHECK(refl == Approx(free).margin(1e-4));
}

TEST_CASE("adjoint gradient agrees with finite differences", "[gradient]") {
    const Vector target = Vector::Constant(2, 0.6);
    const double rho = 10.0;
    const PathCost cost = [&](const Matrix& X) {
        return 0.5 * rho * (X.col(X.cols() - 1) - target).squaredNorm();
    };
    const PathCostGradient grad = [&](const Matrix& X, Matrix& g) {
        g.setZero(X.rows(), X.cols());
        g.col(X.cols() - 1) = rho * (X.col(X.cols() - 1) - target);
    };
    const ActionObjective obj(Model::state_dependent(0.4, 2, -1, 10.0, 0.3),
                              MonotoneOperator::indicator(ConvexDomain::ball(Vector::Zero(2), 1.0)),
                              Vector::Constant(2, 0.1), TimeGrid::make(1.0, 64), TimeGrid::make(1.0, 8), cost, grad);
    Engine eng = make_engine(12);
    std::normal_distribution<double> n01;
    for (int s = 0; s < 5; ++s) {
        Vector flat(obj.size());
        for (int i = 0; i < obj.size(); ++i) flat[i] = 0.3 * n01(eng);
        const double f = obj.value(flat);
        const auto adj = obj.gradient_adjoint(flat);
        REQUIRE(adj.has_value());
        // central differences as an independent reference
        Vector fd(obj.size());
        const double step = 1e-6;
        for (int i = 0; i < obj.size(); ++i) {
            Vector p = flat, m = flat;
            p[i] += step;
            m[i] -= step;
            fd[i] = (obj.value(p) - obj.value(m)) / (2 * step);
        }
        INFO("f = " << f);
        CHECK((*adj - fd).norm() < 1e-5 * (1.0 + fd.norm()));
        CHECK((obj.gradient_fd(flat, f) - fd).norm() < 1e-3 * (1.0 + fd.norm()));
    }
}

TEST_CASE("Laplace candidate values", "[laplace]") {
    const Model bm = Model::brownian(1);
    const RateOptions opts = quick(16, 128);
    SECTION("g = 0 gives 0") {
        CHECK(evaluate_laplace_candidate(bm, free_line(), scalar(0.0), PathFunctional::zero(), 1.0, opts).value ==
              Approx(0.0).margin(1e-9));
    }
    SECTION("constant g gives the constant") {
        CHECK(evaluate_laplace_candidate(bm, free_line(), scalar(0.0), PathFunctional::constant_value(0.7), 1.0, opts)
                  .value == Approx(0.7).margin(1e-9));
    }
    SECTION("capped endpoint distance matches the scan") {
        const LaplaceCandidate c = evaluate_laplace_candidate(
            bm, free_line(), scalar(0.0), PathFunctional::endpoint_distance_cap(scalar(1.0), 1.0), 1.0, opts);
        const double expected = oracle::capped_endpoint_laplace_value(0.0, 1.0, 1.0, 1.0);
        CHECK(expected == Approx(1.0 / 3.0).margin(1e-8));
        CHECK(c.value == Approx(expected).epsilon(1e-4));
        CHECK(c.value == Approx(c.functional_value + c.action).epsilon(1e-9));
    }
}
