#include "msde/domain.hpp"
#include "msde/monotone_operator.hpp"
#include "msde/rng.hpp"

#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

using namespace msde;
using Catch::Approx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector v(std::initializer_list<double> xs) {
    Vector out(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) out[i++] = x;
    return out;
}

ConvexDomain half_line() {
    return ConvexDomain::box(Vector::Zero(1), Vector::Constant(1, kInf));
}

ConvexDomain clipped_square() {
    return ConvexDomain::polytope({{v({-1, 0}), 0.0}, {v({0, -1}), 0.0}, {v({1, 0}), 1.0}, {v({0, 1}), 1.0},
                                   {v({1, 1}), 1.5}},
                                  v({0.4, 0.4}));
}

std::vector<ConvexDomain> all_kinds() {
    return {ConvexDomain::half_space(v({1, -2, 0.5}), 0.3), ConvexDomain::box(v({-1, 0, -kInf}), v({1, 2, 0.5})),
            ConvexDomain::ball(v({0.2, -0.1, 0.3}), 1.5),
            ConvexDomain::polytope({{v({-1, 0, 0}), 0.0}, {v({0, -1, 0}), 0.0}, {v({0, 0, -1}), 0.0},
                                    {v({1, 0, 0}), 1.0}, {v({0, 1, 0}), 1.0}, {v({0, 0, 1}), 1.0},
                                    {v({1, 1, 1}), 2.0}},
                                   v({0.3, 0.3, 0.3}))};
}

Vector random_point(Engine& eng, int m, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Vector x(m);
    for (int i = 0; i < m; ++i) x[i] = u(eng);
    return x;
}

}  // namespace

TEST_CASE("projection onto a half-line clips negative values", "[projection]") {
    CHECK(half_line().project(v({-1}))[0] == 0.0);
    CHECK(half_line().project(v({2.5}))[0] == 2.5);
}

TEST_CASE("projection onto the unit ball is radial", "[projection]") {
    const auto ball = ConvexDomain::ball(Vector::Zero(2), 1.0);
    const Vector p = ball.project(v({2, 0}));
    CHECK(p[0] == Approx(1.0).margin(1e-15));
    CHECK(p[1] == Approx(0.0).margin(1e-15));
}

TEST_CASE("polytope projection matches a brute-force grid search", "[projection][polytope]") {
    const auto d = clipped_square();
    const Eigen::Vector2d x(2.0, 2.0);
    const Eigen::Vector2d grid = oracle::grid_projection(
        [](const Eigen::Vector2d& z) { return z[0] >= 0 && z[1] >= 0 && z[0] <= 1 && z[1] <= 1 && z[0] + z[1] <= 1.5; },
        x, Eigen::Vector2d(-0.5, -0.5), Eigen::Vector2d(1.5, 1.5));
    const Vector p = d.project(x);
    CHECK((p - grid).norm() < 1e-6);
    CHECK(p[0] == Approx(0.75).margin(1e-9));
    CHECK(p[1] == Approx(0.75).margin(1e-9));

    for (const Eigen::Vector2d y : {Eigen::Vector2d(-1.0, 0.3), Eigen::Vector2d(1.7, -0.4), Eigen::Vector2d(0.9, 3.0)}) {
        const Eigen::Vector2d g = oracle::grid_projection(
            [](const Eigen::Vector2d& z) {
                return z[0] >= 0 && z[1] >= 0 && z[0] <= 1 && z[1] <= 1 && z[0] + z[1] <= 1.5;
            },
            y, Eigen::Vector2d(-0.5, -0.5), Eigen::Vector2d(1.5, 1.5));
        CHECK((d.project(y) - g).norm() < 1e-6);
    }
}

TEST_CASE("Dykstra reports its residual when the sweep budget runs out", "[projection][polytope]") {
    // two nearly parallel faces meeting at a sharp wedge converge slowly
    const std::vector<HalfSpace> faces{{v({1, 1e-3}), 0.0}, {v({-1, 1e-3}), 0.0}};
    const auto d = ConvexDomain::polytope(faces, v({0, -1}), DykstraOptions{1e-15, 2});
    try {
        (void)d.project(v({0, 5}));
        FAIL("expected a NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.residual() > 0.0);
    }
    const std::vector<HalfSpace> wide{{v({1, 0.3}), 0.0}, {v({-1, 0.3}), 0.0}};
    const DykstraResult r = dykstra_project(wide, v({0, 5}), DykstraOptions{1e-12, 100000});
    CHECK(r.converged);
    CHECK(r.point.norm() < 1e-6);
}

TEST_CASE("normal cone membership", "[normal_cone]") {
    SECTION("interior points carry only the zero vector") {
        const auto ball = ConvexDomain::ball(Vector::Zero(2), 1.0);
        CHECK(ball.normal_cone_contains(v({0.1, 0.2}), v({0, 0})));
        CHECK_FALSE(ball.normal_cone_contains(v({0.1, 0.2}), v({1e-3, 0})));
    }
    SECTION("half-plane x1 >= 0: outward normal is -e1") {
        const auto hp = ConvexDomain::half_space(v({-1, 0, 0}), 0.0);
        CHECK(hp.normal_cone_contains(v({0, 1, -2}), v({-1, 0, 0})));
        CHECK(hp.normal_cone_contains(v({0, 1, -2}), v({-3, 0, 0})));
        CHECK_FALSE(hp.normal_cone_contains(v({0, 1, -2}), v({1, 0, 0})));
        CHECK_FALSE(hp.normal_cone_contains(v({0, 1, -2}), v({-1, 0.5, 0})));
    }
    SECTION("unit ball: nonnegative radial ray") {
        const auto ball = ConvexDomain::ball(Vector::Zero(2), 1.0);
        CHECK(ball.normal_cone_contains(v({1, 0}), v({2, 0})));
        CHECK_FALSE(ball.normal_cone_contains(v({1, 0}), v({0, 1})));
        CHECK_FALSE(ball.normal_cone_contains(v({1, 0}), v({-1, 0})));
    }
    SECTION("polytope corner: cone spanned by both active normals") {
        const auto d = clipped_square();
        CHECK(d.normal_cone_contains(v({1, 0.5}), v({1, 1})));
        CHECK(d.normal_cone_contains(v({1, 0.5}), v({2, 1})));
        CHECK_FALSE(d.normal_cone_contains(v({1, 0.5}), v({0, 1})));
    }
    SECTION("points outside the domain are rejected") {
        CHECK_THROWS_AS(half_line().normal_cone_contains(v({-1}), v({-1})), DomainError);
        CHECK_THROWS_WITH(half_line().normal_cone_contains(v({-1}), v({-1})), Catch::Matchers::ContainsSubstring("point not in domain"));
    }
}

TEST_CASE("normal cone membership agrees with the defining inequality on sampled points", "[normal_cone][property]") {
    Engine eng = make_engine(31);
    for (const auto& d : all_kinds()) {
        const int m = d.dim();
        for (int s = 0; s < 200; ++s) {
            const Vector x = d.project(random_point(eng, m, 4.0));
            const Vector y = random_point(eng, m, 1.0);
            const Vector outward = random_point(eng, m, 4.0);
            const Vector base = d.project(outward);
            const Vector n = outward - base;  // always in the cone at base
            CHECK(d.normal_cone_contains(base, n));
            if (d.normal_cone_contains(x, y)) {
                for (int t = 0; t < 50; ++t) {
                    const Vector z = d.project(random_point(eng, m, 4.0));
                    CHECK(y.dot(x - z) >= -1e-9);
                }
            }
        }
    }
}

TEST_CASE("resolvent examples", "[resolvent]") {
    const auto ind = MonotoneOperator::indicator(half_line());
    for (double lam : {0.01, 1.0, 50.0}) CHECK(ind.resolvent(lam, v({-3}))[0] == 0.0);
    const auto sg = MonotoneOperator::graph(FilledGraph::sign());
    CHECK(sg.resolvent(1.0, v({0.5}))[0] == Approx(0.0).margin(1e-12));
    CHECK(sg.resolvent(1.0, v({2.0}))[0] == Approx(1.0).margin(1e-12));
    CHECK(sg.resolvent(1.0, v({-4.0}))[0] == Approx(-3.0).margin(1e-12));
}

TEST_CASE("Yosida approximation examples", "[yosida]") {
    const auto ind = MonotoneOperator::indicator(half_line());
    CHECK(ind.yosida(0.5, v({-1}))[0] == Approx(-2.0));
    CHECK(ind.yosida(0.5, v({3}))[0] == 0.0);
    const auto sg = MonotoneOperator::graph(FilledGraph::sign());
    CHECK(sg.yosida(1.0, v({2.0}))[0] == Approx(1.0).margin(1e-12));
}

TEST_CASE("filled graph resolvent solves the inclusion on a piecewise graph", "[resolvent][graph]") {
    // jump at 0 from -1 to 1, slope 2 on [0, 1], jump at 1 from 3 to 4
    const FilledGraph g({{0.0, -1.0, 1.0}, {1.0, 3.0, 4.0}});
    REQUIRE(g.is_monotone());
    const auto op = MonotoneOperator::graph(g);
    Engine eng = make_engine(5);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int s = 0; s < 500; ++s) {
        const double x = u(eng);
        const double lam = 0.1 + std::abs(u(eng)) / 5.0;
        const double z = op.resolvent(lam, v({x}))[0];
        const auto [lo, hi] = g.values(z);
        const double w = (x - z) / lam;
        CHECK(w >= lo - 1e-9);
        CHECK(w <= hi + 1e-9);
    }
}

TEST_CASE("sum operator resolvent satisfies its inclusion", "[resolvent][sum]") {
    AffineMonotoneMap L{Matrix(2, 2), v({0.3, -0.1})};
    L.matrix << 1.0, 2.0, -2.0, 0.5;
    const auto ball = ConvexDomain::ball(Vector::Zero(2), 1.0);
    const auto op = MonotoneOperator::sum(ball, L);
    Engine eng = make_engine(6);
    for (double lam : {0.05, 0.2, 3.0}) {
        for (int s = 0; s < 100; ++s) {
            const Vector x = random_point(eng, 2, 3.0);
            const Vector z = op.resolvent(lam, x);
            REQUIRE(ball.contains(z, 1e-10));
            const Vector w = (x - z) / lam - L(z);
            CHECK(ball.normal_cone_contains(z, w + Vector::Constant(2, 0.0)));
        }
    }
    CHECK_THROWS_AS(MonotoneOperator::sum(ball, AffineMonotoneMap{-Matrix::Identity(2, 2), Vector::Zero(2)}),
                    std::invalid_argument);
}

TEST_CASE("projection invariants on random samples", "[projection][property]") {
    Engine eng = make_engine(7);
    for (const auto& d : all_kinds()) {
        const int m = d.dim();
        INFO("domain " << to_string(d.kind()));
        for (int s = 0; s < 1000; ++s) {
            const Vector x = random_point(eng, m, 5.0);
            const Vector y = random_point(eng, m, 5.0);
            const Vector px = d.project(x);
            const Vector py = d.project(y);
            CHECK(d.contains(px, 1e-10));
            CHECK((d.project(px) - px).norm() <= 1e-12);
            CHECK((px - py).norm() <= (x - y).norm() + 1e-12);
            for (int t = 0; t < 5; ++t) {
                const Vector z = d.project(random_point(eng, m, 5.0));
                CHECK((x - px).dot(z - px) <= 1e-10);
            }
        }
    }
}

TEST_CASE("resolvent is firmly non-expansive and Yosida is 2/lambda Lipschitz", "[resolvent][property]") {
    std::vector<MonotoneOperator> ops;
    for (const auto& d : all_kinds()) ops.push_back(MonotoneOperator::indicator(d));
    ops.push_back(MonotoneOperator::graph(FilledGraph::sign()));
    ops.push_back(MonotoneOperator::graph(FilledGraph({{-1.0, -2.0, -1.0}, {0.5, 0.0, 0.0}, {2.0, 1.0, 5.0}})));
    Engine eng = make_engine(8);
    std::uniform_real_distribution<double> lam_dist(0.01, 3.0);
    for (const auto& op : ops) {
        const int m = op.dim();
        for (int s = 0; s < 500; ++s) {
            const double lam = lam_dist(eng);
            const Vector x = random_point(eng, m, 5.0);
            const Vector y = random_point(eng, m, 5.0);
            const Vector jx = op.resolvent(lam, x);
            const Vector jy = op.resolvent(lam, y);
            CHECK((jx - jy).squaredNorm() <= (jx - jy).dot(x - y) + 1e-10);
            CHECK((op.yosida(lam, x) - op.yosida(lam, y)).norm() <= (2.0 / lam) * (x - y).norm() + 1e-9);
        }
    }
}

TEST_CASE("Yosida pairs are monotone against the exact graph points", "[yosida][property]") {
    std::vector<MonotoneOperator> ops;
    for (const auto& d : all_kinds()) ops.push_back(MonotoneOperator::indicator(d));
    ops.push_back(MonotoneOperator::graph(FilledGraph::sign()));
    Engine eng = make_engine(9);
    for (const auto& op : ops) {
        const auto refs = op.reference_graph_points();
        REQUIRE_FALSE(refs.empty());
        for (int s = 0; s < 300; ++s) {
            const Vector x = random_point(eng, op.dim(), 4.0);
            const double lam = 0.3;
            const Vector jx = op.resolvent(lam, x);
            const Vector ax = op.yosida(lam, x);
            for (const auto& [p, q] : refs) CHECK((ax - q).dot(jx - p) >= -1e-9);
        }
    }
}

TEST_CASE("monotonicity verification", "[verify_monotone]") {
    CHECK(verify_monotone(MonotoneOperator::indicator(ConvexDomain::ball(Vector::Zero(2), 1.0)), 10000, 1).passed);
    CHECK(verify_monotone(MonotoneOperator::graph(FilledGraph::sign()), 10000, 2).passed);
    // decreasing segment between the two breakpoints
    const FilledGraph bad({{0.0, 0.0, 0.0}, {1.0, -1.0, -1.0}});
    CHECK_FALSE(bad.is_monotone());
    const auto rep = verify_monotone(MonotoneOperator::graph(bad), 10000, 3);
    CHECK_FALSE(rep.passed);
    CHECK(rep.min_inner < 0.0);
    CHECK((rep.witness_y1 - rep.witness_y2).dot(rep.witness_x1 - rep.witness_x2) == Approx(rep.min_inner));
}

TEST_CASE("interior-ball constants", "[cepa]") {
    const auto b = cepa_constants(ConvexDomain::ball(Vector::Zero(2), 1.0));
    CHECK(b.a.norm() == 0.0);
    CHECK(b.gamma == Approx(0.5));
    CHECK(b.mu == 0.0);
    const auto h = cepa_constants(ConvexDomain::box(Vector::Zero(1), Vector::Constant(1, kInf), v({1})));
    CHECK(h.a[0] == 1.0);
    CHECK(h.gamma == Approx(0.5));
    const auto s = cepa_constants(ConvexDomain::box(Vector::Zero(2), Vector::Ones(2), v({0.5, 0.5})));
    CHECK(s.gamma == Approx(0.25));
    CHECK_THROWS_AS(cepa_constants(ConvexDomain::box(Vector::Zero(1), Vector::Ones(1), v({1e-9}))), DomainError);

    AffineMonotoneMap L{Matrix::Identity(2, 2), Vector::Zero(2)};
    const auto sum = cepa_constants(MonotoneOperator::sum(ConvexDomain::ball(Vector::Zero(2), 1.0), L), 4);
    CHECK(sum.mu >= 0.5);  // sup |x| over B(0, 1/2)
    CHECK(sum.mu <= 0.5 * 1.1 + 1e-12);
}

TEST_CASE("interior-ball inequality holds pointwise on boundary samples", "[cepa][property]") {
    Engine eng = make_engine(10);
    for (const auto& d : all_kinds()) {
        const auto c = cepa_constants(d);
        for (int s = 0; s < 1000; ++s) {
            const Vector out = random_point(eng, d.dim(), 6.0);
            const Vector x = d.project(out);
            if ((out - x).norm() < 1e-6) continue;
            const Vector y = (out - x).normalized();
            CHECK((x - c.a).dot(y) >= c.gamma * y.norm() - 1e-10);
        }
    }
}

TEST_CASE("projection Jacobian matches finite differences away from kinks", "[projection][jacobian]") {
    const auto ball = ConvexDomain::ball(v({0.1, 0.2}), 1.3);
    Engine eng = make_engine(12);
    for (int s = 0; s < 50; ++s) {
        const Vector y = random_point(eng, 2, 3.0);
        const Matrix J = ball.projection_jacobian(y);
        Matrix fd(2, 2);
        const double h = 1e-7;
        for (int j = 0; j < 2; ++j) {
            Vector yp = y, ym = y;
            yp[j] += h;
            ym[j] -= h;
            fd.col(j) = (ball.project(yp) - ball.project(ym)) / (2 * h);
        }
        CHECK((J - fd).norm() < 1e-6);
    }
}

TEST_CASE("non-negative least squares matches brute-force enumeration", "[nnls]") {
    Engine eng = make_engine(13);
    for (int s = 0; s < 100; ++s) {
        Matrix G(3, 3);
        for (int i = 0; i < 9; ++i) G.data()[i] = random_point(eng, 1, 1.0)[0];
        const Vector y = random_point(eng, 3, 1.0);
        const Vector c = nonnegative_least_squares(G, y);
        CHECK((c.array() >= 0.0).all());
        double best = kInf;
        for (int mask = 0; mask < 8; ++mask) {
            std::vector<int> idx;
            for (int j = 0; j < 3; ++j) {
                if (mask & (1 << j)) idx.push_back(j);
            }
            Vector full = Vector::Zero(3);
            if (!idx.empty()) {
                Matrix Gs(3, static_cast<Eigen::Index>(idx.size()));
                for (std::size_t k = 0; k < idx.size(); ++k) Gs.col(static_cast<Eigen::Index>(k)) = G.col(idx[k]);
                const Vector cs = Gs.colPivHouseholderQr().solve(y);
                if ((cs.array() < 0.0).any()) continue;
                for (std::size_t k = 0; k < idx.size(); ++k) full[idx[k]] = cs[static_cast<Eigen::Index>(k)];
            }
            best = std::min(best, (G * full - y).norm());
        }
        CHECK((G * c - y).norm() <= best + 1e-9);
    }
}

TEST_CASE("invalid domains are rejected", "[domain]") {
    CHECK_THROWS_AS(ConvexDomain::ball(Vector::Zero(2), -1.0), std::invalid_argument);
    CHECK_THROWS_AS(ConvexDomain::box(Vector::Ones(2), Vector::Zero(2)), std::invalid_argument);
    CHECK_THROWS_AS(ConvexDomain::half_space(Vector::Zero(2), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ConvexDomain::polytope({{v({1, 0}), 0.0}}, v({0.5, 0})), std::invalid_argument);
    CHECK_THROWS_AS(FilledGraph({{1.0, 0.0, 0.0}, {0.0, 1.0, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(FilledGraph({{0.0, 1.0, 0.0}}), std::invalid_argument);
}
