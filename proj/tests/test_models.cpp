#include "msde/models.hpp"
#include "msde/rng.hpp"

#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace msde;
using Catch::Approx;

namespace {

Vector v(std::initializer_list<double> xs) {
    Vector out(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) out[i++] = x;
    return out;
}

}  // namespace

TEST_CASE("drift examples", "[drift]") {
    CHECK(Model::ornstein_uhlenbeck(1.0).drift(v({2}))[0] == -2.0);
    CHECK(Model::brownian(3).drift(v({1, -7, 2})).norm() == 0.0);
    CHECK(Model::double_well().drift(v({1}))[0] == 0.0);
    CHECK(Model::double_well().drift(v({-1}))[0] == 0.0);
    CHECK(Model::double_well().drift(v({0.5}))[0] == Approx(0.5 - 0.125));
}

TEST_CASE("diffusion examples", "[diffusion]") {
    CHECK(Model::brownian(2).diffusion(v({3, -4})).isApprox(Matrix::Identity(2, 2)));
    CHECK(Model::state_dependent(0.5).diffusion(v({2}))(0, 0) == Approx(2.0));
    CHECK(Model::state_dependent(0.5).diffusion(v({-2}))(0, 0) == Approx(2.0));
    CHECK(Model::state_dependent(0.5, 1, -1, 3.0).diffusion(v({100}))(0, 0) == Approx(2.5));
    CHECK(Model::ornstein_uhlenbeck(2.0, 2).diffusion(v({1, 1})).isApprox(Matrix::Identity(2, 2)));
    const Matrix s = Model::brownian(2, 3).diffusion(v({0, 0}));
    CHECK(s.rows() == 2);
    CHECK(s.cols() == 3);
    CHECK(s(0, 0) == 1.0);
    CHECK(s(1, 1) == 1.0);
    CHECK(s(0, 2) == 0.0);
}

TEST_CASE("overflow is reported with the state norm", "[drift]") {
    const Model dw = Model::double_well();
    CHECK_THROWS_AS(dw.drift(v({1e200})), NumericalError);
    CHECK_THROWS_WITH(dw.drift(v({1e200})), Catch::Matchers::ContainsSubstring("1e+200"));
}

TEST_CASE("built-ins pass the hypothesis check with their declared constants", "[h2]") {
    for (const Model& m : {Model::brownian(2), Model::ornstein_uhlenbeck(1.0), Model::ornstein_uhlenbeck(-0.5, 2),
                           Model::double_well(), Model::state_dependent(0.5, 2), Model::state_dependent(0.3, 1, -1, 10.0, 1.0)}) {
        INFO("model " << to_string(m.kind()));
        const H2Report r = verify_h2(m, 10000, 10.0, 17);
        CHECK(r.passed());
    }
}

TEST_CASE("OU one-sided constant is -lambda", "[h2]") {
    const H2Report r = verify_h2(Model::ornstein_uhlenbeck(1.0), 10000, 10.0, 3);
    CHECK(r.one_sided == Approx(-1.0).margin(1e-9));
    CHECK(r.one_sided <= 0.0);
}

TEST_CASE("double-well one-sided constant agrees with the calculus bound", "[h2]") {
    const double bound = oracle::double_well_one_sided(10.0);
    CHECK(bound == Approx(1.0));
    const H2Report r = verify_h2(Model::double_well(), 10000, 10.0, 4);
    CHECK(r.one_sided <= bound + 1e-9);
    CHECK(r.one_sided_ok);
    // declaring a smaller constant must be caught
    ModelConstants c = Model::double_well().constants();
    c.c_b = 0.0;
    CHECK_FALSE(verify_h2(Model::double_well().with_constants(c), 10000, 10.0, 4).one_sided_ok);
}

TEST_CASE("a wrongly declared diffusion constant fails", "[h2]") {
    ModelConstants c = Model::state_dependent(0.5).constants();
    c.c_sigma = 0.1;
    CHECK_FALSE(verify_h2(Model::state_dependent(0.5).with_constants(c), 2000, 10.0, 5).sigma_ok);
}

TEST_CASE("evaluation is deterministic", "[drift]") {
    const Model m = Model::state_dependent(0.7, 3, -1, 10.0, 0.4);
    const Vector x = v({0.3, -1.2, 5.0});
    const Vector b1 = m.drift(x);
    const Vector b2 = m.drift(x);
    CHECK((b1.array() == b2.array()).all());
    const Matrix s1 = m.diffusion(x);
    const Matrix s2 = m.diffusion(x);
    CHECK((s1.array() == s2.array()).all());
}

TEST_CASE("Jacobians match central differences", "[jacobian]") {
    Engine eng = make_engine(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (const Model& m : {Model::ornstein_uhlenbeck(0.7, 2), Model::double_well(), Model::state_dependent(0.4, 2, -1, 10.0, 0.3)}) {
        for (int s = 0; s < 20; ++s) {
            Vector x(m.dim());
            for (int i = 0; i < m.dim(); ++i) {
                x[i] = u(eng);
                if (std::abs(x[i]) < 0.05) x[i] = 0.5;  // keep away from |x| kinks
            }
            Vector w(m.noise_dim());
            for (int i = 0; i < m.noise_dim(); ++i) w[i] = u(eng);
            const double h = 1e-6;
            Matrix jb(m.dim(), m.dim());
            Matrix js(m.dim(), m.dim());
            for (int j = 0; j < m.dim(); ++j) {
                Vector xp = x, xm = x;
                xp[j] += h;
                xm[j] -= h;
                jb.col(j) = (m.drift(xp) - m.drift(xm)) / (2 * h);
                js.col(j) = (m.diffusion(xp) * w - m.diffusion(xm) * w) / (2 * h);
            }
            CHECK((m.drift_jacobian(x) - jb).norm() < 1e-6);
            CHECK((m.diffusion_action_jacobian(x, w) - js).norm() < 1e-6);
        }
    }
}

TEST_CASE("invalid model parameters are rejected", "[model]") {
    CHECK_THROWS_AS(Model::brownian(0), std::invalid_argument);
    CHECK_THROWS_AS(Model::state_dependent(-1.0), std::invalid_argument);
}
