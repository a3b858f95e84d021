#include "msde/models.hpp"

#include "msde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

namespace msde {

namespace {

std::string overflow_message(const char* what, double norm) {
    std::ostringstream os;
    os << what << " overflow at |x| = " << norm;
    return os.str();
}

}  // namespace

const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Brownian: return "brownian";
        case ModelKind::OrnsteinUhlenbeck: return "ou";
        case ModelKind::DoubleWell: return "doublewell";
        case ModelKind::StateDependent: return "statedep";
    }
    return "unknown";
}

Model::Model(ModelKind kind, int dim, int noise_dim)
    : kind_(kind), dim_(dim), noise_dim_(noise_dim < 0 ? dim : noise_dim) {
    if (dim_ < 1) throw std::invalid_argument("model: dimension must be >= 1");
    if (noise_dim_ < 1) throw std::invalid_argument("model: noise dimension must be >= 1");
}

Model Model::brownian(int dim, int noise_dim) {
    Model m(ModelKind::Brownian, dim, noise_dim);
    m.constants_ = {0.0, 0.0, 1.0, 1};
    return m;
}

Model Model::ornstein_uhlenbeck(double lambda, int dim, int noise_dim) {
    if (!std::isfinite(lambda)) throw std::invalid_argument("ou: lambda must be finite");
    Model m(ModelKind::OrnsteinUhlenbeck, dim, noise_dim);
    m.lambda_ = lambda;
    m.constants_ = {std::max(0.0, -lambda), 0.0, std::abs(lambda), 1};
    return m;
}

Model Model::double_well(int noise_dim) {
    Model m(ModelKind::DoubleWell, 1, noise_dim);
    m.constants_ = {1.0, 0.0, 1.0, 3};
    return m;
}

Model Model::state_dependent(double c, int dim, int noise_dim, double clip, double lambda) {
    if (!std::isfinite(c) || c < 0.0) throw std::invalid_argument("statedep: c must be >= 0");
    if (!(clip > 0.0) || !std::isfinite(clip)) throw std::invalid_argument("statedep: clip must be positive");
    if (!std::isfinite(lambda)) throw std::invalid_argument("statedep: lambda must be finite");
    Model m(ModelKind::StateDependent, dim, noise_dim);
    m.c_ = c;
    m.clip_ = clip;
    m.lambda_ = lambda;
    m.constants_ = {std::max(0.0, -lambda), c, std::abs(lambda), 1};
    return m;
}

Model Model::with_constants(const ModelConstants& constants) const {
    if (constants.c_b < 0.0 || constants.c_sigma < 0.0 || constants.c_b_prime < 0.0 ||
        constants.growth_order < 0) {
        throw std::invalid_argument("model constants must be non-negative");
    }
    Model m = *this;
    m.constants_ = constants;
    return m;
}

void Model::drift_into(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> out) const {
    switch (kind_) {
        case ModelKind::Brownian:
            out.setZero();
            return;
        case ModelKind::OrnsteinUhlenbeck:
        case ModelKind::StateDependent:
            out = -lambda_ * x;
            return;
        case ModelKind::DoubleWell:
            out[0] = x[0] - x[0] * x[0] * x[0];
            return;
    }
}

void Model::diffusion_into(const Eigen::Ref<const Vector>& x, Eigen::Ref<Matrix> out) const {
    out.setZero();
    const int k = std::min(dim_, noise_dim_);
    if (kind_ == ModelKind::StateDependent) {
        for (int i = 0; i < k; ++i) out(i, i) = 1.0 + c_ * std::min(std::abs(x[i]), clip_);
    } else {
        for (int i = 0; i < k; ++i) out(i, i) = 1.0;
    }
}

Vector Model::drift(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != dim_) throw std::invalid_argument("drift: dimension mismatch");
    Vector out(dim_);
    drift_into(x, out);
    if (!out.allFinite()) {
        throw NumericalError(overflow_message("drift", x.stableNorm()), x.stableNorm());
    }
    return out;
}

Matrix Model::diffusion(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != dim_) throw std::invalid_argument("diffusion: dimension mismatch");
    Matrix out(dim_, noise_dim_);
    diffusion_into(x, out);
    if (!out.allFinite()) {
        throw NumericalError(overflow_message("diffusion", x.stableNorm()), x.stableNorm());
    }
    return out;
}

Matrix Model::drift_jacobian(const Eigen::Ref<const Vector>& x) const {
    switch (kind_) {
        case ModelKind::Brownian:
            return Matrix::Zero(dim_, dim_);
        case ModelKind::OrnsteinUhlenbeck:
        case ModelKind::StateDependent:
            return -lambda_ * Matrix::Identity(dim_, dim_);
        case ModelKind::DoubleWell:
            return Matrix::Constant(1, 1, 1.0 - 3.0 * x[0] * x[0]);
    }
    return Matrix::Zero(dim_, dim_);
}

Matrix Model::diffusion_action_jacobian(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& v) const {
    Matrix j = Matrix::Zero(dim_, dim_);
    if (kind_ != ModelKind::StateDependent) return j;
    const int k = std::min(dim_, noise_dim_);
    for (int i = 0; i < k; ++i) {
        const double ax = std::abs(x[i]);
        if (ax < clip_ && x[i] != 0.0) j(i, i) = c_ * (x[i] > 0.0 ? 1.0 : -1.0) * v[i];
    }
    return j;
}

H2Report verify_h2(const Model& model, long sample_count, double radius, std::uint64_t seed) {
    if (sample_count < 1) throw std::invalid_argument("verify_h2: sample_count must be >= 1");
    if (!(radius > 0.0)) throw std::invalid_argument("verify_h2: radius must be positive");
    Engine eng = make_engine(derive_seed(seed, 0, 0x6832));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    const int m = model.dim();

    auto draw = [&] {
        Vector u(m);
        for (int i = 0; i < m; ++i) u[i] = normal(eng);
        const double n = u.norm();
        if (n == 0.0) return Vector(Vector::Zero(m));
        return Vector(u * (radius * std::pow(unif(eng), 1.0 / m) / n));
    };

    const auto& k = model.constants();
    H2Report rep;
    rep.one_sided = -std::numeric_limits<double>::infinity();
    for (long s = 0; s < sample_count; ++s) {
        const Vector x = draw();
        const Vector y = draw();
        const double dist2 = (x - y).squaredNorm();
        const Vector bx = model.drift(x);
        const Vector by = model.drift(y);
        auto growth = [&](const Vector& p, const Vector& b) {
            return b.norm() / (1.0 + std::pow(p.norm(), k.growth_order));
        };
        rep.growth = std::max({rep.growth, growth(x, bx), growth(y, by)});
        if (dist2 < 1e-24) continue;
        ++rep.pairs;
        rep.one_sided = std::max(rep.one_sided, (x - y).dot(bx - by) / dist2);
        rep.sigma_lipschitz =
            std::max(rep.sigma_lipschitz, (model.diffusion(x) - model.diffusion(y)).norm() / std::sqrt(dist2));
    }
    constexpr double kSlack = 1e-6;
    rep.one_sided_ok = rep.one_sided <= k.c_b + kSlack;
    rep.sigma_ok = rep.sigma_lipschitz <= k.c_sigma + kSlack;
    rep.growth_ok = rep.growth <= k.c_b_prime + kSlack;
    return rep;
}

}  // namespace msde
