#pragma once

#include "msde/common.hpp"

#include <cstdint>
#include <string>

namespace msde {

enum class ModelKind { Brownian, OrnsteinUhlenbeck, DoubleWell, StateDependent };

const char* to_string(ModelKind kind);

/// Declared growth and regularity constants:
///   <x - y, b(x) - b(y)> <= c_b |x - y|^2
///   ||sigma(x) - sigma(y)||_HS <= c_sigma |x - y|
///   |b(x)| <= c_b_prime (1 + |x|^growth_order)
struct ModelConstants {
    double c_b = 0.0;
    double c_sigma = 0.0;
    double c_b_prime = 1.0;
    int growth_order = 1;
};

/// Built-in drift/diffusion pairs. Values are immutable; evaluation is pure.
///
///   brownian   b = 0,                sigma = I
///   ou         b = -lambda x,        sigma = I
///   doublewell b = x - x^3 (1-D),    sigma = I
///   statedep   b = -lambda x,        sigma = diag(1 + c min(|x_i|, clip))
///
/// sigma is m x d; "I" means ones on the leading diagonal.
class Model {
public:
    static Model brownian(int dim = 1, int noise_dim = -1);
    static Model ornstein_uhlenbeck(double lambda, int dim = 1, int noise_dim = -1);
    static Model double_well(int noise_dim = 1);
    static Model state_dependent(double c, int dim = 1, int noise_dim = -1, double clip = 10.0,
                                 double lambda = 0.0);

    Model with_constants(const ModelConstants& constants) const;

    ModelKind kind() const noexcept { return kind_; }
    int dim() const noexcept { return dim_; }
    int noise_dim() const noexcept { return noise_dim_; }
    const ModelConstants& constants() const noexcept { return constants_; }
    double lambda() const noexcept { return lambda_; }
    double c() const noexcept { return c_; }
    double clip() const noexcept { return clip_; }

    /// b(x); throws NumericalError reporting |x| if the result is not finite.
    Vector drift(const Eigen::Ref<const Vector>& x) const;
    /// sigma(x) as an m x d matrix; same error contract as drift.
    Matrix diffusion(const Eigen::Ref<const Vector>& x) const;

    // Unchecked variants used inside time-stepping loops.
    void drift_into(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> out) const;
    void diffusion_into(const Eigen::Ref<const Vector>& x, Eigen::Ref<Matrix> out) const;

    Matrix drift_jacobian(const Eigen::Ref<const Vector>& x) const;
    /// d/dx [sigma(x) v] for a fixed v in R^d, an m x m matrix.
    Matrix diffusion_action_jacobian(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& v) const;

private:
    Model(ModelKind kind, int dim, int noise_dim);

    ModelKind kind_;
    int dim_;
    int noise_dim_;
    double lambda_ = 0.0;
    double c_ = 0.0;
    double clip_ = 10.0;
    ModelConstants constants_;
};

struct H2Report {
    long pairs = 0;
    double one_sided = 0.0;     // max <x-y, b(x)-b(y)> / |x-y|^2
    double sigma_lipschitz = 0.0;  // max ||sigma(x)-sigma(y)|| / |x-y|
    double growth = 0.0;        // max |b(x)| / (1 + |x|^n)
    bool one_sided_ok = false;
    bool sigma_ok = false;
    bool growth_ok = false;
    bool passed() const noexcept { return one_sided_ok && sigma_ok && growth_ok; }
};

/// Empirical check of the declared constants on pairs sampled uniformly in the
/// ball of the given radius. Each ratio passes if it is <= constant + 1e-6.
H2Report verify_h2(const Model& model, long sample_count, double radius, std::uint64_t seed);

}  // namespace msde
