#pragma once

#include "msde/common.hpp"
#include "msde/domain.hpp"

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace msde {

/// A breakpoint of a filled monotone graph in R: at `at` the graph takes every
/// value in the closed interval [lo, hi]. Between consecutive breakpoints the
/// graph is the segment joining hi_i to lo_{i+1}; outside the outermost
/// breakpoints it is constant.
struct GraphBreakpoint {
    double at = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Maximal monotone graph on the real line, D(A) = R. Construction checks
/// ordering and lo <= hi only; monotonicity is a property checked by
/// verify_monotone so that corrupted graphs can still be examined.
class FilledGraph {
public:
    explicit FilledGraph(std::vector<GraphBreakpoint> points);

    static FilledGraph sign();

    const std::vector<GraphBreakpoint>& points() const noexcept { return points_; }
    /// Value range A(z) as [lo, hi].
    std::pair<double, double> values(double z) const;
    /// Slope of the single-valued piece containing z (0 outside the segments).
    double slope(double z) const;
    /// Largest |y| over y in A(z), z in [a, b].
    double sup_abs(double a, double b) const;
    bool is_monotone() const;

private:
    std::vector<GraphBreakpoint> points_;
};

/// Single-valued monotone Lipschitz part L(x) = M x + v. Monotone iff the
/// symmetric part of M is positive semidefinite.
struct AffineMonotoneMap {
    Matrix matrix;
    Vector offset;

    Vector operator()(const Eigen::Ref<const Vector>& x) const { return matrix * x + offset; }
    double lipschitz() const;
    bool is_monotone() const;
};

enum class OperatorVariant { IndicatorSubdifferential, FilledGraph, SumWithLipschitz };

const char* to_string(OperatorVariant v);

/// Maximal monotone operator A: the subdifferential of a convex-set indicator,
/// a filled 1-D graph, or either of those plus an affine monotone map.
/// Immutable; safe to share across threads.
class MonotoneOperator {
public:
    using Base = std::variant<ConvexDomain, FilledGraph>;

    static MonotoneOperator indicator(ConvexDomain domain);
    static MonotoneOperator graph(FilledGraph graph);
    static MonotoneOperator sum(Base base, AffineMonotoneMap map);

    OperatorVariant variant() const noexcept;
    int dim() const noexcept { return dim_; }

    const Base& base() const noexcept { return base_; }
    const std::optional<AffineMonotoneMap>& lipschitz_part() const noexcept { return lipschitz_; }
    /// Domain of the indicator base, if any.
    const ConvexDomain* domain() const noexcept { return std::get_if<ConvexDomain>(&base_); }

    /// x in the closure of D(A).
    bool in_domain_closure(const Eigen::Ref<const Vector>& x, double tol = 1e-10) const;

    /// J_lambda(x) = (I + lambda A)^{-1} x.
    Vector resolvent(double lambda, const Eigen::Ref<const Vector>& x) const;
    void resolvent_inplace(double lambda, Eigen::Ref<Vector> x) const;
    /// A_lambda(x) = (x - J_lambda x) / lambda.
    Vector yosida(double lambda, const Eigen::Ref<const Vector>& x) const;

    /// d J_lambda / dx at x, or nullopt when no closed-form generalized
    /// Jacobian is available (sum variants).
    std::optional<Matrix> resolvent_jacobian(double lambda, const Eigen::Ref<const Vector>& x) const;

    /// Exact graph pairs known from the construction.
    std::vector<std::pair<Vector, Vector>> reference_graph_points() const;

    /// A box in which graph samples are drawn: centre and half-width.
    std::pair<Vector, double> sampling_region() const;

private:
    MonotoneOperator(Base base, std::optional<AffineMonotoneMap> lip);

    void base_resolvent_inplace(double lambda, Eigen::Ref<Vector> x) const;

    Base base_;
    std::optional<AffineMonotoneMap> lipschitz_;
    double lip_constant_ = 0.0;
    int dim_ = 0;
};

struct MonotonicityReport {
    long pairs = 0;
    double min_inner = 0.0;  // min <y1 - y2, x1 - x2>
    Vector witness_x1, witness_y1, witness_x2, witness_y2;
    bool passed = false;
};

/// Samples graph pairs through the resolvent at lambda = 1e-4 and reports
/// the smallest monotonicity inner product; passes iff it is >= -1e-9.
MonotonicityReport verify_monotone(const MonotoneOperator& op, long sample_count, std::uint64_t seed);

/// Constants (a, gamma, mu) of the interior-ball inequality.
struct CepaConstants {
    Vector a;
    double gamma = 0.0;
    double mu = 0.0;
};

/// a = stored interior point, gamma = half the boundary distance of a, mu = 0
/// for indicators. Sum variants sample the single-valued part over B(a, gamma)
/// and add a 10% margin. When D(A) has no boundary, gamma = 0.5.
CepaConstants cepa_constants(const ConvexDomain& domain);
CepaConstants cepa_constants(const MonotoneOperator& op, std::uint64_t seed = 0);

}  // namespace msde
