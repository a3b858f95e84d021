#pragma once

#include "msde/common.hpp"

#include <optional>
#include <vector>

namespace msde {

enum class DomainKind { HalfSpace, Box, Ball, Polytope };

const char* to_string(DomainKind kind);

/// {x : <normal, x> <= offset}
struct HalfSpace {
    Vector normal;
    double offset = 0.0;
};

struct DykstraOptions {
    double tolerance = 1e-12;
    int max_sweeps = 10'000;
};

/// Closed convex set with non-empty interior. Immutable after construction.
///
/// Boxes may carry infinite bounds, so a half-line or the whole space are
/// boxes. Every domain stores a strictly interior point; polytopes must be
/// given one explicitly.
class ConvexDomain {
public:
    static ConvexDomain half_space(Vector normal, double offset,
                                   std::optional<Vector> interior = std::nullopt);
    static ConvexDomain box(Vector lower, Vector upper,
                            std::optional<Vector> interior = std::nullopt);
    static ConvexDomain ball(Vector center, double radius,
                             std::optional<Vector> interior = std::nullopt);
    static ConvexDomain polytope(std::vector<HalfSpace> faces, Vector interior,
                                 DykstraOptions dykstra = {});
    static ConvexDomain whole_space(int dim);

    DomainKind kind() const noexcept { return kind_; }
    int dim() const noexcept { return dim_; }
    const Vector& interior_point() const noexcept { return interior_; }

    bool contains(const Eigen::Ref<const Vector>& x, double tol = 1e-10) const;
    /// True when no constraint is finite (R^m as an unbounded box).
    bool is_whole_space() const noexcept;

    /// Euclidean distance from x (assumed inside) to the boundary; +inf when
    /// the domain has no boundary.
    double boundary_distance(const Eigen::Ref<const Vector>& x) const;

    /// Nearest point. Polytopes use Dykstra's alternating projections followed
    /// by an active-set polish; throws NumericalError with the final residual
    /// if Dykstra exhausts its sweep budget.
    Vector project(const Eigen::Ref<const Vector>& x) const;
    void project_inplace(Eigen::Ref<Vector> x) const;

    /// Membership of y in the normal cone at x, decided per kind with
    /// tolerance 1e-10. Throws DomainError if x is not in the domain.
    bool normal_cone_contains(const Eigen::Ref<const Vector>& x,
                              const Eigen::Ref<const Vector>& y) const;

    /// A generalized Jacobian of the projection evaluated at the
    /// pre-projection point y: identity when y is inside, the projector onto
    /// the tangent space of the active faces otherwise.
    Matrix projection_jacobian(const Eigen::Ref<const Vector>& y) const;

    /// Exact pairs (x, y) with y in the normal cone at x, built from the
    /// geometry: the interior point with y = 0 and points on each face with
    /// outward normals.
    std::vector<std::pair<Vector, Vector>> reference_graph_points() const;

    const std::vector<HalfSpace>& faces() const noexcept { return faces_; }
    const Vector& lower() const noexcept { return lower_; }
    const Vector& upper() const noexcept { return upper_; }
    const Vector& center() const noexcept { return center_; }
    double radius() const noexcept { return radius_; }
    const DykstraOptions& dykstra_options() const noexcept { return dykstra_; }

private:
    ConvexDomain() = default;

    void validate_interior();
    Vector project_polytope(const Eigen::Ref<const Vector>& x) const;
    std::vector<int> active_faces(const Eigen::Ref<const Vector>& p, double tol) const;

    DomainKind kind_ = DomainKind::Box;
    int dim_ = 0;
    Vector interior_;
    std::vector<HalfSpace> faces_;  // HalfSpace (one face) and Polytope
    Vector lower_, upper_;          // Box
    Vector center_;                 // Ball
    double radius_ = 0.0;
    DykstraOptions dykstra_;
};

struct DykstraResult {
    Vector point;
    int sweeps = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Dykstra's cyclic projection onto an intersection of half-spaces. Exposed
/// for diagnostics; ConvexDomain::project wraps it.
DykstraResult dykstra_project(const std::vector<HalfSpace>& faces,
                              const Eigen::Ref<const Vector>& x,
                              const DykstraOptions& options);

/// Non-negative least squares min ||G c - y|| s.t. c >= 0 (Lawson-Hanson).
Vector nonnegative_least_squares(const Matrix& G, const Eigen::Ref<const Vector>& y);

}  // namespace msde
