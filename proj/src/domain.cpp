#include "msde/domain.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace msde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kConeTol = 1e-10;

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

const char* to_string(DomainKind kind) {
    switch (kind) {
        case DomainKind::HalfSpace: return "half_space";
        case DomainKind::Box: return "box";
        case DomainKind::Ball: return "ball";
        case DomainKind::Polytope: return "polytope";
    }
    return "unknown";
}

ConvexDomain ConvexDomain::half_space(Vector normal, double offset, std::optional<Vector> interior) {
    require(normal.size() > 0, "half_space: empty normal");
    require(normal.allFinite() && normal.norm() > 0.0, "half_space: normal must be finite and nonzero");
    require(std::isfinite(offset), "half_space: offset must be finite");
    ConvexDomain d;
    d.kind_ = DomainKind::HalfSpace;
    d.dim_ = static_cast<int>(normal.size());
    const double n2 = normal.squaredNorm();
    if (interior) {
        d.interior_ = std::move(*interior);
    } else {
        // one unit inside the boundary along -normal
        d.interior_ = normal * (offset / n2) - normal / std::sqrt(n2);
    }
    d.faces_.push_back({std::move(normal), offset});
    d.validate_interior();
    return d;
}

ConvexDomain ConvexDomain::box(Vector lower, Vector upper, std::optional<Vector> interior) {
    require(lower.size() > 0 && lower.size() == upper.size(), "box: bound dimensions differ");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
        require(!std::isnan(lower[i]) && !std::isnan(upper[i]), "box: NaN bound");
        require(lower[i] < upper[i], "box: lower bound must be strictly below upper bound on axis " +
                                         std::to_string(i));
        require(lower[i] < kInf && upper[i] > -kInf, "box: empty axis " + std::to_string(i));
    }
    ConvexDomain d;
    d.kind_ = DomainKind::Box;
    d.dim_ = static_cast<int>(lower.size());
    if (interior) {
        d.interior_ = std::move(*interior);
    } else {
        d.interior_.resize(d.dim_);
        for (int i = 0; i < d.dim_; ++i) {
            const bool lo = std::isfinite(lower[i]);
            const bool hi = std::isfinite(upper[i]);
            if (lo && hi) d.interior_[i] = 0.5 * (lower[i] + upper[i]);
            else if (lo) d.interior_[i] = lower[i] + 1.0;
            else if (hi) d.interior_[i] = upper[i] - 1.0;
            else d.interior_[i] = 0.0;
        }
    }
    d.lower_ = std::move(lower);
    d.upper_ = std::move(upper);
    d.validate_interior();
    return d;
}

ConvexDomain ConvexDomain::ball(Vector center, double radius, std::optional<Vector> interior) {
    require(center.size() > 0 && center.allFinite(), "ball: center must be finite");
    require(std::isfinite(radius) && radius > 0.0, "ball: radius must be positive");
    ConvexDomain d;
    d.kind_ = DomainKind::Ball;
    d.dim_ = static_cast<int>(center.size());
    d.interior_ = interior ? std::move(*interior) : center;
    d.center_ = std::move(center);
    d.radius_ = radius;
    d.validate_interior();
    return d;
}

ConvexDomain ConvexDomain::polytope(std::vector<HalfSpace> faces, Vector interior, DykstraOptions dykstra) {
    require(!faces.empty(), "polytope: no faces");
    const auto m = interior.size();
    require(m > 0, "polytope: empty interior point");
    for (const auto& f : faces) {
        require(f.normal.size() == m, "polytope: face dimension mismatch");
        require(f.normal.allFinite() && f.normal.norm() > 0.0, "polytope: face normal must be nonzero");
        require(std::isfinite(f.offset), "polytope: face offset must be finite");
    }
    require(dykstra.tolerance > 0.0 && dykstra.max_sweeps > 0, "polytope: invalid Dykstra options");
    ConvexDomain d;
    d.kind_ = DomainKind::Polytope;
    d.dim_ = static_cast<int>(m);
    d.faces_ = std::move(faces);
    d.interior_ = std::move(interior);
    d.dykstra_ = dykstra;
    d.validate_interior();
    return d;
}

ConvexDomain ConvexDomain::whole_space(int dim) {
    require(dim > 0, "whole_space: dimension must be positive");
    return box(Vector::Constant(dim, -kInf), Vector::Constant(dim, kInf), Vector::Zero(dim));
}

void ConvexDomain::validate_interior() {
    require(interior_.size() == dim_, "interior point dimension mismatch");
    require(interior_.allFinite(), "interior point must be finite");
    require(boundary_distance(interior_) > 0.0, "stored interior point is not strictly interior");
}

bool ConvexDomain::is_whole_space() const noexcept {
    if (kind_ != DomainKind::Box) return false;
    for (int i = 0; i < dim_; ++i) {
        if (std::isfinite(lower_[i]) || std::isfinite(upper_[i])) return false;
    }
    return true;
}

bool ConvexDomain::contains(const Eigen::Ref<const Vector>& x, double tol) const {
    if (x.size() != dim_ || !x.allFinite()) return false;
    switch (kind_) {
        case DomainKind::HalfSpace:
        case DomainKind::Polytope:
            for (const auto& f : faces_) {
                if (f.normal.dot(x) - f.offset > tol * f.normal.norm()) return false;
            }
            return true;
        case DomainKind::Box:
            for (int i = 0; i < dim_; ++i) {
                if (x[i] < lower_[i] - tol || x[i] > upper_[i] + tol) return false;
            }
            return true;
        case DomainKind::Ball:
            return (x - center_).norm() <= radius_ + tol;
    }
    return false;
}

double ConvexDomain::boundary_distance(const Eigen::Ref<const Vector>& x) const {
    double dist = kInf;
    switch (kind_) {
        case DomainKind::HalfSpace:
        case DomainKind::Polytope:
            for (const auto& f : faces_) {
                dist = std::min(dist, (f.offset - f.normal.dot(x)) / f.normal.norm());
            }
            break;
        case DomainKind::Box:
            for (int i = 0; i < dim_; ++i) {
                if (std::isfinite(lower_[i])) dist = std::min(dist, x[i] - lower_[i]);
                if (std::isfinite(upper_[i])) dist = std::min(dist, upper_[i] - x[i]);
            }
            break;
        case DomainKind::Ball:
            dist = radius_ - (x - center_).norm();
            break;
    }
    return dist;
}

Vector ConvexDomain::project(const Eigen::Ref<const Vector>& x) const {
    Vector p = x;
    project_inplace(p);
    return p;
}

void ConvexDomain::project_inplace(Eigen::Ref<Vector> x) const {
    switch (kind_) {
        case DomainKind::HalfSpace: {
            const auto& f = faces_.front();
            const double v = f.normal.dot(x) - f.offset;
            if (v > 0.0) x -= (v / f.normal.squaredNorm()) * f.normal;
            return;
        }
        case DomainKind::Box:
            for (int i = 0; i < dim_; ++i) x[i] = std::min(std::max(x[i], lower_[i]), upper_[i]);
            return;
        case DomainKind::Ball: {
            const double r = (x - center_).norm();
            if (r > radius_) x = center_ + (x - center_) * (radius_ / r);
            return;
        }
        case DomainKind::Polytope:
            x = project_polytope(x);
            return;
    }
}

std::vector<int> ConvexDomain::active_faces(const Eigen::Ref<const Vector>& p, double tol) const {
    std::vector<int> active;
    for (std::size_t i = 0; i < faces_.size(); ++i) {
        const auto& f = faces_[i];
        if (f.normal.dot(p) - f.offset >= -tol * f.normal.norm() * (1.0 + p.norm())) {
            active.push_back(static_cast<int>(i));
        }
    }
    return active;
}

DykstraResult dykstra_project(const std::vector<HalfSpace>& faces, const Eigen::Ref<const Vector>& x,
                              const DykstraOptions& options) {
    const auto m = x.size();
    const auto nf = faces.size();
    DykstraResult out;
    out.point = x;
    Matrix incr = Matrix::Zero(m, static_cast<Eigen::Index>(nf));
    Vector y(m);
    const double scale = 1.0 + x.norm();
    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        double change2 = 0.0;
        for (std::size_t i = 0; i < nf; ++i) {
            const auto& f = faces[i];
            const auto col = static_cast<Eigen::Index>(i);
            y = out.point + incr.col(col);
            const double v = f.normal.dot(y) - f.offset;
            if (v > 0.0) {
                out.point = y - (v / f.normal.squaredNorm()) * f.normal;
            } else {
                out.point = y;
            }
            const Vector next = y - out.point;
            change2 += (next - incr.col(col)).squaredNorm();
            incr.col(col) = next;
        }
        out.sweeps = sweep;
        out.residual = std::sqrt(change2);
        if (out.residual <= options.tolerance * scale) {
            out.converged = true;
            return out;
        }
    }
    return out;
}

Vector ConvexDomain::project_polytope(const Eigen::Ref<const Vector>& x) const {
    bool inside = true;
    for (const auto& f : faces_) {
        if (f.normal.dot(x) > f.offset) {
            inside = false;
            break;
        }
    }
    if (inside) return x;

    DykstraResult dr = dykstra_project(faces_, x, dykstra_);
    if (!dr.converged) {
        throw NumericalError("Dykstra projection did not converge after " + std::to_string(dr.sweeps) +
                                 " sweeps (residual " + std::to_string(dr.residual) + ")",
                             dr.residual);
    }

    // Polish: exact projection onto the affine hull of the faces Dykstra
    // identified as active, accepted only if it is feasible with
    // non-negative multipliers (the KKT conditions of the full problem).
    const std::vector<int> active = active_faces(dr.point, 1e-8);
    if (active.empty()) return dr.point;
    Matrix a(static_cast<Eigen::Index>(active.size()), dim_);
    Vector b(static_cast<Eigen::Index>(active.size()));
    for (std::size_t r = 0; r < active.size(); ++r) {
        a.row(static_cast<Eigen::Index>(r)) = faces_[active[r]].normal.transpose();
        b[static_cast<Eigen::Index>(r)] = faces_[active[r]].offset;
    }
    const Matrix gram = a * a.transpose();
    const Vector mult = gram.completeOrthogonalDecomposition().solve(a * x - b);
    const Vector polished = x - a.transpose() * mult;
    const double scale = 1.0 + x.norm();
    if (!polished.allFinite() || (mult.array() < -1e-12 * scale).any()) return dr.point;
    for (const auto& f : faces_) {
        if (f.normal.dot(polished) - f.offset > 1e-13 * scale * f.normal.norm()) return dr.point;
    }
    if ((polished - dr.point).norm() > 1e-6 * scale) return dr.point;
    return polished;
}

bool ConvexDomain::normal_cone_contains(const Eigen::Ref<const Vector>& x,
                                        const Eigen::Ref<const Vector>& y) const {
    if (y.size() != dim_ || !y.allFinite()) throw std::invalid_argument("normal cone: bad direction");
    if (!contains(x, kConeTol)) throw DomainError("point not in domain");

    switch (kind_) {
        case DomainKind::HalfSpace: {
            const auto& f = faces_.front();
            const double t = y.dot(f.normal) / f.normal.squaredNorm();
            const bool on_boundary = std::abs(f.normal.dot(x) - f.offset) <= kConeTol * f.normal.norm();
            if (!on_boundary) return y.norm() <= kConeTol;
            return t >= -kConeTol && (y - t * f.normal).norm() <= kConeTol;
        }
        case DomainKind::Box: {
            // <y, x> - support(y) >= -tol, with unbounded directions requiring y_i = 0
            double gap = 0.0;
            for (int i = 0; i < dim_; ++i) {
                const double yi = y[i];
                if (yi > 0.0) {
                    if (!std::isfinite(upper_[i])) {
                        if (yi > kConeTol) return false;
                        continue;
                    }
                    gap += yi * (x[i] - upper_[i]);
                } else if (yi < 0.0) {
                    if (!std::isfinite(lower_[i])) {
                        if (yi < -kConeTol) return false;
                        continue;
                    }
                    gap += yi * (x[i] - lower_[i]);
                }
            }
            return gap >= -kConeTol;
        }
        case DomainKind::Ball:
            // min over z in the ball of <y, x - z> = <y, x - c> - r|y|
            return y.dot(x - center_) - radius_ * y.norm() >= -kConeTol;
        case DomainKind::Polytope: {
            const std::vector<int> active = active_faces(x, kConeTol);
            if (active.empty()) return y.norm() <= kConeTol;
            Matrix gens(dim_, static_cast<Eigen::Index>(active.size()));
            for (std::size_t c = 0; c < active.size(); ++c) {
                gens.col(static_cast<Eigen::Index>(c)) = faces_[active[c]].normal;
            }
            const Vector coef = nonnegative_least_squares(gens, y);
            return (gens * coef - y).norm() <= kConeTol * (1.0 + y.norm());
        }
    }
    return false;
}

Matrix ConvexDomain::projection_jacobian(const Eigen::Ref<const Vector>& y) const {
    const Matrix eye = Matrix::Identity(dim_, dim_);
    switch (kind_) {
        case DomainKind::HalfSpace: {
            const auto& f = faces_.front();
            if (f.normal.dot(y) <= f.offset) return eye;
            return eye - f.normal * f.normal.transpose() / f.normal.squaredNorm();
        }
        case DomainKind::Box: {
            Matrix j = eye;
            for (int i = 0; i < dim_; ++i) {
                if (y[i] < lower_[i] || y[i] > upper_[i]) j(i, i) = 0.0;
            }
            return j;
        }
        case DomainKind::Ball: {
            const Vector d = y - center_;
            const double r = d.norm();
            if (r <= radius_) return eye;
            const Vector n = d / r;
            return (radius_ / r) * (eye - n * n.transpose());
        }
        case DomainKind::Polytope: {
            if (contains(y, 0.0)) return eye;
            const Vector p = project_polytope(y);
            const std::vector<int> active = active_faces(p, 1e-9);
            if (active.empty()) return eye;
            Matrix a(static_cast<Eigen::Index>(active.size()), dim_);
            for (std::size_t r = 0; r < active.size(); ++r) {
                a.row(static_cast<Eigen::Index>(r)) = faces_[active[r]].normal.transpose();
            }
            const Matrix pinv = a.completeOrthogonalDecomposition().pseudoInverse();
            return eye - pinv * a;
        }
    }
    return eye;
}

std::vector<std::pair<Vector, Vector>> ConvexDomain::reference_graph_points() const {
    std::vector<std::pair<Vector, Vector>> pts;
    pts.emplace_back(interior_, Vector::Zero(dim_));
    switch (kind_) {
        case DomainKind::HalfSpace:
        case DomainKind::Polytope:
            for (const auto& f : faces_) {
                const Vector foot =
                    interior_ + ((f.offset - f.normal.dot(interior_)) / f.normal.squaredNorm()) * f.normal;
                if (!contains(foot, 1e-12)) continue;
                pts.emplace_back(foot, f.normal);
                pts.emplace_back(foot, 2.5 * f.normal);
            }
            break;
        case DomainKind::Box:
            for (int i = 0; i < dim_; ++i) {
                if (std::isfinite(lower_[i])) {
                    Vector p = interior_;
                    p[i] = lower_[i];
                    pts.emplace_back(p, -Vector::Unit(dim_, i));
                    pts.emplace_back(p, -3.0 * Vector::Unit(dim_, i));
                }
                if (std::isfinite(upper_[i])) {
                    Vector p = interior_;
                    p[i] = upper_[i];
                    pts.emplace_back(p, Vector::Unit(dim_, i));
                    pts.emplace_back(p, 3.0 * Vector::Unit(dim_, i));
                }
            }
            break;
        case DomainKind::Ball:
            for (int i = 0; i < dim_; ++i) {
                for (double s : {-1.0, 1.0}) {
                    const Vector u = s * Vector::Unit(dim_, i);
                    pts.emplace_back(center_ + radius_ * u, u);
                    pts.emplace_back(center_ + radius_ * u, 2.0 * u);
                }
            }
            break;
    }
    return pts;
}

Vector nonnegative_least_squares(const Matrix& G, const Eigen::Ref<const Vector>& y) {
    const Eigen::Index k = G.cols();
    Vector coef = Vector::Zero(k);
    std::vector<bool> passive(static_cast<std::size_t>(k), false);
    const double tol = 1e-14 * (1.0 + G.norm() * (1.0 + y.norm()));

    auto solve_passive = [&](Vector& z) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
        }
        z.setZero(k);
        if (idx.empty()) return;
        Matrix sub(G.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t c = 0; c < idx.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = G.col(idx[c]);
        const Vector zs = sub.completeOrthogonalDecomposition().solve(y);
        for (std::size_t c = 0; c < idx.size(); ++c) z[idx[c]] = zs[static_cast<Eigen::Index>(c)];
    };

    Vector z;
    for (int outer = 0; outer < 3 * static_cast<int>(k) + 30; ++outer) {
        const Vector w = G.transpose() * (y - G * coef);
        Eigen::Index best = -1;
        double best_w = tol;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
                best_w = w[j];
                best = j;
            }
        }
        if (best < 0) break;
        passive[static_cast<std::size_t>(best)] = true;
        for (int inner = 0; inner < 3 * static_cast<int>(k) + 30; ++inner) {
            solve_passive(z);
            bool all_positive = true;
            double alpha = 1.0;
            for (Eigen::Index j = 0; j < k; ++j) {
                if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0) {
                    all_positive = false;
                    const double denom = coef[j] - z[j];
                    if (denom > 0.0) alpha = std::min(alpha, coef[j] / denom);
                }
            }
            if (all_positive) {
                coef = z;
                break;
            }
            coef += alpha * (z - coef);
            for (Eigen::Index j = 0; j < k; ++j) {
                if (passive[static_cast<std::size_t>(j)] && coef[j] <= tol) {
                    passive[static_cast<std::size_t>(j)] = false;
                    coef[j] = 0.0;
                }
            }
        }
    }
    return coef;
}

}  // namespace msde
