#include "msde/monotone_operator.hpp"

#include "msde/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace msde {

namespace {

constexpr double kBisectionTol = 1e-12;
constexpr double kSamplingLambda = 1e-4;

}  // namespace

// ---------------------------------------------------------------------------
// FilledGraph

FilledGraph::FilledGraph(std::vector<GraphBreakpoint> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("filled graph: no breakpoints");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const auto& p = points_[i];
        if (!std::isfinite(p.at) || !std::isfinite(p.lo) || !std::isfinite(p.hi)) {
            throw std::invalid_argument("filled graph: non-finite breakpoint");
        }
        if (p.lo > p.hi) throw std::invalid_argument("filled graph: value interval must satisfy lo <= hi");
        if (i > 0 && !(points_[i - 1].at < p.at)) {
            throw std::invalid_argument("filled graph: breakpoints must be strictly increasing");
        }
    }
}

FilledGraph FilledGraph::sign() {
    return FilledGraph({GraphBreakpoint{0.0, -1.0, 1.0}});
}

std::pair<double, double> FilledGraph::values(double z) const {
    const auto& p = points_;
    if (z < p.front().at) return {p.front().lo, p.front().lo};
    if (z > p.back().at) return {p.back().hi, p.back().hi};
    auto it = std::lower_bound(p.begin(), p.end(), z,
                               [](const GraphBreakpoint& b, double v) { return b.at < v; });
    if (it->at == z) return {it->lo, it->hi};
    const auto& right = *it;
    const auto& left = *(it - 1);
    const double v = left.hi + (right.lo - left.hi) * (z - left.at) / (right.at - left.at);
    return {v, v};
}

double FilledGraph::slope(double z) const {
    const auto& p = points_;
    if (z <= p.front().at || z >= p.back().at) return 0.0;
    auto it = std::lower_bound(p.begin(), p.end(), z,
                               [](const GraphBreakpoint& b, double v) { return b.at < v; });
    if (it->at == z) return 0.0;
    const auto& left = *(it - 1);
    return (it->lo - left.hi) / (it->at - left.at);
}

double FilledGraph::sup_abs(double a, double b) const {
    if (a > b) std::swap(a, b);
    auto [la, ha] = values(a);
    auto [lb, hb] = values(b);
    double s = std::max({std::abs(la), std::abs(ha), std::abs(lb), std::abs(hb)});
    for (const auto& p : points_) {
        if (p.at >= a && p.at <= b) s = std::max({s, std::abs(p.lo), std::abs(p.hi)});
    }
    return s;
}

bool FilledGraph::is_monotone() const {
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (points_[i].lo > points_[i].hi) return false;
        if (i + 1 < points_.size() && points_[i].hi > points_[i + 1].lo) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// AffineMonotoneMap

double AffineMonotoneMap::lipschitz() const {
    if (matrix.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(matrix);
    return svd.singularValues()(0);
}

bool AffineMonotoneMap::is_monotone() const {
    const Matrix sym = 0.5 * (matrix + matrix.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    return es.eigenvalues().minCoeff() >= -1e-12;
}

// ---------------------------------------------------------------------------
// MonotoneOperator

const char* to_string(OperatorVariant v) {
    switch (v) {
        case OperatorVariant::IndicatorSubdifferential: return "indicator";
        case OperatorVariant::FilledGraph: return "filled_graph";
        case OperatorVariant::SumWithLipschitz: return "sum";
    }
    return "unknown";
}

MonotoneOperator::MonotoneOperator(Base base, std::optional<AffineMonotoneMap> lip)
    : base_(std::move(base)), lipschitz_(std::move(lip)) {
    dim_ = std::holds_alternative<ConvexDomain>(base_) ? std::get<ConvexDomain>(base_).dim() : 1;
    if (lipschitz_) {
        const auto& L = *lipschitz_;
        if (L.matrix.rows() != dim_ || L.matrix.cols() != dim_ || L.offset.size() != dim_) {
            throw std::invalid_argument("sum operator: affine map dimension mismatch");
        }
        if (!L.matrix.allFinite() || !L.offset.allFinite()) {
            throw std::invalid_argument("sum operator: affine map must be finite");
        }
        if (!L.is_monotone()) {
            throw std::invalid_argument("sum operator: affine map is not monotone (symmetric part not PSD)");
        }
        lip_constant_ = L.lipschitz();
    }
}

MonotoneOperator MonotoneOperator::indicator(ConvexDomain domain) {
    return MonotoneOperator(std::move(domain), std::nullopt);
}

MonotoneOperator MonotoneOperator::graph(FilledGraph graph) {
    return MonotoneOperator(std::move(graph), std::nullopt);
}

MonotoneOperator MonotoneOperator::sum(Base base, AffineMonotoneMap map) {
    return MonotoneOperator(std::move(base), std::move(map));
}

OperatorVariant MonotoneOperator::variant() const noexcept {
    if (lipschitz_) return OperatorVariant::SumWithLipschitz;
    return std::holds_alternative<ConvexDomain>(base_) ? OperatorVariant::IndicatorSubdifferential
                                                        : OperatorVariant::FilledGraph;
}

bool MonotoneOperator::in_domain_closure(const Eigen::Ref<const Vector>& x, double tol) const {
    if (x.size() != dim_ || !x.allFinite()) return false;
    if (const auto* d = domain()) return d->contains(x, tol);
    return true;
}

namespace {

// Solves x in z + lambda * g(z) by bisection on z.
double graph_resolvent(const FilledGraph& g, double lambda, double x) {
    for (const auto& p : g.points()) {
        if (p.at + lambda * p.lo <= x && x <= p.at + lambda * p.hi) return p.at;
    }
    auto lower = [&](double z) { return z + lambda * g.values(z).first; };
    auto upper = [&](double z) { return z + lambda * g.values(z).second; };

    double radius = 1.0 + lambda * g.sup_abs(g.points().front().at, g.points().back().at) +
                    (g.points().back().at - g.points().front().at);
    double lo = x - radius;
    double hi = x + radius;
    int expansions = 0;
    while (!(upper(lo) < x && lower(hi) > x)) {
        if (++expansions > 60 || !std::isfinite(radius)) {
            throw NumericalError("resolvent: bisection bracket failure (graph not maximal?)");
        }
        radius *= 2.0;
        lo = x - radius;
        hi = x + radius;
    }
    const double tol = kBisectionTol * (1.0 + std::abs(x));
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (upper(mid) < x) {
            lo = mid;
        } else if (lower(mid) > x) {
            hi = mid;
        } else {
            return mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

void MonotoneOperator::base_resolvent_inplace(double lambda, Eigen::Ref<Vector> x) const {
    if (const auto* d = std::get_if<ConvexDomain>(&base_)) {
        d->project_inplace(x);
    } else {
        x[0] = graph_resolvent(std::get<FilledGraph>(base_), lambda, x[0]);
    }
}

void MonotoneOperator::resolvent_inplace(double lambda, Eigen::Ref<Vector> x) const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("resolvent: lambda must be positive");
    if (x.size() != dim_) throw std::invalid_argument("resolvent: dimension mismatch");
    if (!lipschitz_) {
        base_resolvent_inplace(lambda, x);
        return;
    }

    // x in z + lambda (A0 + L)(z): Picard iteration z <- J^{A0}_lambda(x - lambda L z)
    // when it contracts, forward-backward splitting on the strongly monotone
    // residual otherwise.
    const auto& L = *lipschitz_;
    const double lip = lip_constant_;
    const Vector target = x;
    Vector z = target;
    base_resolvent_inplace(lambda, z);
    Vector next(dim_);
    const bool picard = lambda * lip <= 0.5;
    const double strong = 1.0 / lambda;
    const double lip_f = strong + lip;
    const double tau = strong / (lip_f * lip_f);
    constexpr int kMaxIter = 200'000;
    double change = 0.0;
    for (int it = 0; it < kMaxIter; ++it) {
        if (picard) {
            next = target - lambda * L(z);
            base_resolvent_inplace(lambda, next);
        } else {
            next = z - tau * ((z - target) * strong + L(z));
            base_resolvent_inplace(tau, next);
        }
        change = (next - z).norm();
        z.swap(next);
        if (change <= 1e-13 * (1.0 + z.norm())) {
            x = z;
            return;
        }
    }
    throw NumericalError("resolvent: splitting iteration for sum operator did not converge", change);
}

Vector MonotoneOperator::resolvent(double lambda, const Eigen::Ref<const Vector>& x) const {
    Vector z = x;
    resolvent_inplace(lambda, z);
    return z;
}

Vector MonotoneOperator::yosida(double lambda, const Eigen::Ref<const Vector>& x) const {
    return (x - resolvent(lambda, x)) / lambda;
}

std::optional<Matrix> MonotoneOperator::resolvent_jacobian(double lambda, const Eigen::Ref<const Vector>& x) const {
    if (lipschitz_) return std::nullopt;
    if (const auto* d = domain()) return d->projection_jacobian(x);
    const auto& g = std::get<FilledGraph>(base_);
    const double z = graph_resolvent(g, lambda, x[0]);
    Matrix j(1, 1);
    bool at_break = false;
    for (const auto& p : g.points()) at_break = at_break || p.at == z;
    j(0, 0) = at_break ? 0.0 : 1.0 / (1.0 + lambda * g.slope(z));
    return j;
}

std::vector<std::pair<Vector, Vector>> MonotoneOperator::reference_graph_points() const {
    std::vector<std::pair<Vector, Vector>> pts;
    if (const auto* d = domain()) {
        pts = d->reference_graph_points();
    } else {
        const auto& g = std::get<FilledGraph>(base_);
        const auto& bp = g.points();
        for (std::size_t i = 0; i < bp.size(); ++i) {
            pts.emplace_back(Vector::Constant(1, bp[i].at), Vector::Constant(1, bp[i].lo));
            pts.emplace_back(Vector::Constant(1, bp[i].at), Vector::Constant(1, bp[i].hi));
            if (i + 1 < bp.size()) {
                const double mid = 0.5 * (bp[i].at + bp[i + 1].at);
                pts.emplace_back(Vector::Constant(1, mid), Vector::Constant(1, g.values(mid).first));
            }
        }
        pts.emplace_back(Vector::Constant(1, bp.front().at - 1.0), Vector::Constant(1, bp.front().lo));
        pts.emplace_back(Vector::Constant(1, bp.back().at + 1.0), Vector::Constant(1, bp.back().hi));
    }
    if (lipschitz_) {
        for (auto& [x, y] : pts) y += (*lipschitz_)(x);
    }
    return pts;
}

std::pair<Vector, double> MonotoneOperator::sampling_region() const {
    if (const auto* d = domain()) {
        double extent = 1.0;
        switch (d->kind()) {
            case DomainKind::Ball:
                extent = std::max(extent, d->radius());
                break;
            case DomainKind::Box:
                for (int i = 0; i < d->dim(); ++i) {
                    const double w = d->upper()[i] - d->lower()[i];
                    if (std::isfinite(w)) extent = std::max(extent, 0.5 * w);
                }
                break;
            default: {
                const double dist = d->boundary_distance(d->interior_point());
                if (std::isfinite(dist)) extent = std::max(extent, dist);
            }
        }
        return {d->interior_point(), 2.0 * extent};
    }
    const auto& bp = std::get<FilledGraph>(base_).points();
    const double centre = 0.5 * (bp.front().at + bp.back().at);
    return {Vector::Constant(1, centre), 2.0 + (bp.back().at - bp.front().at)};
}

// ---------------------------------------------------------------------------
// Sampled checks

MonotonicityReport verify_monotone(const MonotoneOperator& op, long sample_count, std::uint64_t seed) {
    if (sample_count < 1) throw std::invalid_argument("verify_monotone: sample_count must be >= 1");
    Engine eng = make_engine(derive_seed(seed, 0, 0x6d6f6e6f));
    const auto [centre, half_width] = op.sampling_region();
    std::uniform_real_distribution<double> unif(-half_width, half_width);
    const int m = op.dim();

    auto sample = [&](Vector& x, Vector& y) {
        Vector z(m);
        for (int i = 0; i < m; ++i) z[i] = centre[i] + unif(eng);
        x = op.resolvent(kSamplingLambda, z);
        y = (z - x) / kSamplingLambda;
    };

    MonotonicityReport rep;
    rep.min_inner = std::numeric_limits<double>::infinity();
    Vector x1, y1, x2, y2;
    for (long s = 0; s < sample_count; ++s) {
        sample(x1, y1);
        sample(x2, y2);
        const double inner = (y1 - y2).dot(x1 - x2);
        ++rep.pairs;
        if (inner < rep.min_inner) {
            rep.min_inner = inner;
            rep.witness_x1 = x1;
            rep.witness_y1 = y1;
            rep.witness_x2 = x2;
            rep.witness_y2 = y2;
        }
    }
    rep.passed = rep.min_inner >= -1e-9;
    return rep;
}

CepaConstants cepa_constants(const ConvexDomain& domain) {
    CepaConstants c;
    c.a = domain.interior_point();
    const double dist = domain.boundary_distance(c.a);
    if (!std::isfinite(dist)) {
        c.gamma = 0.5;
    } else {
        if (dist < 1e-8) throw DomainError("cepa_constants: degenerate domain (interior distance < 1e-8)");
        c.gamma = 0.5 * dist;
    }
    c.mu = 0.0;
    return c;
}

CepaConstants cepa_constants(const MonotoneOperator& op, std::uint64_t seed) {
    CepaConstants c;
    if (const auto* d = op.domain()) {
        c = cepa_constants(*d);
    } else {
        const auto& g = std::get<FilledGraph>(op.base());
        const auto& bp = g.points();
        c.a = Vector::Constant(1, 0.5 * (bp.front().at + bp.back().at));
        c.gamma = 0.5;
        c.mu = g.sup_abs(c.a[0] - c.gamma, c.a[0] + c.gamma);
    }
    if (const auto& lip = op.lipschitz_part()) {
        Engine eng = make_engine(derive_seed(seed, 0, 0x63657061));
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unif;
        const int m = op.dim();
        double sup = 0.0;
        constexpr int kSamples = 4096;
        for (int s = 0; s < kSamples; ++s) {
            Vector u(m);
            for (int i = 0; i < m; ++i) u[i] = normal(eng);
            u.normalize();
            // half the samples on the sphere, half uniform in the ball
            const double r = (s % 2 == 0) ? 1.0 : std::pow(unif(eng), 1.0 / m);
            sup = std::max(sup, (*lip)(c.a + c.gamma * r * u).norm());
        }
        sup = std::max(sup, (*lip)(c.a).norm());
        c.mu += 1.1 * sup;
    }
    return c;
}

}  // namespace msde
