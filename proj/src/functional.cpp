#include "msde/functional.hpp"

#include <algorithm>
#include <cmath>

namespace msde {

PathFunctional PathFunctional::zero() {
    return PathFunctional{};
}

PathFunctional PathFunctional::constant_value(double c) {
    if (!std::isfinite(c)) throw std::invalid_argument("constant functional must be finite");
    PathFunctional g;
    g.kind = FunctionalKind::Constant;
    g.constant = c;
    return g;
}

PathFunctional PathFunctional::endpoint_distance_cap(Vector target, double cap) {
    if (target.size() < 1 || !target.allFinite()) throw std::invalid_argument("endpoint_distance_cap: bad target");
    if (!(cap > 0.0) || !std::isfinite(cap)) throw std::invalid_argument("endpoint_distance_cap: cap must be positive");
    PathFunctional g;
    g.kind = FunctionalKind::EndpointDistanceCap;
    g.target = std::move(target);
    g.cap = cap;
    return g;
}

PathFunctional PathFunctional::running_max_cap(int component, double level, double cap) {
    if (component < 0) throw std::invalid_argument("running_max_cap: component must be >= 0");
    if (!std::isfinite(level)) throw std::invalid_argument("running_max_cap: level must be finite");
    if (!(cap > 0.0) || !std::isfinite(cap)) throw std::invalid_argument("running_max_cap: cap must be positive");
    PathFunctional g;
    g.kind = FunctionalKind::RunningMaxCap;
    g.component = component;
    g.level = level;
    g.cap = cap;
    return g;
}

double PathFunctional::value(const Matrix& X) const {
    switch (kind) {
        case FunctionalKind::Zero:
            return 0.0;
        case FunctionalKind::Constant:
            return constant;
        case FunctionalKind::EndpointDistanceCap:
            return std::min(cap, (X.col(X.cols() - 1) - target).squaredNorm());
        case FunctionalKind::RunningMaxCap: {
            const double shortfall = std::max(0.0, level - X.row(component).maxCoeff());
            return std::min(cap, shortfall * shortfall);
        }
    }
    return 0.0;
}

void PathFunctional::gradient(const Matrix& X, Matrix& grad) const {
    grad.setZero(X.rows(), X.cols());
    switch (kind) {
        case FunctionalKind::Zero:
        case FunctionalKind::Constant:
            return;
        case FunctionalKind::EndpointDistanceCap: {
            const Vector diff = X.col(X.cols() - 1) - target;
            if (diff.squaredNorm() <= cap) grad.col(X.cols() - 1) = 2.0 * diff;
            return;
        }
        case FunctionalKind::RunningMaxCap: {
            Eigen::Index at = 0;
            const double top = X.row(component).maxCoeff(&at);
            const double shortfall = level - top;
            if (shortfall > 0.0 && shortfall * shortfall <= cap) grad(component, at) = -2.0 * shortfall;
            return;
        }
    }
}

std::string PathFunctional::id() const {
    switch (kind) {
        case FunctionalKind::Zero: return "zero";
        case FunctionalKind::Constant: return "constant";
        case FunctionalKind::EndpointDistanceCap: return "endpoint_distance_cap";
        case FunctionalKind::RunningMaxCap: return "running_max_cap";
    }
    return "unknown";
}

}  // namespace msde
