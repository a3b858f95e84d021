#pragma once

#include "msde/common.hpp"

#include <string>

namespace msde {

enum class FunctionalKind { Zero, Constant, EndpointDistanceCap, RunningMaxCap };

/// Bounded path functionals g shared by the Laplace Monte Carlo estimator and
/// the variational side. Paths are m x (N+1) state matrices.
///
///   zero                   g = 0
///   constant               g = c
///   endpoint_distance_cap  g = min(cap, |X_N - y|^2)
///   running_max_cap        g = min(cap, (level - max_k X^i_k)_+^2)
struct PathFunctional {
    FunctionalKind kind = FunctionalKind::Zero;
    double constant = 0.0;
    Vector target;
    double cap = 1.0;
    int component = 0;
    double level = 0.0;

    static PathFunctional zero();
    static PathFunctional constant_value(double c);
    static PathFunctional endpoint_distance_cap(Vector target, double cap = 1.0);
    static PathFunctional running_max_cap(int component, double level, double cap = 1.0);

    double value(const Matrix& X) const;
    /// dg/dX_k for every column; at the cap boundary the uncapped branch is
    /// used.
    void gradient(const Matrix& X, Matrix& grad) const;
    std::string id() const;
};

}  // namespace msde
