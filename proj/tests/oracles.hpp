#pragma once

// Reference computations that do not share code with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

inline double gaussian_tail(double z) {
    return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

inline double half_normal_cdf(double x) {
    return x <= 0.0 ? 0.0 : std::erf(x / std::numbers::sqrt2);
}

/// Kolmogorov-Smirnov distance of a sample to a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

/// Nearest point of a 2-D convex set given only by membership, found by a
/// dense grid search that repeatedly zooms in around the best grid point.
inline Eigen::Vector2d grid_projection(const std::function<bool(const Eigen::Vector2d&)>& inside,
                                       const Eigen::Vector2d& x, Eigen::Vector2d lo, Eigen::Vector2d hi,
                                       int points = 401, int rounds = 12) {
    Eigen::Vector2d best = lo;
    double best_d = std::numeric_limits<double>::infinity();
    for (int r = 0; r < rounds; ++r) {
        const Eigen::Vector2d step = (hi - lo) / (points - 1);
        for (int i = 0; i < points; ++i) {
            for (int j = 0; j < points; ++j) {
                const Eigen::Vector2d z(lo[0] + i * step[0], lo[1] + j * step[1]);
                if (!inside(z)) continue;
                const double d = (z - x).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = z;
                }
            }
        }
        lo = best - 4.0 * step;
        hi = best + 4.0 * step;
    }
    return best;
}

/// Minimum of 1/2 sum h_k^2 dt subject to reaching y at step N from the
/// recursion x <- (1 - lambda dt) x + h dt. Closed form of the equality
/// constrained least-norm problem.
inline double linear_endpoint_rate(double lambda, double x0, double y, double T, int N) {
    const double dt = T / N;
    const double a = 1.0 - lambda * dt;
    double sum_c2 = 0.0;
    double pw = 1.0;
    for (int k = N - 1; k >= 0; --k) {
        sum_c2 += (dt * pw) * (dt * pw);
        pw *= a;
    }
    const double r = y - pw * x0;
    return 0.5 * r * r * dt / sum_c2;
}

/// Same problem solved numerically as a dense KKT system, as a check on the
/// closed form above.
inline double linear_endpoint_rate_kkt(double lambda, double x0, double y, double T, int N) {
    const double dt = T / N;
    const double a = 1.0 - lambda * dt;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N + 1, N + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N + 1);
    for (int k = 0; k < N; ++k) {
        K(k, k) = dt;
        const double c = dt * std::pow(a, N - 1 - k);
        K(k, N) = c;
        K(N, k) = c;
    }
    rhs[N] = y - std::pow(a, N) * x0;
    const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
    return 0.5 * sol.head(N).squaredNorm() * dt;
}

/// Scan of the endpoint e for min over e of min(cap, (e - y)^2) + rate(e)
/// with rate(e) = (e - x0)^2 / (2 T) for free Brownian motion.
inline double capped_endpoint_laplace_value(double x0, double y, double T, double cap, int points = 200001) {
    double best = std::numeric_limits<double>::infinity();
    const double lo = std::min(x0, y) - 2.0;
    const double hi = std::max(x0, y) + 2.0;
    for (int i = 0; i < points; ++i) {
        const double e = lo + (hi - lo) * i / (points - 1);
        best = std::min(best, std::min(cap, (e - y) * (e - y)) + (e - x0) * (e - x0) / (2.0 * T));
    }
    return best;
}

/// One-sided constant of b(x) = x - x^3 on [-r, r]: the maximum of
/// b'(x) = 1 - 3x^2, found by scanning.
inline double double_well_one_sided(double r, int points = 100001) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
        const double x = -r + 2.0 * r * i / (points - 1);
        best = std::max(best, 1.0 - 3.0 * x * x);
    }
    return best;
}

}  // namespace oracle
