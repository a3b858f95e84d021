#pragma once

#include "msde/common.hpp"
#include "msde/functional.hpp"
#include "msde/models.hpp"
#include "msde/monotone_operator.hpp"
#include "msde/simulation.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msde {

enum class EventKind { EndpointBeyondLevel, EndpointInBall, TubeAroundPath, RunningMaxAboveLevel };

/// Events measurable from the discrete path. `closed` selects >= / <= versus
/// the strict inequality.
struct EventSpec {
    EventKind kind = EventKind::EndpointBeyondLevel;
    bool closed = true;
    int component = 0;
    double level = 0.0;
    Vector center;
    double radius = 0.0;
    Matrix reference;  // tube centre path, m x (N+1)

    static EventSpec endpoint_beyond_level(int component, double level, bool closed = true);
    static EventSpec endpoint_in_ball(Vector center, double radius, bool closed = true);
    static EventSpec tube(Matrix reference, double radius, bool closed = true);
    static EventSpec running_max_above(int component, double level, bool closed = true);

    bool occurs(const SolutionPath& path) const;
    std::string id() const;
};

struct MonteCarloOptions {
    TimeGrid grid;
    long n_paths = 1000;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

struct MCEstimate {
    double epsilon = 0.0;
    std::string event_id;
    long n_paths = 0;
    double p_hat = 0.0;
    double std_error = 0.0;
    double neg_eps_log_p = 0.0;
    std::optional<Control> tilt;
    /// (sum w 1_A)^2 / sum (w 1_A)^2: effective number of event hits.
    double ess = 0.0;
    bool degenerate = false;
};

/// Event probabilities on an eps-grid with common random numbers. With a tilt
/// the controlled equation is simulated and each path carries the discrete
/// likelihood ratio exp(sum_k -hdot_k . dW_k / sqrt(eps) - |hdot_k|^2 dt / (2 eps)).
std::vector<MCEstimate> estimate_event(const Model& model, const MonotoneOperator& op,
                                       const Eigen::Ref<const Vector>& x0, std::span<const double> eps_list,
                                       const EventSpec& event, const MonteCarloOptions& mc,
                                       const Control* tilt = nullptr);

enum class FitModel {
    Affine,     // a + b eps
    AffineLog,  // a + b eps + c eps log(eps)
};

struct ExtrapolationFit {
    FitModel model = FitModel::Affine;
    double intercept = 0.0;
    double slope = 0.0;
    double log_coefficient = 0.0;
    std::vector<double> eps;
    std::vector<double> residuals;
    std::vector<double> excluded_eps;
};

/// Least-squares fit of values against eps; the intercept is the eps -> 0
/// estimate. Needs at least three distinct eps.
ExtrapolationFit fit_extrapolation(std::span<const double> eps, std::span<const double> values,
                                   FitModel model = FitModel::Affine);

/// Fits neg_eps_log_p over the non-degenerate estimates. Throws
/// std::invalid_argument naming the excluded eps when fewer than three remain.
ExtrapolationFit ldp_slope(std::span<const MCEstimate> estimates, FitModel model = FitModel::Affine);

/// eps log mean_i exp(-g(X_i)/eps), evaluated with the max exponent factored out.
double laplace_estimate(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                        double eps, const PathFunctional& g, const MonteCarloOptions& mc);

struct LD1Options {
    double relative_threshold = 0.05;
    double absolute_threshold = 0.01;
};

struct LD1Report {
    std::vector<double> eps;               // descending
    std::vector<double> mean_sup_sq;       // E sup_t |X^{eps,h} - X^h|^2
    double skeleton_sup_sq = 0.0;          // sup_t |X^h|^2
    double threshold = 0.0;
    bool decreasing = false;
    bool below_threshold = false;
    bool passed() const noexcept { return decreasing && below_threshold; }
};

LD1Report test_ld1(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                   const Control& h, std::span<const double> eps_list, const MonteCarloOptions& mc,
                   const LD1Options& opts = {});

/// E sup_t |X(t, x) - X(t, y)|^2 / |x - y|^2 under common noise.
double initial_condition_lipschitz(const Model& model, const MonotoneOperator& op,
                                   const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                                   double eps, const MonteCarloOptions& mc);

struct MomentVariation {
    double sup_sq = 0.0;          // E sup_t |X|^2
    double total_variation = 0.0;  // E |K|_T
    double combined() const noexcept { return sup_sq + total_variation; }
};

MomentVariation moment_variation(const Model& model, const MonotoneOperator& op, const Eigen::Ref<const Vector>& x0,
                                 double eps, const MonteCarloOptions& mc);

/// E sup_t |X| on the given grid and on a grid refined by `factor`, driven by
/// the same Brownian path (coarse increments are sums of fine ones).
std::pair<double, double> sup_mean_refinement(const Model& model, const MonotoneOperator& op,
                                              const Eigen::Ref<const Vector>& x0, double eps,
                                              const MonteCarloOptions& mc, int factor = 2);

}  // namespace msde
