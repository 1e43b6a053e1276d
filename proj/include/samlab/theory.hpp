#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace samlab {

/// Confidence on the true label before (p) and after (p_tilde) the ascent
/// perturbation; both strictly inside (0, 1).
struct ProbePair {
    double p = 0.5;
    double p_tilde = 0.5;
};

/// lambda = (1 - p_tilde) / (1 - p): the weight on the entropy of the
/// unperturbed confidence in the bound below. >= 1 whenever p_tilde <= p.
double lambda_of(double p, double p_tilde);

/// (1 - p_tilde) / (1 - e^{rho/2} p_tilde); defined while e^{rho/2} p_tilde < 1.
/// Non-decreasing in rho and in p_tilde on its domain; equals 1 at rho = 0.
double lambda_lower_bound(double rho, double p_tilde);

struct BoundCheck {
    bool holds = false;
    double slack = 0.0; // LHS - RHS; tolerance -1e-10 absorbs f64 rounding
};

/// -ln p_tilde >= -ln p - lambda H(p) + H(p_tilde).
/// Exact (slack >= 0) whenever p >= p_tilde; fails for some p_tilde > p.
BoundCheck check_entropy_bound(const ProbePair& pair);

/// Damped-outer-loss version, hypotheses p_tilde > 1/2, p >= p_tilde,
/// gamma in [0, 2]:
/// -(1+p_tilde)^{-gamma} ln p_tilde >= -ln p - lambda H(p) + (1-gamma/2) H(p_tilde).
/// Reduces bitwise to check_entropy_bound at gamma = 0.
BoundCheck check_damped_entropy_bound(const ProbePair& pair, double gamma);

/// Batch version through geometric means (computed in log space): applies
/// check_entropy_bound to (geo-mean p, geo-mean p_tilde).
BoundCheck check_entropy_bound_batch(std::span<const ProbePair> batch);

/// Geometric mean of the p (or p_tilde) components, exp(mean of logs).
double geometric_mean_p(std::span<const ProbePair> batch, bool tilde);

/// An input that broke its inequality; gamma is 0 for the undamped checks
/// and the pair carries geometric means for batch checks.
struct ViolationExample {
    ProbePair pair;
    double gamma = 0.0;
    double slack = 0.0;
};

struct SuiteReport {
    std::size_t samples = 0;
    std::size_t violations = 0;
    double min_slack = 0.0;
    std::vector<ViolationExample> examples; // at most the first 10 offenders
};

/// Uniform pairs with p_tilde <= p in [1e-9, 1 - 1e-9].
SuiteReport run_entropy_bound_suite(std::size_t n_samples, std::uint64_t seed);

/// p_tilde in (0.5, 1), p in [p_tilde, 1), gamma in [0, 2].
SuiteReport run_damped_bound_suite(std::size_t n_samples, std::uint64_t seed);

struct BatchSuiteReport {
    SuiteReport bound;
    double max_identity_error = 0.0; // |mean CE - (-ln geo-mean p)|
};

/// Random batches of size <= max_batch with geo-mean p_tilde <= geo-mean p;
/// also checks the identity batch-mean loss == -ln(geometric mean).
BatchSuiteReport run_batch_bound_suite(std::size_t n_batches, std::size_t max_batch,
                                       std::uint64_t seed);

struct LambdaPoint {
    double rho = 0.0;
    double p_tilde = 0.0;
    double lambda_lb = 0.0;
};

/// Grid rho in {0, 0.05, ..., 1.0} x p_tilde in {0.05, ..., 0.95}, restricted
/// to the domain e^{rho/2} p_tilde < 1.
std::vector<LambdaPoint> lambda_landscape();

/// Non-decreasing along every rho-line and p_tilde-line of the grid, and the
/// rho = 0 points are exactly 1.
bool lambda_landscape_monotone(const std::vector<LambdaPoint>& points);

/// CSV columns: rho, p_tilde, lambda_lb.
void write_lambda_csv(const std::vector<LambdaPoint>& points,
                      const std::filesystem::path& path);

/// Diagnostic summary of a probe stream: how often the perturbed confidence
/// dropped, how often it dropped by at least rho/2 in log space, and the
/// quantiles of ln(p/p_tilde) - rho/2. Never an assertion; the curvature
/// hypothesis behind the decay claim is not verified here.
struct ConfidenceDecayReport {
    std::size_t steps = 0;             // steps inside the window
    std::size_t window_begin = 0;      // first step index included
    double frac_decrease = 0.0;        // p_tilde <= p
    double frac_half_rho = 0.0;        // ln(p / p_tilde) >= rho / 2
    std::array<double, 5> log_ratio_margin_quantiles{}; // min, q25, med, q75, max
};

/// `window_start_frac` restricts the report to the trailing part of the
/// stream, e.g. 0.75 keeps the last quarter of the steps.
ConfidenceDecayReport confidence_decay_report(std::span<const ProbePair> per_step,
                                              double rho, double window_start_frac = 0.0);

} // namespace samlab
