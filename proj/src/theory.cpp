#include "samlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "samlab/errors.hpp"
#include "samlab/losses.hpp"
#include "samlab/rng.hpp"

namespace samlab {

namespace {

constexpr double kSlackTolerance = -1e-10;

void check_pair(const ProbePair& pair) {
    if (!(pair.p > 0.0 && pair.p < 1.0 && pair.p_tilde > 0.0 && pair.p_tilde < 1.0)) {
        throw DomainError("probe pair must lie strictly inside (0, 1)^2");
    }
}

} // namespace

double lambda_of(double p, double p_tilde) {
    if (p >= 1.0 || p <= 0.0 || p_tilde <= 0.0 || p_tilde >= 1.0) {
        throw DomainError("lambda_of: p and p_tilde must lie in (0, 1)");
    }
    return (1.0 - p_tilde) / (1.0 - p);
}

double lambda_lower_bound(double rho, double p_tilde) {
    if (rho < 0.0) throw DomainError("lambda_lower_bound: rho must be >= 0");
    if (p_tilde <= 0.0 || p_tilde >= 1.0) {
        throw DomainError("lambda_lower_bound: p_tilde must lie in (0, 1)");
    }
    const double denom = 1.0 - std::exp(rho / 2.0) * p_tilde;
    if (denom <= 0.0) {
        throw DomainError("lambda_lower_bound: e^{rho/2} p_tilde must stay below 1");
    }
    return (1.0 - p_tilde) / denom;
}

namespace {

// slack = LHS - RHS grouped so equal terms cancel exactly: at p == p_tilde
// (and damping factors of exactly 1) the slack is 0.0, not rounding noise.
double bound_slack(const ProbePair& pair, double lhs_factor, double entropy_factor) {
    const double log_term = lhs_factor * (-std::log(pair.p_tilde)) - (-std::log(pair.p));
    const double entropy_term = lambda_of(pair.p, pair.p_tilde) * binary_entropy(pair.p) -
                                entropy_factor * binary_entropy(pair.p_tilde);
    return log_term + entropy_term;
}

} // namespace

BoundCheck check_entropy_bound(const ProbePair& pair) {
    check_pair(pair);
    const double slack = bound_slack(pair, 1.0, 1.0);
    return {slack >= kSlackTolerance, slack};
}

BoundCheck check_damped_entropy_bound(const ProbePair& pair, double gamma) {
    check_pair(pair);
    if (gamma < 0.0 || gamma > 2.0) {
        throw DomainError("check_damped_entropy_bound: gamma must lie in [0, 2]");
    }
    if (pair.p_tilde <= 0.5) {
        throw DomainError("check_damped_entropy_bound: requires p_tilde > 1/2");
    }
    if (pair.p < pair.p_tilde) {
        throw DomainError("check_damped_entropy_bound: requires p >= p_tilde");
    }
    // gamma = 0 makes both factors exactly 1, so the slack agrees bitwise
    // with check_entropy_bound on the same pair.
    const double slack = bound_slack(pair, std::pow(1.0 + pair.p_tilde, -gamma),
                                     1.0 - gamma / 2.0);
    return {slack >= kSlackTolerance, slack};
}

double geometric_mean_p(std::span<const ProbePair> batch, bool tilde) {
    if (batch.empty()) throw DomainError("geometric mean of an empty batch");
    if (batch.size() == 1) {
        check_pair(batch[0]);
        return tilde ? batch[0].p_tilde : batch[0].p; // exact, no exp(log(.)) round trip
    }
    double log_sum = 0.0;
    for (const ProbePair& pair : batch) {
        check_pair(pair);
        log_sum += std::log(tilde ? pair.p_tilde : pair.p);
    }
    return std::exp(log_sum / static_cast<double>(batch.size()));
}

BoundCheck check_entropy_bound_batch(std::span<const ProbePair> batch) {
    const double p_bar = geometric_mean_p(batch, false);
    const double p_tilde_bar = geometric_mean_p(batch, true);
    return check_entropy_bound({p_bar, p_tilde_bar});
}

SuiteReport run_entropy_bound_suite(std::size_t n_samples, std::uint64_t seed) {
    Rng rng(seed);
    SuiteReport report{n_samples, 0, std::numeric_limits<double>::infinity(), {}};
    constexpr double lo = 1e-9, hi = 1.0 - 1e-9;
    for (std::size_t i = 0; i < n_samples; ++i) {
        double a = rng.uniform(lo, hi);
        double b = rng.uniform(lo, hi);
        if (a < b) std::swap(a, b); // p = max, p_tilde = min
        const BoundCheck check = check_entropy_bound({a, b});
        report.min_slack = std::min(report.min_slack, check.slack);
        if (!check.holds) {
            ++report.violations;
            if (report.examples.size() < 10) {
                report.examples.push_back({{a, b}, 0.0, check.slack});
            }
        }
    }
    return report;
}

SuiteReport run_damped_bound_suite(std::size_t n_samples, std::uint64_t seed) {
    Rng rng(seed);
    SuiteReport report{n_samples, 0, std::numeric_limits<double>::infinity(), {}};
    constexpr double hi = 1.0 - 1e-9;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double p_tilde = rng.uniform(std::nextafter(0.5, 1.0), hi);
        const double p = rng.uniform(p_tilde, hi);
        const double gamma = rng.uniform(0.0, 2.0);
        const BoundCheck check = check_damped_entropy_bound({p, p_tilde}, gamma);
        report.min_slack = std::min(report.min_slack, check.slack);
        if (!check.holds) {
            ++report.violations;
            if (report.examples.size() < 10) {
                report.examples.push_back({{p, p_tilde}, gamma, check.slack});
            }
        }
    }
    return report;
}

BatchSuiteReport run_batch_bound_suite(std::size_t n_batches, std::size_t max_batch,
                                       std::uint64_t seed) {
    if (max_batch == 0) throw DomainError("run_batch_bound_suite: max_batch must be >= 1");
    Rng rng(seed);
    BatchSuiteReport report;
    report.bound = {n_batches, 0, std::numeric_limits<double>::infinity(), {}};
    constexpr double lo = 1e-6, hi = 1.0 - 1e-6;
    for (std::size_t i = 0; i < n_batches; ++i) {
        const std::size_t m = 1 + rng.integer(max_batch);
        std::vector<ProbePair> batch(m);
        for (ProbePair& pair : batch) {
            pair.p = rng.uniform(lo, hi);
            pair.p_tilde = rng.uniform(lo, hi);
        }
        if (geometric_mean_p(batch, true) > geometric_mean_p(batch, false)) {
            for (ProbePair& pair : batch) std::swap(pair.p, pair.p_tilde);
        }
        const BoundCheck check = check_entropy_bound_batch(batch);
        report.bound.min_slack = std::min(report.bound.min_slack, check.slack);
        if (!check.holds) {
            ++report.bound.violations;
            if (report.bound.examples.size() < 10) {
                report.bound.examples.push_back({{geometric_mean_p(batch, false),
                                                  geometric_mean_p(batch, true)},
                                                 0.0,
                                                 check.slack});
            }
        }

        // batch-mean loss equals -ln of the geometric mean
        double ce_sum = 0.0;
        for (const ProbePair& pair : batch) ce_sum -= std::log(pair.p);
        const double identity_err =
            std::abs(ce_sum / static_cast<double>(m) +
                     std::log(geometric_mean_p(batch, false)));
        report.max_identity_error = std::max(report.max_identity_error, identity_err);
    }
    return report;
}

std::vector<LambdaPoint> lambda_landscape() {
    std::vector<LambdaPoint> points;
    for (int ri = 0; ri <= 20; ++ri) {
        const double rho = 0.05 * ri;
        for (int pi = 1; pi <= 19; ++pi) {
            const double p_tilde = 0.05 * pi;
            if (std::exp(rho / 2.0) * p_tilde >= 1.0) continue;
            points.push_back({rho, p_tilde, lambda_lower_bound(rho, p_tilde)});
        }
    }
    return points;
}

bool lambda_landscape_monotone(const std::vector<LambdaPoint>& points) {
    for (const LambdaPoint& a : points) {
        if (a.rho == 0.0 && a.lambda_lb != 1.0) return false;
        for (const LambdaPoint& b : points) {
            const bool same_rho_line = a.p_tilde == b.p_tilde && b.rho > a.rho;
            const bool same_p_line = a.rho == b.rho && b.p_tilde > a.p_tilde;
            if ((same_rho_line || same_p_line) && b.lambda_lb < a.lambda_lb) {
                return false;
            }
        }
    }
    return true;
}

void write_lambda_csv(const std::vector<LambdaPoint>& points,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << "rho,p_tilde,lambda_lb\n";
    char buf[160];
    for (const LambdaPoint& pt : points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", pt.rho, pt.p_tilde,
                      pt.lambda_lb);
        out << buf;
    }
}

ConfidenceDecayReport confidence_decay_report(std::span<const ProbePair> per_step,
                                              double rho, double window_start_frac) {
    if (per_step.empty()) throw DomainError("confidence_decay_report: empty stream");
    if (window_start_frac < 0.0 || window_start_frac >= 1.0) {
        throw DomainError("confidence_decay_report: window_start_frac in [0, 1)");
    }
    const std::size_t begin = static_cast<std::size_t>(
        window_start_frac * static_cast<double>(per_step.size()));
    ConfidenceDecayReport report;
    report.window_begin = begin;
    report.steps = per_step.size() - begin;

    std::vector<double> margins;
    margins.reserve(report.steps);
    std::size_t n_decrease = 0, n_half_rho = 0;
    for (std::size_t i = begin; i < per_step.size(); ++i) {
        const ProbePair& pair = per_step[i];
        check_pair(pair);
        if (pair.p_tilde <= pair.p) ++n_decrease;
        const double margin = std::log(pair.p / pair.p_tilde) - rho / 2.0;
        // -1e-12 absorbs rounding when p_tilde sits exactly on the decay boundary
        if (margin >= -1e-12) ++n_half_rho;
        margins.push_back(margin);
    }
    report.frac_decrease = static_cast<double>(n_decrease) / static_cast<double>(report.steps);
    report.frac_half_rho = static_cast<double>(n_half_rho) / static_cast<double>(report.steps);
    std::sort(margins.begin(), margins.end());
    const auto q = [&](double f) {
        const std::size_t idx = static_cast<std::size_t>(
            std::llround(f * static_cast<double>(margins.size() - 1)));
        return margins[idx];
    };
    report.log_ratio_margin_quantiles = {q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)};
    return report;
}

} // namespace samlab
