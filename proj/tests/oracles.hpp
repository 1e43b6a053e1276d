// Independent reference implementations used to check the library: these
// re-derive results straight from the definitions (naive loops, brute-force
// enumeration, grid search) and must not call the code paths they verify.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "samlab/metrics.hpp"
#include "samlab/rng.hpp"
#include "samlab/tensor.hpp"

namespace oracles {

// ECE straight from the estimator definition: for every bin, scan all
// samples for membership in ((i-1)/M, i/M] (confidence 0 belongs to bin 1),
// average confidence and accuracy, and accumulate (|B|/n)|acc - conf|.
inline double ece_naive(const samlab::PredictionSet& preds, int m_bins) {
    const std::size_t n = preds.n(), k = preds.num_classes();
    double total = 0.0;
    for (int bin = 0; bin < m_bins; ++bin) {
        const double lo = static_cast<double>(bin) / static_cast<double>(m_bins);
        const double hi = static_cast<double>(bin + 1) / static_cast<double>(m_bins);
        double conf_sum = 0.0, acc_sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double conf = preds.probs.data[i * k];
            std::size_t argmax = 0;
            for (std::size_t j = 1; j < k; ++j) {
                const double p = preds.probs.data[i * k + j];
                if (p > conf) {
                    conf = p;
                    argmax = j;
                }
            }
            const bool member = conf <= hi && (bin == 0 || conf > lo);
            if (!member) continue;
            conf_sum += conf;
            acc_sum += argmax == static_cast<std::size_t>(preds.labels[i]) ? 1.0 : 0.0;
            ++count;
        }
        if (count == 0) continue;
        const double acc = acc_sum / static_cast<double>(count);
        const double conf = conf_sum / static_cast<double>(count);
        total += (static_cast<double>(count) / static_cast<double>(n)) *
                 std::abs(acc - conf);
    }
    return total;
}

// Brute-force monotone least squares: enumerate every contiguous partition
// (2^(n-1) of them), keep those whose block means are non-decreasing, and
// take the squared-error minimizer. The optimal monotone fit is piecewise
// constant on such a partition, so the search is exhaustive.
inline std::vector<double> pav_bruteforce(const std::vector<double>& targets) {
    const std::size_t n = targets.size();
    std::vector<double> best;
    double best_sse = std::numeric_limits<double>::infinity();
    const std::uint32_t masks = n >= 1 ? 1u << (n - 1) : 0;
    for (std::uint32_t mask = 0; mask < masks; ++mask) {
        // bit i set = cut between positions i and i+1
        std::vector<double> fit(n);
        double sse = 0.0;
        bool feasible = true;
        double prev_mean = -std::numeric_limits<double>::infinity();
        std::size_t begin = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool cut = i + 1 == n || (mask >> i) & 1u;
            if (!cut) continue;
            double sum = 0.0;
            for (std::size_t j = begin; j <= i; ++j) sum += targets[j];
            const double mean = sum / static_cast<double>(i - begin + 1);
            if (mean < prev_mean) {
                feasible = false;
                break;
            }
            for (std::size_t j = begin; j <= i; ++j) {
                fit[j] = mean;
                const double r = mean - targets[j];
                sse += r * r;
            }
            prev_mean = mean;
            begin = i + 1;
        }
        if (feasible && sse < best_sse) {
            best_sse = sse;
            best = std::move(fit);
        }
    }
    return best;
}

inline double sse(const std::vector<double>& fit, const std::vector<double>& targets) {
    double out = 0.0;
    for (std::size_t i = 0; i < fit.size(); ++i) {
        const double r = fit[i] - targets[i];
        out += r * r;
    }
    return out;
}

// NLL of softmax(logits / T), for the temperature grid search.
inline double nll_at_temperature(const samlab::PredictionSet& preds, double t) {
    const std::size_t n = preds.n(), k = preds.num_classes();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            mx = std::max(mx, preds.logits.data[i * k + j] / t);
        }
        double lse = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            lse += std::exp(preds.logits.data[i * k + j] / t - mx);
        }
        lse = mx + std::log(lse);
        sum -= preds.logits.data[i * k + static_cast<std::size_t>(preds.labels[i])] / t - lse;
    }
    return sum / static_cast<double>(n);
}

inline double grid_search_temperature(const samlab::PredictionSet& preds, double lo,
                                      double hi, double step) {
    double best_t = lo, best = std::numeric_limits<double>::infinity();
    for (double t = lo; t <= hi; t += step) {
        const double v = nll_at_temperature(preds, t);
        if (v < best) {
            best = v;
            best_t = t;
        }
    }
    return best_t;
}

// Random prediction set: probabilities from a softmax of scaled normals, so
// rows sum to 1 up to rounding; labels uniform.
inline samlab::PredictionSet random_prediction_set(samlab::Rng& rng, std::size_t n,
                                                   std::size_t k, double sharpness = 2.0) {
    samlab::PredictionSet preds;
    preds.logits = samlab::Tensor({n, k});
    for (double& v : preds.logits.data) v = sharpness * rng.normal();
    preds.probs = samlab::softmax(preds.logits);
    preds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        preds.labels[i] = static_cast<int>(rng.integer(k));
    }
    return preds;
}

// Sampled labels follow the model's own softmax, so the set is calibrated by
// construction.
inline samlab::PredictionSet calibrated_logistic_set(samlab::Rng& rng, std::size_t n,
                                                     std::size_t k, double spread) {
    samlab::PredictionSet preds;
    preds.logits = samlab::Tensor({n, k});
    preds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            preds.logits.data[i * k + j] = spread * rng.normal();
        }
    }
    preds.probs = samlab::softmax(preds.logits);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        double acc = 0.0;
        int label = static_cast<int>(k) - 1;
        for (std::size_t j = 0; j < k; ++j) {
            acc += preds.probs.data[i * k + j];
            if (u < acc) {
                label = static_cast<int>(j);
                break;
            }
        }
        preds.labels[i] = label;
    }
    return preds;
}

} // namespace oracles
