#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "samlab/metrics.hpp"

namespace samlab {

/// Logit divisor fitted by validation NLL. T = 1 is the identity.
struct TemperatureModel {
    double temperature = 1.0;
    bool degenerate = false; // all-identical logits: T pinned at 1
};

/// Golden-section search on ln T in [-ln 100, ln 100] down to a bracket of
/// 1e-6; the result never has higher validation NLL than T = 1.
TemperatureModel fit_temperature(const PredictionSet& val);

/// probs = softmax(logits / T). Argmax per row is unchanged for any T > 0.
PredictionSet apply_temperature(const PredictionSet& preds, const TemperatureModel& model);

/// Monotone step map from top-label confidence to calibrated probability.
/// breakpoints are (confidence upper bound, value), values non-decreasing.
struct IsotonicModel {
    std::vector<std::pair<double, double>> breakpoints;

    /// Left-continuous step lookup: value of the first breakpoint at or above
    /// c; queries beyond the last threshold take the last value.
    double lookup(double confidence) const;
};

/// Pool-adjacent-violators on (top confidence, correctness) sorted stably by
/// (confidence, original index): the least-squares optimal non-decreasing fit.
IsotonicModel fit_isotonic(const PredictionSet& val);

/// Remaps each row's top probability through the step function and
/// redistributes the remaining mass over the other classes in proportion to
/// their original probabilities; rows are renormalized.
PredictionSet apply_isotonic(const PredictionSet& preds, const IsotonicModel& model);

/// Raw non-decreasing least-squares fit of `targets` (unit weights).
std::vector<double> pav_nondecreasing(std::span<const double> targets);

/// Calibrator JSON: {"kind":"temperature","T":x} or
/// {"kind":"isotonic","breakpoints":[[c,v],...]}.
void save_calibrator(const TemperatureModel& model, const std::filesystem::path& path);
void save_calibrator(const IsotonicModel& model, const std::filesystem::path& path);

} // namespace samlab
