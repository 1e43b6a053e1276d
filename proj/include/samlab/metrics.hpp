#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "samlab/tensor.hpp"

namespace samlab {

/// Softmax outputs, labels, and (optionally) the raw logits for one split.
struct PredictionSet {
    Tensor probs;            // [n x K]
    std::vector<int> labels; // in [0, K)
    Tensor logits;           // [n x K] or empty

    std::size_t n() const { return probs.rows(); }
    std::size_t num_classes() const { return probs.cols(); }
    bool has_logits() const { return !logits.empty(); }

    /// Rows sum to 1 within 1e-6, entries in [0,1], labels in range.
    void validate() const;
};

struct BinStats {
    struct Bin {
        double lo = 0.0;
        double hi = 0.0;
        std::size_t count = 0;
        double avg_conf = 0.0;
        double avg_acc = 0.0;
    };
    std::vector<Bin> bins;
    std::size_t n = 0;
};

struct EceResult {
    double value = 0.0;
    BinStats stats;
};

/// Equal-width expected calibration error over M bins on (0, 1]:
/// bin i = ((i-1)/M, i/M], confidence 0 lands in bin 1.
/// ECE = sum_i (|B_i|/n) |acc(B_i) - conf(B_i)|.
EceResult ece(const PredictionSet& preds, int m_bins = 15);

/// Equal-mass variant: stable sort by (confidence, index), then M contiguous
/// groups; the first (n mod M) groups take the extra element.
EceResult ada_ece(const PredictionSet& preds, int m_bins);

/// Mean over classes of the binned gap between the class-k probability
/// column and the indicator [y = k]; bin weights use total n.
double classwise_ece(const PredictionSet& preds, int m_bins);

/// Mean -log p_y with p clamped at 1e-12.
double nll(const PredictionSet& preds);

double accuracy(const PredictionSet& preds);

/// Rank-based (Mann-Whitney) AUROC, ties counted 1/2. Throws on
/// single-class input.
double auroc(std::span<const double> scores, const std::vector<bool>& positives);

/// Misclassification detection: score = top confidence, positive = correct.
double auroc_misclassification(const PredictionSet& preds);

/// OOD detection: score = top confidence, positive = in-distribution.
double auroc_ood(const PredictionSet& in_dist, const PredictionSet& out_dist);

struct ReliabilityData {
    BinStats stats;
    std::vector<double> gaps; // acc - conf per bin
};

ReliabilityData reliability_data(const PredictionSet& preds, int m_bins);

/// CSV columns: bin_low, bin_high, count, avg_conf, avg_acc, gap.
void write_reliability_csv(const ReliabilityData& data, const std::filesystem::path& path);

/// Row-wise arithmetic mean of member probabilities. All sets must share
/// shape and labels.
PredictionSet average_probs(const std::vector<PredictionSet>& members);

/// Top-class index (first maximum) and its probability, per row.
std::vector<std::size_t> predicted_labels(const Tensor& probs);
std::vector<double> top_confidences(const Tensor& probs);

} // namespace samlab
