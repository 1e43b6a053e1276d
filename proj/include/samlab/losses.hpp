#pragma once

#include <vector>

#include "samlab/tensor.hpp"

namespace samlab {

/// Per-example classification losses over log-probabilities.
///
/// cross_entropy:  -log p_y
/// focal:          -(1 - p_y)^{gamma_f} log p_y
/// csam_outer:     -log p_y              if p_y <= 1/2
///                 -(1 + p_y)^{-gamma} log p_y   otherwise
///
/// csam_outer damps the contribution of already-confident examples in the
/// descent step of the CSAM optimizer; gamma = 0 recovers cross-entropy
/// exactly (branchwise, bit for bit). The confidence factor is part of the
/// differentiated expression, not a detached weight.
struct LossKind {
    enum class Tag { cross_entropy, focal, csam_outer };
    Tag tag = Tag::cross_entropy;
    double gamma = 0.0; // focal: gamma_f >= 0; csam_outer: gamma in [0, 2]

    static LossKind cross_entropy() { return {Tag::cross_entropy, 0.0}; }
    static LossKind focal(double gamma_f);
    static LossKind csam_outer(double gamma);
};

struct LossValues {
    double mean = 0.0;
    std::vector<double> per_example;
};

/// log_probs: [m x K] rows of log-softmax output; labels in [0, K).
LossValues cross_entropy(const Tensor& log_probs, const std::vector<int>& labels);
LossValues focal_loss(const Tensor& log_probs, const std::vector<int>& labels, double gamma_f);
LossValues csam_outer_loss(const Tensor& log_probs, const std::vector<int>& labels, double gamma);
LossValues loss_values(LossKind kind, const Tensor& log_probs, const std::vector<int>& labels);

/// Tape node for the batch-mean loss; gradient flows into log_probs only at
/// the true-label entries.
Tape::NodeId loss_node(Tape& tape, LossKind kind, Tape::NodeId log_probs,
                       std::vector<int> labels);

/// H(p) = -p ln p - (1-p) ln(1-p), with 0 ln 0 = 0. Domain [0, 1].
double binary_entropy(double p);

/// Per-example entropies of a probability matrix [m x K]:
/// true_label = H(p_y) (binary entropy of the true-label probability),
/// categorical = -sum_k p_k ln p_k.
struct EntropyValues {
    std::vector<double> true_label;
    std::vector<double> categorical;
};
EntropyValues predictive_entropy(const Tensor& probs, const std::vector<int>& labels);

} // namespace samlab
