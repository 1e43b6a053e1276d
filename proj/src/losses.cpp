#include "samlab/losses.hpp"

#include <cmath>
#include <string>

#include "samlab/errors.hpp"

namespace samlab {

namespace {

void check_labels(const Tensor& log_probs, const std::vector<int>& labels) {
    if (log_probs.shape.size() != 2) {
        throw ConfigError("loss: log_probs must be [m x K]");
    }
    const std::size_t m = log_probs.shape[0];
    const int k = static_cast<int>(log_probs.shape[1]);
    if (labels.size() != m) {
        throw ConfigError("loss: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(m) + " rows");
    }
    for (int y : labels) {
        if (y < 0 || y >= k) {
            throw ConfigError("loss: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(k) + ")");
        }
    }
}

// Per-example loss and its derivative w.r.t. u = log p_y.
struct PerExample {
    double loss;
    double dloss_du;
};

PerExample eval_one(const LossKind& kind, double u) {
    const double p = std::exp(u);
    switch (kind.tag) {
    case LossKind::Tag::cross_entropy:
        return {-u, -1.0};
    case LossKind::Tag::focal: {
        const double gf = kind.gamma;
        if (gf == 0.0) return {-u, -1.0};
        const double q = 1.0 - p;
        if (q <= 0.0) return {0.0, 0.0}; // saturated: loss and slope both vanish
        const double qg = std::pow(q, gf);
        // d/du [-(1-p)^gf * u] = gf * p * u * (1-p)^(gf-1) - (1-p)^gf
        return {-qg * u, gf * p * u * std::pow(q, gf - 1.0) - qg};
    }
    case LossKind::Tag::csam_outer: {
        if (p <= 0.5) return {-u, -1.0};
        const double g = kind.gamma;
        const double f = std::pow(1.0 + p, -g);
        // d/du [-(1+p)^-g * u] = g * p * u * (1+p)^(-g-1) - (1+p)^-g
        return {-f * u, g * p * u * std::pow(1.0 + p, -g - 1.0) - f};
    }
    }
    return {0.0, 0.0};
}

LossValues eval_batch(const LossKind& kind, const Tensor& log_probs,
                      const std::vector<int>& labels) {
    check_labels(log_probs, labels);
    const std::size_t m = log_probs.shape[0];
    const std::size_t k = log_probs.shape[1];
    LossValues out;
    out.per_example.resize(m);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double u = log_probs.data[i * k + static_cast<std::size_t>(labels[i])];
        out.per_example[i] = eval_one(kind, u).loss;
        sum += out.per_example[i];
    }
    out.mean = sum / static_cast<double>(m);
    return out;
}

} // namespace

LossKind LossKind::focal(double gamma_f) {
    if (gamma_f < 0.0) throw ConfigError("focal loss: gamma_f must be >= 0");
    return {Tag::focal, gamma_f};
}

LossKind LossKind::csam_outer(double gamma) {
    if (gamma < 0.0 || gamma > 2.0) {
        throw ConfigError("csam outer loss: gamma must lie in [0, 2]");
    }
    return {Tag::csam_outer, gamma};
}

LossValues cross_entropy(const Tensor& log_probs, const std::vector<int>& labels) {
    return eval_batch(LossKind::cross_entropy(), log_probs, labels);
}

LossValues focal_loss(const Tensor& log_probs, const std::vector<int>& labels,
                      double gamma_f) {
    return eval_batch(LossKind::focal(gamma_f), log_probs, labels);
}

LossValues csam_outer_loss(const Tensor& log_probs, const std::vector<int>& labels,
                           double gamma) {
    return eval_batch(LossKind::csam_outer(gamma), log_probs, labels);
}

LossValues loss_values(LossKind kind, const Tensor& log_probs,
                       const std::vector<int>& labels) {
    return eval_batch(kind, log_probs, labels);
}

Tape::NodeId loss_node(Tape& tape, LossKind kind, Tape::NodeId log_probs,
                       std::vector<int> labels) {
    const LossValues v = eval_batch(kind, tape.value(log_probs), labels);
    return tape.custom(
        "loss", {log_probs}, Tensor::scalar(v.mean),
        [kind, labels = std::move(labels)](Tape& t, Tape::NodeId self) {
            const Tape::NodeId lp = t.inputs(self)[0];
            const Tensor& lpv = t.value(lp);
            const std::size_t m = lpv.shape[0], k = lpv.shape[1];
            const double g = t.grad(self).data[0] / static_cast<double>(m);
            Tensor& glp = t.grad_mut(lp);
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t y = static_cast<std::size_t>(labels[i]);
                const double u = lpv.data[i * k + y];
                glp.data[i * k + y] += g * eval_one(kind, u).dloss_du;
            }
        });
}

double binary_entropy(double p) {
    if (p < 0.0 || p > 1.0) {
        throw DomainError("binary_entropy: p = " + std::to_string(p) +
                          " outside [0, 1]");
    }
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
    return h;
}

EntropyValues predictive_entropy(const Tensor& probs, const std::vector<int>& labels) {
    check_labels(probs, labels);
    const std::size_t m = probs.shape[0], k = probs.shape[1];
    EntropyValues out;
    out.true_label.resize(m);
    out.categorical.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        double sum = 0.0;
        double hcat = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs.data[i * k + j];
            sum += p;
            if (p > 0.0) hcat -= p * std::log(p);
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw DomainError("predictive_entropy: row " + std::to_string(i) +
                              " sums to " + std::to_string(sum));
        }
        const double py = probs.data[i * k + static_cast<std::size_t>(labels[i])];
        out.true_label[i] = binary_entropy(std::min(1.0, std::max(0.0, py)));
        out.categorical[i] = hcat;
    }
    return out;
}

} // namespace samlab
