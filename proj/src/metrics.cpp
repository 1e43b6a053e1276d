#include "samlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "samlab/errors.hpp"

namespace samlab {

namespace {

// First bin with c <= i/M; bin 0 also absorbs c = 0. Comparisons are against
// the i/M doubles themselves so the convention is exact.
std::size_t bin_index(double c, int m_bins) {
    for (int i = 0; i < m_bins - 1; ++i) {
        if (c <= static_cast<double>(i + 1) / static_cast<double>(m_bins)) {
            return static_cast<std::size_t>(i);
        }
    }
    return static_cast<std::size_t>(m_bins - 1);
}

double weighted_gap_sum(const BinStats& stats) {
    double total = 0.0;
    for (const auto& b : stats.bins) {
        if (b.count == 0) continue;
        total += (static_cast<double>(b.count) / static_cast<double>(stats.n)) *
                 std::abs(b.avg_acc - b.avg_conf);
    }
    return total;
}

} // namespace

void PredictionSet::validate() const {
    if (probs.shape.size() != 2 || probs.shape[1] < 2) {
        throw ConfigError("prediction set: probs must be [n x K], K >= 2");
    }
    const std::size_t nn = n(), k = num_classes();
    if (labels.size() != nn) {
        throw ConfigError("prediction set: labels length != n");
    }
    if (has_logits() && logits.shape != probs.shape) {
        throw ConfigError("prediction set: logits shape != probs shape");
    }
    for (std::size_t i = 0; i < nn; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs.data[i * k + j];
            if (p < 0.0 || p > 1.0) {
                throw ConfigError("prediction set: probability outside [0,1] at row " +
                                  std::to_string(i));
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw ConfigError("prediction set: row " + std::to_string(i) +
                              " sums to " + std::to_string(sum));
        }
        if (labels[i] < 0 || labels[i] >= static_cast<int>(k)) {
            throw ConfigError("prediction set: label out of range at row " +
                              std::to_string(i));
        }
    }
}

std::vector<std::size_t> predicted_labels(const Tensor& probs) {
    const std::size_t n = probs.rows(), k = probs.cols();
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (probs.data[i * k + j] > probs.data[i * k + best]) best = j;
        }
        out[i] = best;
    }
    return out;
}

std::vector<double> top_confidences(const Tensor& probs) {
    const std::size_t n = probs.rows(), k = probs.cols();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = probs.data[i * k];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, probs.data[i * k + j]);
        out[i] = mx;
    }
    return out;
}

EceResult ece(const PredictionSet& preds, int m_bins) {
    if (m_bins < 1) throw ConfigError("ece: M must be >= 1");
    if (preds.n() == 0) throw ConfigError("ece: empty prediction set");
    const std::size_t n = preds.n();
    const auto conf = top_confidences(preds.probs);
    const auto pred = predicted_labels(preds.probs);

    BinStats stats;
    stats.n = n;
    stats.bins.resize(static_cast<std::size_t>(m_bins));
    std::vector<double> conf_sum(m_bins, 0.0), acc_sum(m_bins, 0.0);
    std::vector<std::size_t> count(m_bins, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t b = bin_index(conf[i], m_bins);
        conf_sum[b] += conf[i];
        acc_sum[b] += (pred[i] == static_cast<std::size_t>(preds.labels[i])) ? 1.0 : 0.0;
        ++count[b];
    }
    for (int b = 0; b < m_bins; ++b) {
        auto& bin = stats.bins[static_cast<std::size_t>(b)];
        bin.lo = static_cast<double>(b) / static_cast<double>(m_bins);
        bin.hi = static_cast<double>(b + 1) / static_cast<double>(m_bins);
        bin.count = count[b];
        if (count[b] > 0) {
            bin.avg_conf = conf_sum[b] / static_cast<double>(count[b]);
            bin.avg_acc = acc_sum[b] / static_cast<double>(count[b]);
        }
    }
    return {weighted_gap_sum(stats), std::move(stats)};
}

EceResult ada_ece(const PredictionSet& preds, int m_bins) {
    if (m_bins < 1) throw ConfigError("ada_ece: M must be >= 1");
    const std::size_t n = preds.n();
    if (n < static_cast<std::size_t>(m_bins)) {
        throw ConfigError("ada_ece: need n >= M, got n = " + std::to_string(n));
    }
    const auto conf = top_confidences(preds.probs);
    const auto pred = predicted_labels(preds.probs);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });

    const std::size_t base = n / static_cast<std::size_t>(m_bins);
    const std::size_t extra = n % static_cast<std::size_t>(m_bins);
    BinStats stats;
    stats.n = n;
    std::size_t pos = 0;
    for (int b = 0; b < m_bins; ++b) {
        const std::size_t sz = base + (static_cast<std::size_t>(b) < extra ? 1 : 0);
        BinStats::Bin bin;
        bin.count = sz;
        double cs = 0.0, as = 0.0;
        bin.lo = conf[order[pos]];
        bin.hi = conf[order[pos + sz - 1]];
        for (std::size_t i = pos; i < pos + sz; ++i) {
            const std::size_t j = order[i];
            cs += conf[j];
            as += (pred[j] == static_cast<std::size_t>(preds.labels[j])) ? 1.0 : 0.0;
        }
        bin.avg_conf = cs / static_cast<double>(sz);
        bin.avg_acc = as / static_cast<double>(sz);
        stats.bins.push_back(bin);
        pos += sz;
    }
    return {weighted_gap_sum(stats), std::move(stats)};
}

double classwise_ece(const PredictionSet& preds, int m_bins) {
    if (m_bins < 1) throw ConfigError("classwise_ece: M must be >= 1");
    if (preds.n() == 0) throw ConfigError("classwise_ece: empty prediction set");
    const std::size_t n = preds.n(), k = preds.num_classes();
    double total = 0.0;
    for (std::size_t cls = 0; cls < k; ++cls) {
        std::vector<double> prob_sum(m_bins, 0.0), hit_sum(m_bins, 0.0);
        std::vector<std::size_t> count(m_bins, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = preds.probs.data[i * k + cls];
            const std::size_t b = bin_index(p, m_bins);
            prob_sum[b] += p;
            hit_sum[b] += (preds.labels[i] == static_cast<int>(cls)) ? 1.0 : 0.0;
            ++count[b];
        }
        double cls_val = 0.0;
        for (int b = 0; b < m_bins; ++b) {
            if (count[b] == 0) continue;
            const double avg_p = prob_sum[b] / static_cast<double>(count[b]);
            const double avg_hit = hit_sum[b] / static_cast<double>(count[b]);
            cls_val += (static_cast<double>(count[b]) / static_cast<double>(n)) *
                       std::abs(avg_hit - avg_p);
        }
        total += cls_val;
    }
    return total / static_cast<double>(k);
}

double nll(const PredictionSet& preds) {
    const std::size_t n = preds.n(), k = preds.num_classes();
    if (n == 0) throw ConfigError("nll: empty prediction set");
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = preds.probs.data[i * k + static_cast<std::size_t>(preds.labels[i])];
        sum -= std::log(std::max(p, 1e-12));
    }
    return sum / static_cast<double>(n);
}

double accuracy(const PredictionSet& preds) {
    const std::size_t n = preds.n();
    if (n == 0) throw ConfigError("accuracy: empty prediction set");
    const auto pred = predicted_labels(preds.probs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (pred[i] == static_cast<std::size_t>(preds.labels[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

double auroc(std::span<const double> scores, const std::vector<bool>& positives) {
    if (scores.size() != positives.size()) {
        throw ConfigError("auroc: scores and positives lengths differ");
    }
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool b : positives) n_pos += b ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DomainError("auroc: need at least one positive and one negative");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // average ranks over tied score groups
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        if (positives[t]) rank_sum += rank[t];
    }
    const double u = rank_sum - 0.5 * static_cast<double>(n_pos) *
                                    (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auroc_misclassification(const PredictionSet& preds) {
    const auto conf = top_confidences(preds.probs);
    const auto pred = predicted_labels(preds.probs);
    std::vector<bool> correct(preds.n());
    for (std::size_t i = 0; i < preds.n(); ++i) {
        correct[i] = pred[i] == static_cast<std::size_t>(preds.labels[i]);
    }
    return auroc(conf, correct);
}

double auroc_ood(const PredictionSet& in_dist, const PredictionSet& out_dist) {
    auto scores = top_confidences(in_dist.probs);
    const auto ood_scores = top_confidences(out_dist.probs);
    scores.insert(scores.end(), ood_scores.begin(), ood_scores.end());
    std::vector<bool> is_id(scores.size(), false);
    std::fill(is_id.begin(), is_id.begin() + static_cast<std::ptrdiff_t>(in_dist.n()), true);
    return auroc(scores, is_id);
}

ReliabilityData reliability_data(const PredictionSet& preds, int m_bins) {
    EceResult e = ece(preds, m_bins);
    ReliabilityData out;
    out.stats = std::move(e.stats);
    out.gaps.reserve(out.stats.bins.size());
    for (const auto& b : out.stats.bins) {
        out.gaps.push_back(b.count > 0 ? b.avg_acc - b.avg_conf : 0.0);
    }
    return out;
}

void write_reliability_csv(const ReliabilityData& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << "bin_low,bin_high,count,avg_conf,avg_acc,gap\n";
    char buf[512];
    for (std::size_t i = 0; i < data.stats.bins.size(); ++i) {
        const auto& b = data.stats.bins[i];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%zu,%.17g,%.17g,%.17g\n", b.lo, b.hi,
                      b.count, b.avg_conf, b.avg_acc, data.gaps[i]);
        out << buf;
    }
}

PredictionSet average_probs(const std::vector<PredictionSet>& members) {
    if (members.empty()) throw ConfigError("average_probs: no members");
    const std::size_t n = members[0].n(), k = members[0].num_classes();
    for (const auto& m : members) {
        if (m.n() != n || m.num_classes() != k || m.labels != members[0].labels) {
            throw ConfigError("average_probs: members disagree on shape or labels");
        }
    }
    PredictionSet out;
    out.labels = members[0].labels;
    out.probs = Tensor({n, k});
    const double inv = 1.0 / static_cast<double>(members.size());
    for (const auto& m : members) {
        for (std::size_t i = 0; i < n * k; ++i) out.probs.data[i] += m.probs.data[i];
    }
    for (double& v : out.probs.data) v *= inv;
    return out;
}

} // namespace samlab
