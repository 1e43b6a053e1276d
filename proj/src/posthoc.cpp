#include "samlab/posthoc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "samlab/errors.hpp"

namespace samlab {

namespace {

// Mean -log softmax(logits / T)_y, computed in log space.
double scaled_nll(const PredictionSet& preds, double temperature) {
    const std::size_t n = preds.n(), k = preds.num_classes();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &preds.logits.data[i * k];
        double mx = row[0] / temperature;
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j] / temperature);
        double lse = 0.0;
        for (std::size_t j = 0; j < k; ++j) lse += std::exp(row[j] / temperature - mx);
        lse = mx + std::log(lse);
        sum -= row[static_cast<std::size_t>(preds.labels[i])] / temperature - lse;
    }
    return sum / static_cast<double>(n);
}

} // namespace

TemperatureModel fit_temperature(const PredictionSet& val) {
    if (!val.has_logits()) throw ConfigError("fit_temperature: logits required");
    if (val.n() < 2) throw ConfigError("fit_temperature: need at least 2 samples");

    const std::size_t k = val.num_classes();
    bool all_rows_constant = true;
    for (std::size_t i = 0; i < val.n() && all_rows_constant; ++i) {
        const double* row = &val.logits.data[i * k];
        for (std::size_t j = 1; j < k; ++j) {
            if (row[j] != row[0]) {
                all_rows_constant = false;
                break;
            }
        }
    }
    if (all_rows_constant) {
        return {1.0, true};
    }

    const auto objective = [&](double log_t) { return scaled_nll(val, std::exp(log_t)); };
    double a = -std::log(100.0), b = std::log(100.0);
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = objective(x1);
    double f2 = objective(x2);
    while (b - a > 1e-6) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = objective(x2);
        }
    }
    double t = std::exp(0.5 * (a + b));
    // never worse than the identity
    if (scaled_nll(val, 1.0) < scaled_nll(val, t)) t = 1.0;
    return {t, false};
}

PredictionSet apply_temperature(const PredictionSet& preds, const TemperatureModel& model) {
    if (!preds.has_logits()) throw ConfigError("apply_temperature: logits required");
    if (model.temperature <= 0.0) throw ConfigError("apply_temperature: T must be > 0");
    PredictionSet out;
    out.labels = preds.labels;
    out.logits = preds.logits;
    for (double& v : out.logits.data) v /= model.temperature;
    out.probs = softmax(out.logits);
    return out;
}

std::vector<double> pav_nondecreasing(std::span<const double> targets) {
    struct Block {
        double sum;
        std::size_t count;
        double value() const { return sum / static_cast<double>(count); }
    };
    std::vector<Block> blocks;
    blocks.reserve(targets.size());
    for (double t : targets) {
        blocks.push_back({t, 1});
        while (blocks.size() > 1 &&
               blocks[blocks.size() - 2].value() >= blocks.back().value()) {
            blocks[blocks.size() - 2].sum += blocks.back().sum;
            blocks[blocks.size() - 2].count += blocks.back().count;
            blocks.pop_back();
        }
    }
    std::vector<double> fit;
    fit.reserve(targets.size());
    for (const Block& b : blocks) {
        fit.insert(fit.end(), b.count, b.value());
    }
    return fit;
}

IsotonicModel fit_isotonic(const PredictionSet& val) {
    if (val.n() < 2) throw ConfigError("fit_isotonic: need at least 2 samples");
    const std::size_t n = val.n();
    const auto conf = top_confidences(val.probs);
    const auto pred = predicted_labels(val.probs);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });

    std::vector<double> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = order[i];
        targets[i] = pred[j] == static_cast<std::size_t>(val.labels[j]) ? 1.0 : 0.0;
    }
    const std::vector<double> fit = pav_nondecreasing(targets);

    IsotonicModel model;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = conf[order[i]];
        const double v = fit[i];
        // compress runs sharing a fitted value; keep the block's upper bound
        if (!model.breakpoints.empty() && model.breakpoints.back().second == v) {
            model.breakpoints.back().first = c;
        } else {
            model.breakpoints.emplace_back(c, v);
        }
    }
    return model;
}

double IsotonicModel::lookup(double confidence) const {
    if (breakpoints.empty()) throw ConfigError("isotonic lookup: model not fitted");
    auto it = std::lower_bound(breakpoints.begin(), breakpoints.end(), confidence,
                               [](const auto& bp, double c) { return bp.first < c; });
    if (it == breakpoints.end()) return breakpoints.back().second;
    return it->second;
}

PredictionSet apply_isotonic(const PredictionSet& preds, const IsotonicModel& model) {
    const std::size_t n = preds.n(), k = preds.num_classes();
    PredictionSet out;
    out.labels = preds.labels;
    out.logits = preds.logits;
    out.probs = preds.probs;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = &out.probs.data[i * k];
        std::size_t top = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (row[j] > row[top]) top = j;
        }
        const double c = row[top];
        const double q = std::clamp(model.lookup(c), 1e-12, 1.0);
        const double rest = 1.0 - q;
        const double other_mass = 1.0 - c;
        if (other_mass > 1e-15) {
            const double scale = rest / other_mass;
            for (std::size_t j = 0; j < k; ++j) {
                if (j != top) row[j] *= scale;
            }
        } else {
            const double share = rest / static_cast<double>(k - 1);
            for (std::size_t j = 0; j < k; ++j) {
                if (j != top) row[j] = share;
            }
        }
        row[top] = q;
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += row[j];
        for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
    }
    return out;
}

void save_calibrator(const TemperatureModel& model, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["kind"] = "temperature";
    j["T"] = model.temperature;
    if (model.degenerate) j["degenerate"] = true;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

void save_calibrator(const IsotonicModel& model, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["kind"] = "isotonic";
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [c, v] : model.breakpoints) arr.push_back({c, v});
    j["breakpoints"] = std::move(arr);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace samlab
