#include "samlab/optimizers.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "samlab/errors.hpp"
#include "samlab/rng.hpp"

namespace samlab {

namespace {

struct BatchGrad {
    std::vector<double> grad;
    double loss = 0.0;
    std::vector<double> p_true; // exp(log p_y) per example, filled when probing
};

BatchGrad batch_gradient(const ModelParams& params, const Tensor& x,
                         const std::vector<int>& y, LossKind kind, bool want_p) {
    Tape tape;
    TapedMlp taped = forward_on_tape(tape, params, x);
    Tape::NodeId lp = tape.log_softmax(taped.logits);
    Tape::NodeId loss = loss_node(tape, kind, lp, y);
    tape.backward(loss);
    BatchGrad out;
    out.loss = tape.value(loss).data[0];
    out.grad = flat_gradient(tape, taped, params);
    if (want_p) {
        const Tensor& lpv = tape.value(lp);
        const std::size_t k = lpv.shape[1];
        out.p_true.resize(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            out.p_true[i] = std::exp(lpv.data[i * k + static_cast<std::size_t>(y[i])]);
        }
    }
    return out;
}

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Tensor select_rows(const Tensor& features, std::span<const std::size_t> idx) {
    const std::size_t d = features.cols();
    Tensor out({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(&features.data[idx[i] * d], d, &out.data[i * d]);
    }
    return out;
}

} // namespace

const char* to_string(OptimizerKind kind) {
    switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::sam: return "sam";
    case OptimizerKind::csam: return "csam";
    }
    return "?";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "sam") return OptimizerKind::sam;
    if (s == "csam") return OptimizerKind::csam;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd|sam|csam)");
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("train: learning rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (rho < 0.0) throw ConfigError("train: rho must be >= 0");
    if (gamma < 0.0 || gamma > 2.0) throw ConfigError("train: gamma must lie in [0, 2]");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lr_min < 0.0 || lr_min > lr) throw ConfigError("train: lr_min must lie in [0, lr]");
    if (switch_epoch.has_value() != switch_to.has_value()) {
        throw ConfigError("train: switch_epoch and switch_to must be given together");
    }
    if (switch_epoch && (*switch_epoch < 0 || *switch_epoch >= epochs)) {
        throw ConfigError("train: switch_epoch must lie in [0, epochs)");
    }
}

void sgd_step(std::span<double> params, std::span<const double> grads, SgdState& state,
              double lr, double momentum, double weight_decay) {
    if (params.size() != grads.size()) throw ConfigError("sgd_step: size mismatch");
    if (state.velocity.empty()) state.velocity.assign(params.size(), 0.0);
    if (state.velocity.size() != params.size()) {
        throw ConfigError("sgd_step: stale momentum state");
    }
    if (!all_finite(grads)) throw NumericError("sgd_step: non-finite gradient");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] + weight_decay * params[i];
        state.velocity[i] = momentum * state.velocity[i] + g;
        params[i] -= lr * state.velocity[i];
    }
}

double cosine_lr(std::size_t t, std::size_t total_steps, double lr0, double lr_min) {
    if (total_steps == 0 || t > total_steps) {
        throw ConfigError("cosine_lr: need 0 <= t <= T with T > 0");
    }
    const double frac = static_cast<double>(t) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<double> ascent_point(std::span<const double> theta,
                                 std::span<const double> grad, double rho) {
    if (theta.size() != grad.size()) throw ConfigError("ascent_point: size mismatch");
    if (rho < 0.0) throw ConfigError("ascent_point: rho must be >= 0");
    std::vector<double> out(theta.begin(), theta.end());
    double norm_sq = 0.0;
    for (double g : grad) norm_sq += g * g;
    const double norm = std::sqrt(norm_sq);
    if (rho > 0.0 && norm > 0.0) {
        const double scale = rho / norm;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * grad[i];
    }
    return out;
}

SamStepTrace sam_step(ModelParams& params, const Tensor& batch_x,
                      const std::vector<int>& batch_y, LossKind outer, double rho,
                      double lr, double momentum, double weight_decay, SgdState& state,
                      bool probe) {
    if (rho < 0.0) throw ConfigError("sam_step: rho must be >= 0");
    SamStepTrace trace;

    // ascent: raw cross-entropy gradient at theta, no decay or momentum
    BatchGrad ascent = batch_gradient(params, batch_x, batch_y,
                                      LossKind::cross_entropy(), probe);
    if (!std::isfinite(ascent.loss) || !all_finite(ascent.grad)) {
        throw NumericError("sam_step: non-finite ascent gradient");
    }
    double norm_sq = 0.0;
    for (double g : ascent.grad) norm_sq += g * g;
    trace.grad_norm = std::sqrt(norm_sq);
    trace.p = std::move(ascent.p_true);

    std::span<double> theta = params.flat();
    std::vector<double> saved;
    const bool perturb = rho > 0.0 && trace.grad_norm > 0.0;
    if (perturb) {
        saved.assign(theta.begin(), theta.end());
        const std::vector<double> tilde = ascent_point(saved, ascent.grad, rho);
        std::copy(tilde.begin(), tilde.end(), theta.begin());
        trace.eps_norm = rho;
    }

    BatchGrad descent = batch_gradient(params, batch_x, batch_y, outer, probe);
    if (perturb) {
        std::copy(saved.begin(), saved.end(), theta.begin());
    }
    trace.p_tilde = std::move(descent.p_true);
    if (!std::isfinite(descent.loss)) {
        throw NumericError("sam_step: non-finite descent loss");
    }
    sgd_step(theta, descent.grad, state, lr, momentum, weight_decay);
    return trace;
}

TrainResult train(const MlpSpec& spec, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& config) {
    spec.validate();
    config.validate();
    train_set.validate();
    if (train_set.dim() != spec.input_dim() ||
        train_set.num_classes > static_cast<int>(spec.num_classes())) {
        throw ConfigError("train: dataset does not match model spec");
    }

    TrainResult result{ModelParams::init(spec), {}, {}, TrainStatus::ok};
    const std::size_t n = train_set.n();
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    const std::size_t steps_per_epoch = (n + bs - 1) / bs;
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(config.epochs);
    SgdState state;
    std::size_t step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const OptimizerKind active =
            (config.switch_epoch && epoch >= *config.switch_epoch) ? *config.switch_to
                                                                   : config.optimizer;
        const LossKind outer = active == OptimizerKind::csam
                                   ? LossKind::csam_outer(config.gamma)
                                   : LossKind::cross_entropy();
        // batch schedule is a pure function of (seed, epoch)
        Rng shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
        const auto perm = shuffle_rng.permutation(n);

        double epoch_lr = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t begin = 0; begin < n; begin += bs) {
            const std::size_t end = std::min(begin + bs, n);
            const std::span<const std::size_t> idx(&perm[begin], end - begin);
            Tensor xb = select_rows(train_set.features, idx);
            std::vector<int> yb(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = train_set.labels[idx[i]];

            const double lr = config.lr_schedule == LrSchedule::cosine
                                  ? cosine_lr(step, total_steps, config.lr, config.lr_min)
                                  : config.lr;
            if (std::isnan(epoch_lr)) epoch_lr = lr;

            try {
                if (active == OptimizerKind::sgd) {
                    BatchGrad g = batch_gradient(result.params, xb, yb,
                                                 LossKind::cross_entropy(), false);
                    if (!std::isfinite(g.loss)) throw NumericError("non-finite loss");
                    sgd_step(result.params.flat(), g.grad, state, lr, config.momentum,
                             config.weight_decay);
                } else {
                    SamStepTrace trace =
                        sam_step(result.params, xb, yb, outer, config.rho, lr,
                                 config.momentum, config.weight_decay, state, config.probe);
                    trace.step = step;
                    if (config.probe) result.probes.push_back(std::move(trace));
                }
            } catch (const NumericError&) {
                result.status = TrainStatus::diverged;
                return result;
            }
            ++step;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = epoch_lr;
        {
            PredictionSet train_preds = predict(result.params, train_set);
            rec.train_loss = nll(train_preds);
        }
        if (val_set) {
            PredictionSet val_preds = predict(result.params, *val_set);
            rec.val_loss = nll(val_preds);
            rec.val_acc = accuracy(val_preds);
        } else {
            rec.val_loss = std::numeric_limits<double>::quiet_NaN();
            rec.val_acc = std::numeric_limits<double>::quiet_NaN();
        }
        result.log.push_back(rec);
        if (!std::isfinite(rec.train_loss)) {
            result.status = TrainStatus::diverged;
            return result;
        }
    }
    return result;
}

std::vector<TrainResult> train_ensemble(const MlpSpec& spec, const Dataset& train_set,
                                        const Dataset* val_set, const TrainConfig& config,
                                        int n_members) {
    if (n_members < 1) throw ConfigError("train_ensemble: need n_members >= 1");
    std::vector<TrainResult> members;
    members.reserve(static_cast<std::size_t>(n_members));
    for (int i = 0; i < n_members; ++i) {
        MlpSpec member_spec = spec;
        member_spec.seed = spec.seed + static_cast<std::uint64_t>(i);
        TrainConfig member_config = config;
        member_config.seed = config.seed + static_cast<std::uint64_t>(i);
        members.push_back(train(member_spec, train_set, val_set, member_config));
    }
    return members;
}

PredictionSet predict(const ModelParams& params, const Dataset& ds) {
    PredictionSet preds;
    preds.logits = forward(params, ds.features);
    preds.probs = softmax(preds.logits);
    preds.labels = ds.labels;
    return preds;
}

PredictionSet ensemble_predict(const std::vector<ModelParams>& members, const Dataset& ds) {
    if (members.empty()) throw ConfigError("ensemble_predict: no members");
    for (const auto& m : members) {
        // members may differ in init seed but must share the architecture
        if (m.spec().layer_sizes != members[0].spec().layer_sizes) {
            throw ConfigError("ensemble_predict: members disagree on model shape");
        }
    }
    std::vector<PredictionSet> sets;
    sets.reserve(members.size());
    for (const auto& m : members) sets.push_back(predict(m, ds));
    return average_probs(sets);
}

} // namespace samlab
