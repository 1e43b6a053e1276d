#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "samlab/datagen.hpp"
#include "samlab/losses.hpp"
#include "samlab/metrics.hpp"
#include "samlab/mlp.hpp"

namespace samlab {

enum class OptimizerKind { sgd, sam, csam };
enum class LrSchedule { constant, cosine };

const char* to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::sgd;
    double lr = 0.1;          // eta_0
    double momentum = 0.0;    // in [0, 1)
    double weight_decay = 0.0;
    double rho = 0.0;         // perturbation radius (sam/csam)
    double gamma = 0.0;       // csam outer-loss damping, in [0, 2]
    int epochs = 1;
    int batch_size = 32;
    std::uint64_t seed = 0;
    LrSchedule lr_schedule = LrSchedule::constant;
    double lr_min = 0.0;      // cosine floor
    std::optional<int> switch_epoch;         // epochs >= switch_epoch use switch_to
    std::optional<OptimizerKind> switch_to;
    bool probe = false;       // record per-step (p, p_tilde) traces

    void validate() const;
};

/// Momentum buffer; one velocity entry per parameter.
struct SgdState {
    std::vector<double> velocity;
};

/// v <- mu v + (g + wd * theta); theta <- theta - lr * v.
/// Weight decay is the coupled L2 form. Aborts on non-finite gradients.
void sgd_step(std::span<double> params, std::span<const double> grads, SgdState& state,
              double lr, double momentum, double weight_decay);

/// eta_min + (eta0 - eta_min) (1 + cos(pi t / T)) / 2 for t in [0, T].
double cosine_lr(std::size_t t, std::size_t total_steps, double lr0, double lr_min);

/// One two-pass step: ascent gradient norm, realized perturbation norm, and
/// (when probing) the per-example true-label probabilities at the current and
/// perturbed weights.
struct SamStepTrace {
    std::size_t step = 0;
    double grad_norm = 0.0;
    double eps_norm = 0.0;
    std::vector<double> p;
    std::vector<double> p_tilde;
};

/// theta + rho * grad / ||grad||_2 over the flattened parameter vector;
/// returns theta unchanged when the gradient vanishes or rho = 0.
std::vector<double> ascent_point(std::span<const double> theta,
                                 std::span<const double> grad, double rho);

/// Sharpness-aware step on one mini-batch:
///   g1 = grad of mean cross-entropy at theta (raw loss, no decay/momentum);
///   theta~ = ascent_point(theta, g1, rho);
///   g2 = grad of `outer` loss at theta~;
///   sgd_step(theta, g2).
/// With rho = 0 this reproduces sgd_step on the same batch bit for bit.
SamStepTrace sam_step(ModelParams& params, const Tensor& batch_x,
                      const std::vector<int>& batch_y, LossKind outer, double rho,
                      double lr, double momentum, double weight_decay, SgdState& state,
                      bool probe);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0; // NaN when no validation split
    double val_acc = 0.0;
};

enum class TrainStatus { ok, diverged };

struct TrainResult {
    ModelParams params;
    std::vector<EpochRecord> log;
    std::vector<SamStepTrace> probes;
    TrainStatus status = TrainStatus::ok;
};

/// Mini-batch training with a seeded per-epoch shuffle. The optimizer for
/// epoch e is config.optimizer while e < switch_epoch and switch_to after.
/// Divergence (non-finite loss) stops training and returns the partial log.
TrainResult train(const MlpSpec& spec, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& config);

/// Independent members with spec.seed + i and config.seed + i.
std::vector<TrainResult> train_ensemble(const MlpSpec& spec, const Dataset& train_set,
                                        const Dataset* val_set, const TrainConfig& config,
                                        int n_members);

/// Full forward pass over a dataset; probs = softmax(logits), logits kept.
PredictionSet predict(const ModelParams& params, const Dataset& ds);

/// Arithmetic mean of member softmax probabilities.
PredictionSet ensemble_predict(const std::vector<ModelParams>& members, const Dataset& ds);

} // namespace samlab
