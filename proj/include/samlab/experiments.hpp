#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "samlab/config.hpp"
#include "samlab/theory.hpp"

namespace samlab {

/// Process exit codes shared by the CLI and the command implementations.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int runtime = 1;
inline constexpr int config = 2;
inline constexpr int divergence = 3;
inline constexpr int theory_violation = 4;
} // namespace exit_code

/// Writes train/val/test CSVs for a generated dataset config.
int cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Trains (one model or an ensemble), then writes checkpoint(s), the JSONL
/// training log, optional probe CSV, and metrics + reliability files per
/// split. Divergence leaves the partial manifest in place.
int cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
              std::optional<std::uint64_t> seed_override, bool probe);

struct EvaluateArgs {
    std::vector<std::filesystem::path> checkpoints; // >1 means ensemble averaging
    std::filesystem::path data_csv;
    std::filesystem::path logits_csv; // alternative input: externally produced logits
    int bins = 15;
    std::string split_name = "test";
    std::vector<ShiftSpec> shifts;
    std::uint64_t shift_seed = 0;
};

int cmd_evaluate(const EvaluateArgs& args, const std::filesystem::path& out_dir);

struct CalibrateArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path val_csv;
    std::filesystem::path test_csv;
    std::filesystem::path val_logits_csv;  // alternative inputs
    std::filesystem::path test_logits_csv;
    PosthocMethod method = PosthocMethod::temperature;
    int bins = 15;
};

/// Fits the calibrator on the validation split, reports pre/post test
/// metrics (post-temperature ECE labeled tce), writes calibrator JSON.
int cmd_calibrate(const CalibrateArgs& args, const std::filesystem::path& out_dir);

struct TheoryArgs {
    std::size_t samples = 100000;
    std::size_t batch_samples = 10000;
    std::uint64_t seed = 0xC0FFEE;
    std::filesystem::path probe_csv; // optional: per-step probe stream
    double probe_rho = 0.0;
    double window_start_frac = 0.0;
};

/// Runs the inequality suites and the lambda landscape; nonzero exit on any
/// violation beyond tolerance. Probe streams are analyzed diagnostically and
/// never fail the command.
int cmd_theory(const TheoryArgs& args, const std::filesystem::path& out_dir);

/// One run per (sweep value, seed); aggregated CSV columns
/// param,seed,test_acc,ece,nll,mean_h_py,status. Individual failures are
/// marked and the sweep continues.
int cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Probe CSV (step,p_y,p_tilde_y,grad_norm) helpers; rows carry per-step
/// geometric means for batches larger than one.
void write_probe_csv(const std::vector<SamStepTrace>& probes,
                     const std::filesystem::path& path);
std::vector<ProbePair> read_probe_csv(const std::filesystem::path& path);

/// Per-step geometric-mean pairs from raw traces (steps that recorded no
/// probabilities are skipped).
std::vector<ProbePair> probe_pairs(const std::vector<SamStepTrace>& probes);

/// Metrics JSON: {acc, ece, ada_ece, classwise_ece, nll, auroc_misclass, n, M}
/// plus any extra fields handed in (e.g. auroc_ood). Deterministic bytes.
void write_metrics_json(const PredictionSet& preds, int bins,
                        const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, double>>& extra = {});

void write_train_log_jsonl(const std::vector<EpochRecord>& log,
                           const std::filesystem::path& path);

} // namespace samlab
