// samlab: train small classifiers with sgd/sam/csam, measure calibration,
// fit post-hoc calibrators, and verify the entropy-regularization bounds.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "samlab/errors.hpp"
#include "samlab/experiments.hpp"

namespace {

samlab::ShiftSpec parse_shift(const std::string& text) {
    const std::size_t at = text.find('@');
    if (at == std::string::npos) {
        throw samlab::ConfigError("shift must look like kind@severity, got '" + text + "'");
    }
    samlab::ShiftSpec spec;
    spec.kind = samlab::shift_kind_from_string(text.substr(0, at));
    spec.severity = std::stoi(text.substr(at + 1));
    spec.validate();
    return spec;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"training and calibration laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed_override;
    bool probe = false;

    auto* gen = app.add_subcommand("gen-data", "generate dataset CSVs");
    gen->add_option("--config", config_path, "experiment config")->required();
    gen->add_option("--out", out_dir, "output directory");

    auto* train = app.add_subcommand("train", "train a model (or ensemble)");
    train->add_option("--config", config_path, "experiment config")->required();
    train->add_option("--out", out_dir, "output directory");
    std::uint64_t seed_value = 0;
    auto* seed_opt = train->add_option("--seed", seed_value, "override config seeds");
    train->add_flag("--probe", probe, "record per-step (p, p_tilde) traces");

    samlab::EvaluateArgs eval_args;
    std::vector<std::string> shift_texts;
    auto* eval = app.add_subcommand("evaluate", "metrics for a checkpoint on a dataset");
    eval->add_option("--checkpoint", eval_args.checkpoints,
                     "checkpoint JSON (repeat for ensemble averaging)");
    eval->add_option("--data", eval_args.data_csv, "dataset CSV");
    eval->add_option("--logits", eval_args.logits_csv, "externally produced logits CSV");
    eval->add_option("--bins", eval_args.bins, "ECE bin count");
    eval->add_option("--name", eval_args.split_name, "split label used in filenames");
    eval->add_option("--shift", shift_texts, "evaluate under kind@severity (repeatable)");
    eval->add_option("--shift-seed", eval_args.shift_seed, "corruption seed");
    eval->add_option("--out", out_dir, "output directory");

    samlab::CalibrateArgs cal_args;
    std::string method = "temperature";
    auto* cal = app.add_subcommand("calibrate", "fit a post-hoc calibrator on val, report on test");
    cal->add_option("--checkpoint", cal_args.checkpoint, "checkpoint JSON");
    cal->add_option("--val", cal_args.val_csv, "validation dataset CSV");
    cal->add_option("--test", cal_args.test_csv, "test dataset CSV");
    cal->add_option("--val-logits", cal_args.val_logits_csv, "validation logits CSV");
    cal->add_option("--test-logits", cal_args.test_logits_csv, "test logits CSV");
    cal->add_option("--method", method, "temperature|isotonic");
    cal->add_option("--bins", cal_args.bins, "ECE bin count");
    cal->add_option("--out", out_dir, "output directory");

    samlab::TheoryArgs theory_args;
    auto* theory = app.add_subcommand("theory", "run the inequality suites and lambda landscape");
    theory->add_option("--samples", theory_args.samples, "samples per pointwise suite");
    theory->add_option("--batch-samples", theory_args.batch_samples, "batches for the batch suite");
    theory->add_option("--seed", theory_args.seed, "sampler seed");
    theory->add_option("--probe-csv", theory_args.probe_csv, "per-step probe stream to analyze");
    theory->add_option("--rho", theory_args.probe_rho, "rho used for the probe run");
    theory->add_option("--window-start", theory_args.window_start_frac,
                       "fraction of steps to skip before the decay report");
    theory->add_option("--out", out_dir, "output directory");

    auto* sweep = app.add_subcommand("sweep", "one run per (value, seed) of the swept parameter");
    sweep->add_option("--config", config_path, "experiment config")->required();
    sweep->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return samlab::cmd_gen_data(samlab::ExperimentConfig::load(config_path), out_dir);
        }
        if (train->parsed()) {
            if (seed_opt->count() > 0) seed_override = seed_value;
            return samlab::cmd_train(samlab::ExperimentConfig::load(config_path), out_dir,
                                     seed_override, probe);
        }
        if (eval->parsed()) {
            for (const std::string& s : shift_texts) {
                eval_args.shifts.push_back(parse_shift(s));
            }
            return samlab::cmd_evaluate(eval_args, out_dir);
        }
        if (cal->parsed()) {
            if (method == "temperature") {
                cal_args.method = samlab::PosthocMethod::temperature;
            } else if (method == "isotonic") {
                cal_args.method = samlab::PosthocMethod::isotonic;
            } else {
                throw samlab::ConfigError("calibrate: method must be temperature|isotonic");
            }
            return samlab::cmd_calibrate(cal_args, out_dir);
        }
        if (theory->parsed()) {
            return samlab::cmd_theory(theory_args, out_dir);
        }
        if (sweep->parsed()) {
            return samlab::cmd_sweep(samlab::ExperimentConfig::load(config_path), out_dir);
        }
    } catch (const samlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return samlab::exit_code::config;
    } catch (const samlab::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return samlab::exit_code::config;
    } catch (const samlab::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return samlab::exit_code::divergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return samlab::exit_code::runtime;
    }
    return samlab::exit_code::runtime;
}
