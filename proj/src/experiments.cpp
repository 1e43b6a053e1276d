#include "samlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "samlab/errors.hpp"
#include "samlab/posthoc.hpp"
#include "samlab/rng.hpp"

namespace samlab {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << text;
}

void copy_config(const ExperimentConfig& cfg, const fs::path& out_dir) {
    if (!cfg.source_text.empty()) {
        write_text(out_dir / "config.toml", cfg.source_text);
    }
}

std::string json_number_field(double v) {
    // metrics may legitimately be NaN (e.g. no validation split)
    return std::isfinite(v) ? nlohmann::json(v).dump() : "null";
}

} // namespace

void write_metrics_json(const PredictionSet& preds, int bins, const fs::path& path,
                        const std::vector<std::pair<std::string, double>>& extra) {
    preds.validate();
    nlohmann::ordered_json j;
    j["acc"] = accuracy(preds);
    j["ece"] = ece(preds, bins).value;
    // equal-mass bins need n >= M; smaller splits record the metric as absent
    if (preds.n() >= static_cast<std::size_t>(bins)) {
        j["ada_ece"] = ada_ece(preds, bins).value;
    } else {
        j["ada_ece"] = nullptr;
    }
    j["classwise_ece"] = classwise_ece(preds, bins);
    j["nll"] = nll(preds);
    j["auroc_misclass"] = auroc_misclassification(preds);
    j["n"] = preds.n();
    j["M"] = bins;
    for (const auto& [key, value] : extra) j[key] = value;
    write_text(path, j.dump(2) + "\n");
}

void write_train_log_jsonl(const std::vector<EpochRecord>& log, const fs::path& path) {
    std::ostringstream out;
    for (const EpochRecord& rec : log) {
        out << "{\"epoch\":" << rec.epoch << ",\"lr\":" << json_number_field(rec.lr)
            << ",\"train_loss\":" << json_number_field(rec.train_loss)
            << ",\"val_loss\":" << json_number_field(rec.val_loss)
            << ",\"val_acc\":" << json_number_field(rec.val_acc) << "}\n";
    }
    write_text(path, out.str());
}

namespace {

// clamped log-space geometric mean; probes from saturated softmax rows can
// carry exact 0/1 probabilities
double probe_geo_mean(const std::vector<double>& values) {
    double log_sum = 0.0;
    for (double v : values) log_sum += std::log(std::clamp(v, 1e-12, 1.0 - 1e-12));
    return std::exp(log_sum / static_cast<double>(values.size()));
}

} // namespace

std::vector<ProbePair> probe_pairs(const std::vector<SamStepTrace>& probes) {
    std::vector<ProbePair> pairs;
    pairs.reserve(probes.size());
    for (const SamStepTrace& t : probes) {
        if (t.p.empty() || t.p_tilde.empty()) continue;
        pairs.push_back({probe_geo_mean(t.p), probe_geo_mean(t.p_tilde)});
    }
    return pairs;
}

void write_probe_csv(const std::vector<SamStepTrace>& probes, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    out << "step,p_y,p_tilde_y,grad_norm\n";
    char buf[160];
    for (const SamStepTrace& t : probes) {
        if (t.p.empty() || t.p_tilde.empty()) continue;
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", t.step,
                      probe_geo_mean(t.p), probe_geo_mean(t.p_tilde), t.grad_norm);
        out << buf;
    }
}

std::vector<ProbePair> read_probe_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open probe csv: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("step,p_y,p_tilde_y", 0) != 0) {
        throw ParseError(path.string() + ": expected header step,p_y,p_tilde_y,grad_norm");
    }
    std::vector<ProbePair> pairs;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        double step = 0.0, p = 0.0, pt = 0.0, gn = 0.0;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &step, &p, &pt, &gn) != 4) {
            throw ParseError(path.string() + " row " + std::to_string(row) +
                             ": expected 4 numeric fields");
        }
        pairs.push_back({p, pt});
    }
    return pairs;
}

int cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out_dir) {
    if (cfg.data.kind == DataKind::csv) {
        throw ConfigError("gen-data: data.kind = csv has nothing to generate");
    }
    const Splits splits = cfg.materialize_data();
    ensure_dir(out_dir);
    copy_config(cfg, out_dir);
    write_csv_dataset(splits.train, out_dir / "train.csv");
    write_csv_dataset(splits.val, out_dir / "val.csv");
    write_csv_dataset(splits.test, out_dir / "test.csv");
    return exit_code::ok;
}

int cmd_train(const ExperimentConfig& cfg, const fs::path& out_dir,
              std::optional<std::uint64_t> seed_override, bool probe) {
    MlpSpec spec = cfg.mlp_spec();
    TrainConfig train_cfg = cfg.train;
    if (seed_override) {
        train_cfg.seed = *seed_override;
        spec.seed = *seed_override;
    }
    if (probe) train_cfg.probe = true;

    const Splits splits = cfg.materialize_data();
    if (splits.train.dim() != spec.input_dim()) {
        throw ConfigError("model input dim " + std::to_string(spec.input_dim()) +
                          " does not match data dim " + std::to_string(splits.train.dim()));
    }
    ensure_dir(out_dir);
    copy_config(cfg, out_dir);

    const auto eval_and_write = [&](const PredictionSet& preds, const std::string& name) {
        write_metrics_json(preds, cfg.eval.bins, out_dir / ("metrics_" + name + ".json"));
        write_reliability_csv(reliability_data(preds, cfg.eval.bins),
                              out_dir / ("reliability_" + name + ".csv"));
    };

    if (cfg.ensemble.n == 1) {
        TrainResult result = train(spec, splits.train, &splits.val, train_cfg);
        write_train_log_jsonl(result.log, out_dir / "train_log.jsonl");
        if (train_cfg.probe) write_probe_csv(result.probes, out_dir / "probe.csv");
        result.params.save(out_dir / "checkpoint.json");
        if (result.status == TrainStatus::diverged) {
            std::cerr << "training diverged; partial manifest written to " << out_dir
                      << "\n";
            return exit_code::divergence;
        }
        eval_and_write(predict(result.params, splits.train), "train");
        eval_and_write(predict(result.params, splits.val), "val");
        eval_and_write(predict(result.params, splits.test), "test");
        return exit_code::ok;
    }

    const std::vector<TrainResult> members =
        train_ensemble(spec, splits.train, &splits.val, train_cfg, cfg.ensemble.n);
    std::vector<ModelParams> params;
    bool diverged = false;
    for (std::size_t i = 0; i < members.size(); ++i) {
        members[i].params.save(out_dir / ("checkpoint_" + std::to_string(i) + ".json"));
        write_train_log_jsonl(members[i].log,
                              out_dir / ("train_log_" + std::to_string(i) + ".jsonl"));
        diverged = diverged || members[i].status == TrainStatus::diverged;
        params.push_back(members[i].params);
    }
    if (diverged) {
        std::cerr << "an ensemble member diverged; partial manifest written\n";
        return exit_code::divergence;
    }
    eval_and_write(ensemble_predict(params, splits.train), "train");
    eval_and_write(ensemble_predict(params, splits.val), "val");
    eval_and_write(ensemble_predict(params, splits.test), "test");
    return exit_code::ok;
}

int cmd_evaluate(const EvaluateArgs& args, const fs::path& out_dir) {
    if (args.bins < 1) throw ConfigError("evaluate: bins must be >= 1");
    ensure_dir(out_dir);

    if (!args.logits_csv.empty()) {
        if (!args.checkpoints.empty()) {
            throw ConfigError("evaluate: pass either checkpoints or a logits csv, not both");
        }
        const PredictionSet preds = read_logits_csv(args.logits_csv);
        write_metrics_json(preds, args.bins,
                           out_dir / ("metrics_" + args.split_name + ".json"));
        write_reliability_csv(reliability_data(preds, args.bins),
                              out_dir / ("reliability_" + args.split_name + ".csv"));
        return exit_code::ok;
    }

    if (args.checkpoints.empty()) {
        throw ConfigError("evaluate: need at least one checkpoint or a logits csv");
    }
    const Dataset clean = read_csv_dataset(args.data_csv);
    std::vector<ModelParams> members;
    for (const fs::path& p : args.checkpoints) members.push_back(ModelParams::load(p));
    const auto predict_on = [&](const Dataset& ds) {
        return members.size() == 1 ? predict(members[0], ds)
                                   : ensemble_predict(members, ds);
    };

    const PredictionSet clean_preds = predict_on(clean);
    write_metrics_json(clean_preds, args.bins,
                       out_dir / ("metrics_" + args.split_name + ".json"));
    write_reliability_csv(reliability_data(clean_preds, args.bins),
                          out_dir / ("reliability_" + args.split_name + ".csv"));

    for (const ShiftSpec& spec : args.shifts) {
        const Dataset shifted = apply_shift(clean, spec, args.shift_seed);
        const PredictionSet preds = predict_on(shifted);
        const std::string name = args.split_name + "_" + spec.to_string();
        write_metrics_json(preds, args.bins, out_dir / ("metrics_" + name + ".json"),
                           {{"auroc_ood", auroc_ood(clean_preds, preds)}});
        write_reliability_csv(reliability_data(preds, args.bins),
                              out_dir / ("reliability_" + name + ".csv"));
    }
    return exit_code::ok;
}

int cmd_calibrate(const CalibrateArgs& args, const fs::path& out_dir) {
    PredictionSet val_preds, test_preds;
    if (!args.val_logits_csv.empty() || !args.test_logits_csv.empty()) {
        if (args.val_logits_csv.empty() || args.test_logits_csv.empty()) {
            throw ConfigError("calibrate: need both val and test logits csvs");
        }
        val_preds = read_logits_csv(args.val_logits_csv);
        test_preds = read_logits_csv(args.test_logits_csv);
    } else {
        const ModelParams params = ModelParams::load(args.checkpoint);
        val_preds = predict(params, read_csv_dataset(args.val_csv));
        test_preds = predict(params, read_csv_dataset(args.test_csv));
    }
    ensure_dir(out_dir);

    const double ece_pre = ece(test_preds, args.bins).value;
    const double nll_pre = nll(test_preds);
    const double acc_pre = accuracy(test_preds);

    nlohmann::ordered_json report;
    PredictionSet post;
    if (args.method == PosthocMethod::temperature) {
        if (!val_preds.has_logits()) {
            throw ConfigError("calibrate: temperature scaling needs logits");
        }
        const TemperatureModel model = fit_temperature(val_preds);
        save_calibrator(model, out_dir / "calibrator.json");
        post = apply_temperature(test_preds, model);
        report["method"] = "temperature";
        report["T"] = model.temperature;
    } else if (args.method == PosthocMethod::isotonic) {
        const IsotonicModel model = fit_isotonic(val_preds);
        save_calibrator(model, out_dir / "calibrator.json");
        post = apply_isotonic(test_preds, model);
        report["method"] = "isotonic";
    } else {
        throw ConfigError("calibrate: method must be temperature or isotonic");
    }

    const double ece_post = ece(post, args.bins).value;
    report["ece_pre"] = ece_pre;
    report["ece_post"] = ece_post;
    if (args.method == PosthocMethod::temperature) report["tce"] = ece_post;
    report["nll_pre"] = nll_pre;
    report["nll_post"] = nll(post);
    report["acc_pre"] = acc_pre;
    report["acc_post"] = accuracy(post);
    report["n"] = test_preds.n();
    report["M"] = args.bins;
    write_text(out_dir / "calibration_report.json", report.dump(2) + "\n");
    return exit_code::ok;
}

int cmd_theory(const TheoryArgs& args, const fs::path& out_dir) {
    ensure_dir(out_dir);

    const SuiteReport single = run_entropy_bound_suite(args.samples, args.seed);
    const SuiteReport damped = run_damped_bound_suite(args.samples, mix_seed(args.seed, 1));
    const BatchSuiteReport batch =
        run_batch_bound_suite(args.batch_samples, 16, mix_seed(args.seed, 2));

    // the checker must be falsifiable: a pair with p_tilde > p has to fail
    const BoundCheck vacuity_probe = check_entropy_bound({0.5, 0.9});

    const std::vector<LambdaPoint> landscape = lambda_landscape();
    const bool monotone = lambda_landscape_monotone(landscape);
    write_lambda_csv(landscape, out_dir / "lambda_landscape.csv");

    const auto suite_json = [](const SuiteReport& r) {
        nlohmann::ordered_json j;
        j["samples"] = r.samples;
        j["violations"] = r.violations;
        j["min_slack"] = r.min_slack;
        if (!r.examples.empty()) {
            auto offenders = nlohmann::ordered_json::array();
            for (const ViolationExample& v : r.examples) {
                offenders.push_back({{"p", v.pair.p},
                                     {"p_tilde", v.pair.p_tilde},
                                     {"gamma", v.gamma},
                                     {"slack", v.slack}});
                std::cerr << "violation: p=" << v.pair.p << " p_tilde=" << v.pair.p_tilde
                          << " gamma=" << v.gamma << " slack=" << v.slack << "\n";
            }
            j["offending_inputs"] = std::move(offenders);
        }
        return j;
    };
    nlohmann::ordered_json j;
    j["entropy_bound"] = suite_json(single);
    j["damped_entropy_bound"] = suite_json(damped);
    j["entropy_bound_batch"] = suite_json(batch.bound);
    j["entropy_bound_batch"]["max_identity_error"] = batch.max_identity_error;
    j["non_vacuity_probe"] = {{"p", 0.5}, {"p_tilde", 0.9},
                              {"holds", vacuity_probe.holds},
                              {"out_of_region", true}};
    j["lambda_landscape"] = {{"points", landscape.size()}, {"monotone", monotone}};

    bool violated = single.violations > 0 || damped.violations > 0 ||
                    batch.bound.violations > 0 || !monotone || vacuity_probe.holds ||
                    batch.max_identity_error > 1e-10;

    if (!args.probe_csv.empty()) {
        const std::vector<ProbePair> pairs = read_probe_csv(args.probe_csv);
        const ConfidenceDecayReport decay =
            confidence_decay_report(pairs, args.probe_rho, args.window_start_frac);
        nlohmann::ordered_json d;
        d["steps"] = decay.steps;
        d["window_begin"] = decay.window_begin;
        d["frac_decrease"] = decay.frac_decrease;
        d["frac_half_rho"] = decay.frac_half_rho;
        d["log_ratio_margin_quantiles"] = decay.log_ratio_margin_quantiles;
        d["rho"] = args.probe_rho;
        // diagnostic only: out-of-region steps never fail the command
        j["confidence_decay"] = std::move(d);
    }

    write_text(out_dir / "theory_checks.json", j.dump(2) + "\n");
    if (violated) {
        std::cerr << "inequality violations found; see "
                  << (out_dir / "theory_checks.json") << "\n";
        return exit_code::theory_violation;
    }
    return exit_code::ok;
}

int cmd_sweep(const ExperimentConfig& cfg, const fs::path& out_dir) {
    if (!cfg.sweep) throw ConfigError("sweep: config has no [sweep] section");
    const SweepConfig& sweep = *cfg.sweep;
    const Splits splits = cfg.materialize_data();
    const MlpSpec base_spec = cfg.mlp_spec();

    ensure_dir(out_dir);
    copy_config(cfg, out_dir);
    std::ostringstream csv;
    csv << "param,seed,test_acc,ece,nll,mean_h_py,status\n";
    char buf[256];

    for (double value : sweep.values) {
        for (int s = 0; s < sweep.seeds; ++s) {
            MlpSpec spec = base_spec;
            spec.seed = base_spec.seed + static_cast<std::uint64_t>(s);
            TrainConfig train_cfg = cfg.train;
            train_cfg.seed = cfg.train.seed + static_cast<std::uint64_t>(s);
            if (sweep.param == "rho") {
                train_cfg.rho = value;
            } else if (sweep.param == "gamma") {
                train_cfg.gamma = value;
            } else {
                train_cfg.switch_epoch = static_cast<int>(value);
                if (!train_cfg.switch_to) {
                    throw ConfigError("sweep over switch_epoch needs train.switch_to");
                }
            }
            std::string status = "ok";
            double acc = std::nan(""), e = std::nan(""), loss = std::nan(""),
                   h = std::nan("");
            try {
                const TrainResult result = train(spec, splits.train, nullptr, train_cfg);
                if (result.status == TrainStatus::diverged) {
                    status = "diverged";
                } else {
                    const PredictionSet preds = predict(result.params, splits.test);
                    acc = accuracy(preds);
                    e = ece(preds, cfg.eval.bins).value;
                    loss = nll(preds);
                    const EntropyValues ent = predictive_entropy(preds.probs, preds.labels);
                    double sum = 0.0;
                    for (double v : ent.true_label) sum += v;
                    h = sum / static_cast<double>(ent.true_label.size());
                }
            } catch (const std::exception& ex) {
                std::cerr << "sweep point " << value << " seed " << s
                          << " failed: " << ex.what() << "\n";
                status = "failed";
            }
            std::snprintf(buf, sizeof(buf), "%.17g,%d,%.17g,%.17g,%.17g,%.17g,%s\n", value,
                          s, acc, e, loss, h, status.c_str());
            csv << buf;
        }
    }
    write_text(out_dir / "sweep.csv", csv.str());
    return exit_code::ok;
}

} // namespace samlab
