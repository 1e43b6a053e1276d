// Python bindings for the training/calibration core. Arrays cross the
// boundary as numpy float64 / int32; models are opaque handles.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "samlab/config.hpp"
#include "samlab/errors.hpp"
#include "samlab/experiments.hpp"
#include "samlab/losses.hpp"
#include "samlab/metrics.hpp"
#include "samlab/mlp.hpp"
#include "samlab/optimizers.hpp"
#include "samlab/posthoc.hpp"
#include "samlab/theory.hpp"

namespace py = pybind11;
using namespace samlab;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ConfigError("expected a 2-D float array");
    Tensor t({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))});
    std::copy_n(a.data(), t.size(), t.data.data());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    py::array_t<double> a({t.rows(), t.cols()});
    std::copy_n(t.data.data(), t.size(), a.mutable_data());
    return a;
}

std::vector<int> labels_from_array(const py::array_t<int, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw ConfigError("expected a 1-D label array");
    return {a.data(), a.data() + a.shape(0)};
}

Dataset make_dataset(const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                     const py::array_t<int, py::array::c_style | py::array::forcecast>& y,
                     int num_classes) {
    Dataset ds;
    ds.features = tensor_from_array(x);
    ds.labels = labels_from_array(y);
    if (num_classes <= 0) {
        int mx = 1;
        for (int v : ds.labels) mx = std::max(mx, v + 1);
        num_classes = std::max(2, mx);
    }
    ds.num_classes = num_classes;
    ds.name = "array";
    ds.validate();
    return ds;
}

PredictionSet make_predictions(const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
                               const py::array_t<int, py::array::c_style | py::array::forcecast>& labels) {
    PredictionSet preds;
    preds.probs = tensor_from_array(probs);
    preds.labels = labels_from_array(labels);
    preds.validate();
    return preds;
}

TrainConfig config_from_kwargs(const std::string& optimizer, double lr, double momentum,
                               double weight_decay, double rho, double gamma, int epochs,
                               int batch_size, std::uint64_t seed,
                               const std::string& lr_schedule, double lr_min,
                               std::optional<int> switch_epoch,
                               const std::optional<std::string>& switch_to, bool probe) {
    TrainConfig cfg;
    cfg.optimizer = optimizer_from_string(optimizer);
    cfg.lr = lr;
    cfg.momentum = momentum;
    cfg.weight_decay = weight_decay;
    cfg.rho = rho;
    cfg.gamma = gamma;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    cfg.lr_schedule = lr_schedule == "cosine" ? LrSchedule::cosine : LrSchedule::constant;
    cfg.lr_min = lr_min;
    cfg.probe = probe;
    if (switch_epoch) {
        cfg.switch_epoch = *switch_epoch;
        cfg.switch_to = optimizer_from_string(switch_to.value_or("sam"));
    }
    cfg.validate();
    return cfg;
}

py::dict log_to_dict(const TrainResult& result) {
    py::list log;
    for (const EpochRecord& rec : result.log) {
        py::dict d;
        d["epoch"] = rec.epoch;
        d["lr"] = rec.lr;
        d["train_loss"] = rec.train_loss;
        d["val_loss"] = rec.val_loss;
        d["val_acc"] = rec.val_acc;
        log.append(d);
    }
    py::list probes;
    for (const ProbePair& pair : probe_pairs(result.probes)) {
        probes.append(py::make_tuple(pair.p, pair.p_tilde));
    }
    py::dict out;
    out["log"] = log;
    out["probes"] = probes;
    out["status"] = result.status == TrainStatus::ok ? "ok" : "diverged";
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "sharpness-aware training and calibration laboratory";

    py::class_<ModelParams>(m, "Model")
        .def_static(
            "init",
            [](const std::vector<std::size_t>& layers, std::uint64_t seed) {
                MlpSpec spec{layers, seed};
                return ModelParams::init(spec);
            },
            py::arg("layers"), py::arg("seed") = 0)
        .def_property_readonly("layers",
                               [](const ModelParams& p) { return p.spec().layer_sizes; })
        .def_property_readonly("dim", &ModelParams::dim)
        .def(
            "predict",
            [](const ModelParams& p, const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
                Tensor logits = forward(p, tensor_from_array(x));
                return py::make_tuple(array_from_tensor(softmax(logits)),
                                      array_from_tensor(logits));
            },
            py::arg("features"), "returns (probs, logits)")
        .def("save", [](const ModelParams& p, const std::filesystem::path& path) { p.save(path); })
        .def_static("load",
                    [](const std::filesystem::path& path) { return ModelParams::load(path); });

    m.def(
        "train",
        [](const std::vector<std::size_t>& layers, std::uint64_t model_seed,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& y,
           int num_classes, const std::string& optimizer, double lr, double momentum,
           double weight_decay, double rho, double gamma, int epochs, int batch_size,
           std::uint64_t seed, const std::string& lr_schedule, double lr_min,
           std::optional<int> switch_epoch, std::optional<std::string> switch_to,
           bool probe) {
            MlpSpec spec{layers, model_seed};
            const Dataset ds = make_dataset(x, y, num_classes);
            const TrainConfig cfg =
                config_from_kwargs(optimizer, lr, momentum, weight_decay, rho, gamma,
                                   epochs, batch_size, seed, lr_schedule, lr_min,
                                   switch_epoch, switch_to, probe);
            TrainResult result = train(spec, ds, nullptr, cfg);
            return py::make_tuple(std::move(result.params), log_to_dict(result));
        },
        py::arg("layers"), py::arg("model_seed"), py::arg("features"), py::arg("labels"),
        py::arg("num_classes") = 0, py::arg("optimizer") = "sgd", py::arg("lr") = 0.1,
        py::arg("momentum") = 0.0, py::arg("weight_decay") = 0.0, py::arg("rho") = 0.0,
        py::arg("gamma") = 0.0, py::arg("epochs") = 10, py::arg("batch_size") = 32,
        py::arg("seed") = 0, py::arg("lr_schedule") = "constant", py::arg("lr_min") = 0.0,
        py::arg("switch_epoch") = std::nullopt, py::arg("switch_to") = std::nullopt,
        py::arg("probe") = false,
        "train an MLP; returns (model, {'log', 'probes', 'status'})");

    m.def(
        "gen_blobs",
        [](int k, int d, int n, double overlap, double label_noise, std::uint64_t seed) {
            const Dataset ds = gen_blobs(k, d, n, overlap, label_noise, seed);
            py::array_t<int> labels(ds.labels.size());
            std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
            return py::make_tuple(array_from_tensor(ds.features), labels);
        },
        py::arg("k"), py::arg("d"), py::arg("n"), py::arg("overlap") = 0.5,
        py::arg("label_noise") = 0.0, py::arg("seed") = 0);

    m.def(
        "gen_two_moons",
        [](int n, double noise_sd, std::uint64_t seed) {
            const Dataset ds = gen_two_moons(n, noise_sd, seed);
            py::array_t<int> labels(ds.labels.size());
            std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
            return py::make_tuple(array_from_tensor(ds.features), labels);
        },
        py::arg("n"), py::arg("noise_sd") = 0.1, py::arg("seed") = 0);

    m.def(
        "apply_shift",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const std::string& kind, int severity, std::uint64_t seed) {
            Dataset ds;
            ds.features = tensor_from_array(x);
            ds.labels.assign(ds.features.rows(), 0);
            ds.num_classes = 2;
            ShiftSpec spec{shift_kind_from_string(kind), severity};
            return array_from_tensor(apply_shift(ds, spec, seed).features);
        },
        py::arg("features"), py::arg("kind"), py::arg("severity"), py::arg("seed") = 0);

    m.def(
        "ece",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& labels,
           int bins) { return ece(make_predictions(probs, labels), bins).value; },
        py::arg("probs"), py::arg("labels"), py::arg("bins") = 15);

    m.def(
        "ada_ece",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& labels,
           int bins) { return ada_ece(make_predictions(probs, labels), bins).value; },
        py::arg("probs"), py::arg("labels"), py::arg("bins") = 15);

    m.def(
        "classwise_ece",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& labels,
           int bins) { return classwise_ece(make_predictions(probs, labels), bins); },
        py::arg("probs"), py::arg("labels"), py::arg("bins") = 15);

    m.def(
        "nll",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& labels) {
            return nll(make_predictions(probs, labels));
        },
        py::arg("probs"), py::arg("labels"));

    m.def(
        "accuracy",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& labels) {
            return accuracy(make_predictions(probs, labels));
        },
        py::arg("probs"), py::arg("labels"));

    m.def(
        "auroc",
        [](const std::vector<double>& scores, const std::vector<bool>& positives) {
            return auroc(scores, positives);
        },
        py::arg("scores"), py::arg("positives"));

    m.def(
        "reliability",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& labels,
           int bins) {
            const ReliabilityData data =
                reliability_data(make_predictions(probs, labels), bins);
            py::dict out;
            py::list lo, hi, count, conf, acc, gap;
            for (std::size_t i = 0; i < data.stats.bins.size(); ++i) {
                const auto& b = data.stats.bins[i];
                lo.append(b.lo);
                hi.append(b.hi);
                count.append(b.count);
                conf.append(b.avg_conf);
                acc.append(b.avg_acc);
                gap.append(data.gaps[i]);
            }
            out["bin_low"] = lo;
            out["bin_high"] = hi;
            out["count"] = count;
            out["avg_conf"] = conf;
            out["avg_acc"] = acc;
            out["gap"] = gap;
            return out;
        },
        py::arg("probs"), py::arg("labels"), py::arg("bins") = 15);

    m.def(
        "fit_temperature",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& labels) {
            PredictionSet preds;
            preds.logits = tensor_from_array(logits);
            preds.probs = softmax(preds.logits);
            preds.labels = labels_from_array(labels);
            preds.validate();
            return fit_temperature(preds).temperature;
        },
        py::arg("logits"), py::arg("labels"));

    m.def(
        "apply_temperature",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
           double temperature) {
            PredictionSet preds;
            preds.logits = tensor_from_array(logits);
            preds.probs = softmax(preds.logits);
            preds.labels.assign(preds.probs.rows(), 0);
            return array_from_tensor(
                apply_temperature(preds, {temperature, false}).probs);
        },
        py::arg("logits"), py::arg("temperature"));

    m.def(
        "fit_isotonic",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& labels) {
            const IsotonicModel model = fit_isotonic(make_predictions(probs, labels));
            py::array_t<double> bp({model.breakpoints.size(), static_cast<std::size_t>(2)});
            auto view = bp.mutable_unchecked<2>();
            for (std::size_t i = 0; i < model.breakpoints.size(); ++i) {
                view(i, 0) = model.breakpoints[i].first;
                view(i, 1) = model.breakpoints[i].second;
            }
            return bp;
        },
        py::arg("probs"), py::arg("labels"));

    m.def(
        "apply_isotonic",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& probs,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& breakpoints) {
            if (breakpoints.ndim() != 2 || breakpoints.shape(1) != 2) {
                throw ConfigError("breakpoints must be [m x 2]");
            }
            IsotonicModel model;
            auto view = breakpoints.unchecked<2>();
            for (py::ssize_t i = 0; i < breakpoints.shape(0); ++i) {
                model.breakpoints.emplace_back(view(i, 0), view(i, 1));
            }
            PredictionSet preds;
            preds.probs = tensor_from_array(probs);
            preds.labels.assign(preds.probs.rows(), 0);
            return array_from_tensor(apply_isotonic(preds, model).probs);
        },
        py::arg("probs"), py::arg("breakpoints"));

    m.def("binary_entropy", &binary_entropy, py::arg("p"));
    m.def("lambda_of", &lambda_of, py::arg("p"), py::arg("p_tilde"));
    m.def("lambda_lower_bound", &lambda_lower_bound, py::arg("rho"), py::arg("p_tilde"));

    m.def(
        "check_entropy_bound",
        [](double p, double p_tilde) {
            const BoundCheck c = check_entropy_bound({p, p_tilde});
            return py::make_tuple(c.holds, c.slack);
        },
        py::arg("p"), py::arg("p_tilde"), "returns (holds, slack)");

    m.def(
        "check_damped_entropy_bound",
        [](double p, double p_tilde, double gamma) {
            const BoundCheck c = check_damped_entropy_bound({p, p_tilde}, gamma);
            return py::make_tuple(c.holds, c.slack);
        },
        py::arg("p"), py::arg("p_tilde"), py::arg("gamma"));

    m.def(
        "check_entropy_bound_batch",
        [](const std::vector<double>& p, const std::vector<double>& p_tilde) {
            if (p.size() != p_tilde.size()) throw ConfigError("length mismatch");
            std::vector<ProbePair> batch(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) batch[i] = {p[i], p_tilde[i]};
            const BoundCheck c = check_entropy_bound_batch(batch);
            return py::make_tuple(c.holds, c.slack);
        },
        py::arg("p"), py::arg("p_tilde"));

    m.def(
        "run_entropy_bound_suite",
        [](std::size_t n, std::uint64_t seed) {
            const SuiteReport r = run_entropy_bound_suite(n, seed);
            py::dict d;
            d["samples"] = r.samples;
            d["violations"] = r.violations;
            d["min_slack"] = r.min_slack;
            return d;
        },
        py::arg("n") = 100000, py::arg("seed") = 0xC0FFEE);

    m.def(
        "loss_values",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
           const py::array_t<int, py::array::c_style | py::array::forcecast>& labels,
           const std::string& kind, double gamma) {
            LossKind lk = LossKind::cross_entropy();
            if (kind == "focal") lk = LossKind::focal(gamma);
            else if (kind == "csam_outer") lk = LossKind::csam_outer(gamma);
            else if (kind != "cross_entropy") throw ConfigError("unknown loss kind");
            const Tensor lp = log_softmax(tensor_from_array(logits));
            const LossValues v = loss_values(lk, lp, labels_from_array(labels));
            return py::make_tuple(v.mean, v.per_example);
        },
        py::arg("logits"), py::arg("labels"), py::arg("kind") = "cross_entropy",
        py::arg("gamma") = 0.0);

#ifdef VERSION_INFO
    m.attr("__version__") = VERSION_INFO;
#else
    m.attr("__version__") = "dev";
#endif
}
