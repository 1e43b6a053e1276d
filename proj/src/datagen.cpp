#include "samlab/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "samlab/errors.hpp"
#include "samlab/rng.hpp"

namespace samlab {

namespace {

void write_row(std::ofstream& out, const double* vals, std::size_t d, int label) {
    char buf[64];
    for (std::size_t j = 0; j < d; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", vals[j]);
        out << buf << ',';
    }
    out << label << '\n';
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
        throw ParseError(where + ": cannot parse number '" + s + "'");
    }
    return v;
}

int parse_label(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') {
        throw ParseError(where + ": cannot parse label '" + s + "'");
    }
    return static_cast<int>(v);
}

struct CsvTable {
    std::size_t width = 0;
    std::vector<double> values; // row-major, width-1 numeric columns
    std::vector<int> labels;
};

// Shared reader for the f*/l* + label layouts.
CsvTable read_table(const std::filesystem::path& path, const std::string& col_prefix) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open csv: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    const auto header = split_fields(line);
    if (header.size() < 2 || header.back() != "label") {
        throw ParseError(path.string() + ": expected last header column 'label'");
    }
    for (std::size_t j = 0; j + 1 < header.size(); ++j) {
        const std::string want = col_prefix + std::to_string(j);
        if (header[j] != want) {
            throw ParseError(path.string() + ": expected header column '" + want +
                             "', found '" + header[j] + "'");
        }
    }
    CsvTable table;
    table.width = header.size();
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        const std::string where = path.string() + " row " + std::to_string(row);
        if (fields.size() != table.width) {
            throw ParseError(where + ": expected " + std::to_string(table.width) +
                             " fields, found " + std::to_string(fields.size()));
        }
        for (std::size_t j = 0; j + 1 < fields.size(); ++j) {
            table.values.push_back(parse_double(fields[j], where));
        }
        table.labels.push_back(parse_label(fields.back(), where));
    }
    if (table.labels.empty()) throw ParseError(path.string() + ": no data rows");
    return table;
}

} // namespace

void Dataset::validate() const {
    if (features.shape.size() != 2 || features.rows() == 0) {
        throw ConfigError("dataset: features must be non-empty [n x d]");
    }
    if (labels.size() != n()) throw ConfigError("dataset: labels length != n");
    if (num_classes < 2) throw ConfigError("dataset: need at least 2 classes");
    for (int y : labels) {
        if (y < 0 || y >= num_classes) {
            throw ConfigError("dataset: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes) + ")");
        }
    }
    if (!features.all_finite()) throw ConfigError("dataset: non-finite feature");
}

Dataset gen_blobs(int k, int d, int n, double class_overlap, double label_noise,
                  std::uint64_t seed) {
    if (k < 2 || d < 1 || n < 1) throw ConfigError("gen_blobs: need K >= 2, d >= 1, n >= 1");
    if (class_overlap < 0.0) throw ConfigError("gen_blobs: overlap must be >= 0");
    if (label_noise < 0.0 || label_noise >= 0.5) {
        throw ConfigError("gen_blobs: label_noise must lie in [0, 0.5)");
    }
    Rng rng(seed);
    // class means: random directions on the unit sphere
    std::vector<double> means(static_cast<std::size_t>(k) * d);
    for (int c = 0; c < k; ++c) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (int j = 0; j < d; ++j) {
                const double v = rng.normal();
                means[static_cast<std::size_t>(c) * d + j] = v;
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (int j = 0; j < d; ++j) means[static_cast<std::size_t>(c) * d + j] /= norm;
    }
    Dataset ds;
    ds.features = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(d)});
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.num_classes = k;
    ds.name = "blobs";
    ds.seed = seed;
    for (int i = 0; i < n; ++i) {
        const int c = i % k;
        for (int j = 0; j < d; ++j) {
            ds.features.data[static_cast<std::size_t>(i) * d + j] =
                means[static_cast<std::size_t>(c) * d + j] + class_overlap * rng.normal();
        }
        int label = c;
        if (label_noise > 0.0 && rng.uniform() < label_noise) {
            label = static_cast<int>(rng.integer(static_cast<std::uint64_t>(k)));
        }
        ds.labels[static_cast<std::size_t>(i)] = label;
    }
    return ds;
}

Dataset gen_two_moons(int n, double noise_sd, std::uint64_t seed) {
    if (n < 2) throw ConfigError("gen_two_moons: need n >= 2");
    if (noise_sd < 0.0) throw ConfigError("gen_two_moons: noise_sd must be >= 0");
    Rng rng(seed);
    const int n0 = (n + 1) / 2;
    const int n1 = n - n0;
    Dataset ds;
    ds.features = Tensor({static_cast<std::size_t>(n), 2});
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.num_classes = 2;
    ds.name = "two_moons";
    ds.seed = seed;
    auto put = [&](int i, double x, double y, int label) {
        ds.features.data[static_cast<std::size_t>(i) * 2] = x + noise_sd * rng.normal();
        ds.features.data[static_cast<std::size_t>(i) * 2 + 1] = y + noise_sd * rng.normal();
        ds.labels[static_cast<std::size_t>(i)] = label;
    };
    for (int i = 0; i < n0; ++i) {
        const double t = n0 > 1 ? std::numbers::pi * i / (n0 - 1) : 0.0;
        put(i, std::cos(t), std::sin(t), 0);
    }
    for (int i = 0; i < n1; ++i) {
        const double t = n1 > 1 ? std::numbers::pi * i / (n1 - 1) : 0.0;
        put(n0 + i, 1.0 - std::cos(t), 0.5 - std::sin(t), 1);
    }
    return ds;
}

void ShiftSpec::validate() const {
    if (severity < 1 || severity > 5) {
        throw ConfigError("shift: severity must lie in [1, 5]");
    }
}

std::string ShiftSpec::to_string() const {
    const char* name = kind == ShiftKind::gaussian_noise  ? "gaussian_noise"
                       : kind == ShiftKind::feature_scale ? "feature_scale"
                                                          : "feature_rotate";
    return std::string(name) + "@" + std::to_string(severity);
}

Dataset apply_shift(const Dataset& ds, const ShiftSpec& spec, std::uint64_t seed) {
    spec.validate();
    ds.validate();
    Dataset out = ds;
    out.name = ds.name + "+" + spec.to_string();
    const double s = static_cast<double>(spec.severity);
    switch (spec.kind) {
    case ShiftKind::gaussian_noise: {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(spec.severity)));
        const double sigma = 0.1 * s;
        for (double& v : out.features.data) v += sigma * rng.normal();
        break;
    }
    case ShiftKind::feature_scale: {
        const double factor = 1.0 + 0.15 * s;
        for (double& v : out.features.data) v *= factor;
        break;
    }
    case ShiftKind::feature_rotate: {
        if (ds.dim() < 2) throw ConfigError("feature_rotate: needs d >= 2");
        const double angle = s * 9.0 * std::numbers::pi / 180.0;
        const double c = std::cos(angle), sn = std::sin(angle);
        const std::size_t d = ds.dim();
        for (std::size_t i = 0; i < ds.n(); ++i) {
            double& x = out.features.data[i * d];
            double& y = out.features.data[i * d + 1];
            const double nx = c * x - sn * y;
            const double ny = sn * x + c * y;
            x = nx;
            y = ny;
        }
        break;
    }
    }
    return out;
}

Splits split(const Dataset& ds, const SplitFractions& fr, std::uint64_t seed) {
    ds.validate();
    if (fr.train <= 0.0 || fr.val <= 0.0 || fr.test <= 0.0 ||
        std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) {
        throw ConfigError("split: fractions must be positive and sum to 1");
    }
    const std::size_t n = ds.n();
    const std::size_t n_train = static_cast<std::size_t>(fr.train * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(fr.val * static_cast<double>(n));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
        throw ConfigError("split: a split would be empty for n = " + std::to_string(n));
    }
    Rng rng(seed);
    const auto perm = rng.permutation(n);
    const std::size_t d = ds.dim();
    auto take = [&](std::size_t begin, std::size_t end, const std::string& tag) {
        Dataset part;
        part.features = Tensor({end - begin, d});
        part.labels.reserve(end - begin);
        part.num_classes = ds.num_classes;
        part.name = ds.name + "/" + tag;
        part.seed = ds.seed;
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t src = perm[i];
            std::copy_n(&ds.features.data[src * d], d,
                        &part.features.data[(i - begin) * d]);
            part.labels.push_back(ds.labels[src]);
        }
        return part;
    };
    Splits out;
    out.train = take(0, n_train, "train");
    out.val = take(n_train, n_train + n_val, "val");
    out.test = take(n_train + n_val, n, "test");
    return out;
}

void write_csv_dataset(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    const std::size_t d = ds.dim();
    for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
    out << "label\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        write_row(out, &ds.features.data[i * d], d, ds.labels[i]);
    }
}

Dataset read_csv_dataset(const std::filesystem::path& path) {
    CsvTable table = read_table(path, "f");
    Dataset ds;
    const std::size_t d = table.width - 1;
    const std::size_t n = table.labels.size();
    ds.features = Tensor({n, d}, std::move(table.values));
    ds.labels = std::move(table.labels);
    int max_label = 0;
    for (int y : ds.labels) {
        if (y < 0) throw ParseError(path.string() + ": negative label");
        max_label = std::max(max_label, y);
    }
    ds.num_classes = std::max(2, max_label + 1);
    ds.name = path.stem().string();
    ds.validate();
    return ds;
}

PredictionSet read_logits_csv(const std::filesystem::path& path) {
    CsvTable table = read_table(path, "l");
    const std::size_t k = table.width - 1;
    const std::size_t n = table.labels.size();
    if (k < 2) throw ParseError(path.string() + ": need at least two logit columns");
    PredictionSet preds;
    preds.logits = Tensor({n, k}, std::move(table.values));
    preds.probs = softmax(preds.logits);
    preds.labels = std::move(table.labels);
    preds.validate();
    return preds;
}

void write_logits_csv(const PredictionSet& preds, const std::filesystem::path& path) {
    if (!preds.has_logits()) throw ConfigError("write_logits_csv: logits absent");
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path.string());
    const std::size_t k = preds.num_classes();
    for (std::size_t j = 0; j < k; ++j) out << 'l' << j << ',';
    out << "label\n";
    for (std::size_t i = 0; i < preds.n(); ++i) {
        write_row(out, &preds.logits.data[i * k], k, preds.labels[i]);
    }
}

} // namespace samlab
