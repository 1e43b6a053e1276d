#include "samlab/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "samlab/errors.hpp"
#include "samlab/rng.hpp"

namespace samlab {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// strips a trailing comment that is not inside a quoted string
std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

bool parse_number(const std::string& s, double& out) {
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end != s.c_str() && *end == '\0';
}

ConfigDoc::Value parse_scalar(const std::string& raw, const std::string& where) {
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
        return raw.substr(1, raw.size() - 2);
    }
    if (raw == "true") return true;
    if (raw == "false") return false;
    double num = 0.0;
    if (parse_number(raw, num)) return num;
    throw ParseError(where + ": cannot parse value '" + raw + "'");
}

ConfigDoc::Value parse_value(const std::string& raw, const std::string& where) {
    if (!raw.empty() && raw.front() == '[') {
        if (raw.back() != ']') throw ParseError(where + ": unterminated array");
        std::vector<std::string> items;
        std::string body = raw.substr(1, raw.size() - 2);
        std::string cur;
        bool in_string = false;
        for (char c : body) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                items.push_back(trim(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!trim(cur).empty()) items.push_back(trim(cur));
        std::vector<double> nums;
        std::vector<std::string> strs;
        bool numeric = true;
        for (const std::string& item : items) {
            ConfigDoc::Value v = parse_scalar(item, where);
            if (std::holds_alternative<double>(v)) {
                nums.push_back(std::get<double>(v));
            } else if (std::holds_alternative<std::string>(v)) {
                numeric = false;
                strs.push_back(std::get<std::string>(v));
            } else {
                throw ParseError(where + ": arrays may hold numbers or strings");
            }
        }
        if (!numeric && !nums.empty()) {
            throw ParseError(where + ": arrays must be homogeneous");
        }
        if (numeric) return nums;
        return strs;
    }
    return parse_scalar(raw, where);
}

} // namespace

ConfigDoc ConfigDoc::parse_string(const std::string& text, const std::string& origin) {
    ConfigDoc doc;
    doc.origin_ = origin;
    doc.text_ = text;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno);
        std::string s = trim(strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ParseError(where + ": malformed section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) throw ParseError(where + ": empty section name");
            doc.sections_[section]; // sections may be empty
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) {
            throw ParseError(where + ": expected 'key = value'");
        }
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ParseError(where + ": expected 'key = value'");
        }
        if (section.empty()) {
            throw ParseError(where + ": key outside any [section]");
        }
        doc.sections_[section][key] = parse_value(value, where);
    }
    return doc;
}

ConfigDoc ConfigDoc::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path.string());
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
}

bool ConfigDoc::has_section(const std::string& section) const {
    return sections_.count(section) > 0;
}

const ConfigDoc::Value& ConfigDoc::lookup(const std::string& section,
                                          const std::string& key) const {
    auto it = sections_.find(section);
    if (it == sections_.end() || it->second.count(key) == 0) {
        throw ConfigError(origin_ + ": missing " + section + "." + key);
    }
    return it->second.at(key);
}

std::string ConfigDoc::get_string(const std::string& section, const std::string& key) const {
    const Value& v = lookup(section, key);
    if (!std::holds_alternative<std::string>(v)) {
        throw ConfigError(origin_ + ": " + section + "." + key + " must be a string");
    }
    return std::get<std::string>(v);
}

double ConfigDoc::get_number(const std::string& section, const std::string& key) const {
    const Value& v = lookup(section, key);
    if (!std::holds_alternative<double>(v)) {
        throw ConfigError(origin_ + ": " + section + "." + key + " must be a number");
    }
    return std::get<double>(v);
}

bool ConfigDoc::get_bool(const std::string& section, const std::string& key) const {
    const Value& v = lookup(section, key);
    if (!std::holds_alternative<bool>(v)) {
        throw ConfigError(origin_ + ": " + section + "." + key + " must be a boolean");
    }
    return std::get<bool>(v);
}

std::vector<double> ConfigDoc::get_numbers(const std::string& section,
                                           const std::string& key) const {
    const Value& v = lookup(section, key);
    if (std::holds_alternative<std::vector<double>>(v)) {
        return std::get<std::vector<double>>(v);
    }
    if (std::holds_alternative<double>(v)) return {std::get<double>(v)};
    throw ConfigError(origin_ + ": " + section + "." + key + " must be a number array");
}

std::vector<std::string> ConfigDoc::get_strings(const std::string& section,
                                                const std::string& key) const {
    const Value& v = lookup(section, key);
    if (std::holds_alternative<std::vector<std::string>>(v)) {
        return std::get<std::vector<std::string>>(v);
    }
    if (std::holds_alternative<std::string>(v)) return {std::get<std::string>(v)};
    throw ConfigError(origin_ + ": " + section + "." + key + " must be a string array");
}

std::string ConfigDoc::get_string_or(const std::string& section, const std::string& key,
                                     std::string fallback) const {
    return has(section, key) ? get_string(section, key) : std::move(fallback);
}

double ConfigDoc::get_number_or(const std::string& section, const std::string& key,
                                double fallback) const {
    return has(section, key) ? get_number(section, key) : fallback;
}

bool ConfigDoc::get_bool_or(const std::string& section, const std::string& key,
                            bool fallback) const {
    return has(section, key) ? get_bool(section, key) : fallback;
}

ShiftKind shift_kind_from_string(const std::string& s) {
    if (s == "gaussian_noise") return ShiftKind::gaussian_noise;
    if (s == "feature_scale") return ShiftKind::feature_scale;
    if (s == "feature_rotate") return ShiftKind::feature_rotate;
    throw ConfigError("unknown shift kind '" + s + "'");
}

const char* to_string(ShiftKind kind) {
    switch (kind) {
    case ShiftKind::gaussian_noise: return "gaussian_noise";
    case ShiftKind::feature_scale: return "feature_scale";
    case ShiftKind::feature_rotate: return "feature_rotate";
    }
    return "?";
}

namespace {

int as_int(double v, const std::string& what) {
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) {
        throw ConfigError(what + " must be an integer");
    }
    return i;
}

LrSchedule schedule_from_string(const std::string& s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "cosine") return LrSchedule::cosine;
    throw ConfigError("unknown lr_schedule '" + s + "' (expected constant|cosine)");
}

} // namespace

ExperimentConfig ExperimentConfig::from_doc(const ConfigDoc& doc) {
    ExperimentConfig cfg;
    cfg.source_text = doc.text();

    const std::string kind = doc.get_string_or("data", "kind", "blobs");
    if (kind == "blobs") {
        cfg.data.kind = DataKind::blobs;
    } else if (kind == "two_moons") {
        cfg.data.kind = DataKind::two_moons;
    } else if (kind == "csv") {
        cfg.data.kind = DataKind::csv;
    } else {
        throw ConfigError("data.kind '" + kind + "' (expected blobs|two_moons|csv)");
    }
    cfg.data.k = as_int(doc.get_number_or("data", "k", 2), "data.k");
    cfg.data.d = as_int(doc.get_number_or("data", "d", 2), "data.d");
    cfg.data.n = as_int(doc.get_number_or("data", "n", 100), "data.n");
    cfg.data.overlap = doc.get_number_or("data", "overlap", 0.5);
    cfg.data.label_noise = doc.get_number_or("data", "label_noise", 0.0);
    cfg.data.noise_sd = doc.get_number_or("data", "noise_sd", 0.1);
    cfg.data.seed = static_cast<std::uint64_t>(doc.get_number_or("data", "seed", 0));
    cfg.data.fractions.train = doc.get_number_or("data", "train_frac", 0.8);
    cfg.data.fractions.val = doc.get_number_or("data", "val_frac", 0.1);
    cfg.data.fractions.test = doc.get_number_or("data", "test_frac", 0.1);
    if (doc.has("data", "dir")) cfg.data.dir = doc.get_string("data", "dir");

    if (doc.has("model", "layers")) {
        for (double v : doc.get_numbers("model", "layers")) {
            cfg.model.layers.push_back(
                static_cast<std::size_t>(as_int(v, "model.layers entry")));
        }
    }
    cfg.model.seed = static_cast<std::uint64_t>(doc.get_number_or("model", "seed", 0));

    cfg.train.optimizer = optimizer_from_string(doc.get_string_or("train", "optimizer", "sgd"));
    cfg.train.lr = doc.get_number_or("train", "lr", 0.1);
    cfg.train.momentum = doc.get_number_or("train", "momentum", 0.0);
    cfg.train.weight_decay = doc.get_number_or("train", "weight_decay", 0.0);
    cfg.train.rho = doc.get_number_or("train", "rho", 0.0);
    cfg.train.gamma = doc.get_number_or("train", "gamma", 0.0);
    cfg.train.epochs = as_int(doc.get_number_or("train", "epochs", 1), "train.epochs");
    cfg.train.batch_size =
        as_int(doc.get_number_or("train", "batch_size", 32), "train.batch_size");
    cfg.train.seed = static_cast<std::uint64_t>(doc.get_number_or("train", "seed", 0));
    cfg.train.lr_schedule =
        schedule_from_string(doc.get_string_or("train", "lr_schedule", "constant"));
    cfg.train.lr_min = doc.get_number_or("train", "lr_min", 0.0);
    if (doc.has("train", "switch_epoch")) {
        cfg.train.switch_epoch =
            as_int(doc.get_number("train", "switch_epoch"), "train.switch_epoch");
        cfg.train.switch_to =
            optimizer_from_string(doc.get_string("train", "switch_to"));
    }
    cfg.train.probe = doc.get_bool_or("train", "probe", false);

    cfg.eval.bins = as_int(doc.get_number_or("eval", "bins", 15), "eval.bins");

    const std::string method = doc.get_string_or("posthoc", "method", "none");
    if (method == "none") {
        cfg.posthoc.method = PosthocMethod::none;
    } else if (method == "temperature") {
        cfg.posthoc.method = PosthocMethod::temperature;
    } else if (method == "isotonic") {
        cfg.posthoc.method = PosthocMethod::isotonic;
    } else {
        throw ConfigError("posthoc.method '" + method +
                          "' (expected none|temperature|isotonic)");
    }

    cfg.ensemble.n = as_int(doc.get_number_or("ensemble", "n", 1), "ensemble.n");

    if (doc.has_section("sweep")) {
        SweepConfig sweep;
        sweep.param = doc.get_string("sweep", "param");
        sweep.values = doc.get_numbers("sweep", "values");
        sweep.seeds = as_int(doc.get_number_or("sweep", "seeds", 1), "sweep.seeds");
        cfg.sweep = std::move(sweep);
    }

    if (doc.has_section("shift")) {
        ShiftConfig shift;
        shift.seed = static_cast<std::uint64_t>(doc.get_number_or("shift", "seed", 0));
        std::vector<int> severities;
        if (doc.has("shift", "severities")) {
            for (double v : doc.get_numbers("shift", "severities")) {
                severities.push_back(as_int(v, "shift.severities entry"));
            }
        } else {
            severities = {1, 2, 3, 4, 5};
        }
        for (const std::string& k : doc.get_strings("shift", "kinds")) {
            for (int s : severities) {
                shift.specs.push_back({shift_kind_from_string(k), s});
            }
        }
        cfg.shift = std::move(shift);
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    return from_doc(ConfigDoc::parse_file(path));
}

void ExperimentConfig::validate() const {
    if (data.kind != DataKind::csv) {
        if (data.n < 1) throw ConfigError("data.n must be >= 1");
        if (data.kind == DataKind::blobs) {
            if (data.k < 2) throw ConfigError("data.k must be >= 2");
            if (data.d < 1) throw ConfigError("data.d must be >= 1");
            if (data.overlap < 0.0) throw ConfigError("data.overlap must be >= 0");
            if (data.label_noise < 0.0 || data.label_noise >= 0.5) {
                throw ConfigError("data.label_noise must lie in [0, 0.5)");
            }
        } else if (data.noise_sd < 0.0) {
            throw ConfigError("data.noise_sd must be >= 0");
        }
        const auto& fr = data.fractions;
        if (fr.train <= 0.0 || fr.val <= 0.0 || fr.test <= 0.0 ||
            std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) {
            throw ConfigError("data fractions must be positive and sum to 1");
        }
    } else if (data.dir.empty()) {
        throw ConfigError("data.kind = csv requires data.dir");
    }
    if (!model.layers.empty()) mlp_spec().validate();
    train.validate();
    if (eval.bins < 1) throw ConfigError("eval.bins must be >= 1");
    if (ensemble.n < 1) throw ConfigError("ensemble.n must be >= 1");
    if (sweep) {
        if (sweep->param != "rho" && sweep->param != "gamma" &&
            sweep->param != "switch_epoch") {
            throw ConfigError("sweep.param must be rho|gamma|switch_epoch");
        }
        if (sweep->values.empty()) throw ConfigError("sweep.values must be non-empty");
        if (sweep->seeds < 1) throw ConfigError("sweep.seeds must be >= 1");
        for (double v : sweep->values) {
            if (sweep->param == "rho" && v < 0.0) {
                throw ConfigError("sweep rho values must be >= 0");
            }
            if (sweep->param == "gamma" && (v < 0.0 || v > 2.0)) {
                throw ConfigError("sweep gamma values must lie in [0, 2]");
            }
            if (sweep->param == "switch_epoch" &&
                (v < 0.0 || v >= static_cast<double>(train.epochs))) {
                throw ConfigError("sweep switch_epoch values must lie in [0, epochs)");
            }
        }
    }
    if (shift) {
        for (const ShiftSpec& s : shift->specs) s.validate();
    }
}

MlpSpec ExperimentConfig::mlp_spec() const {
    if (model.layers.empty()) throw ConfigError("model.layers missing");
    MlpSpec spec;
    spec.layer_sizes = model.layers;
    spec.seed = model.seed;
    return spec;
}

Splits ExperimentConfig::materialize_data() const {
    if (data.kind == DataKind::csv) {
        Splits out;
        out.train = read_csv_dataset(data.dir / "train.csv");
        out.val = read_csv_dataset(data.dir / "val.csv");
        out.test = read_csv_dataset(data.dir / "test.csv");
        const int k = std::max({out.train.num_classes, out.val.num_classes,
                                out.test.num_classes});
        out.train.num_classes = out.val.num_classes = out.test.num_classes = k;
        return out;
    }
    Dataset full = data.kind == DataKind::blobs
                       ? gen_blobs(data.k, data.d, data.n, data.overlap,
                                   data.label_noise, data.seed)
                       : gen_two_moons(data.n, data.noise_sd, data.seed);
    return split(full, data.fractions, mix_seed(data.seed, 0x5eed));
}

} // namespace samlab
