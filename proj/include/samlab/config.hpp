#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "samlab/datagen.hpp"
#include "samlab/optimizers.hpp"

namespace samlab {

/// TOML-style document: [section] headers over key = value lines, where a
/// value is a quoted string, number, boolean, or flat array. Comments start
/// with '#'. Covers what experiment recipes need; not a full TOML parser.
class ConfigDoc {
public:
    using Value = std::variant<std::string, double, bool, std::vector<double>,
                               std::vector<std::string>>;

    static ConfigDoc parse_file(const std::filesystem::path& path);
    static ConfigDoc parse_string(const std::string& text, const std::string& origin);

    bool has(const std::string& section, const std::string& key) const;
    bool has_section(const std::string& section) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    double get_number(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    std::vector<double> get_numbers(const std::string& section, const std::string& key) const;
    std::vector<std::string> get_strings(const std::string& section, const std::string& key) const;

    std::string get_string_or(const std::string& section, const std::string& key,
                              std::string fallback) const;
    double get_number_or(const std::string& section, const std::string& key,
                         double fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key,
                     bool fallback) const;

    const std::string& text() const { return text_; }

private:
    std::map<std::string, std::map<std::string, Value>> sections_;
    std::string origin_;
    std::string text_;

    const Value& lookup(const std::string& section, const std::string& key) const;
};

enum class DataKind { blobs, two_moons, csv };

struct DataConfig {
    DataKind kind = DataKind::blobs;
    int k = 2;
    int d = 2;
    int n = 100;
    double overlap = 0.5;
    double label_noise = 0.0;
    double noise_sd = 0.1; // two_moons
    std::uint64_t seed = 0;
    SplitFractions fractions;
    std::filesystem::path dir; // csv source or gen-data target
};

struct ModelConfig {
    std::vector<std::size_t> layers;
    std::uint64_t seed = 0;
};

struct EvalConfig {
    int bins = 15;
};

enum class PosthocMethod { none, temperature, isotonic };

struct PosthocConfig {
    PosthocMethod method = PosthocMethod::none;
};

struct SweepConfig {
    std::string param; // rho | gamma | switch_epoch
    std::vector<double> values;
    int seeds = 1;
};

struct EnsembleConfig {
    int n = 1;
};

struct ShiftConfig {
    std::vector<ShiftSpec> specs;
    std::uint64_t seed = 0;
};

/// Declarative experiment recipe; every section validates before any work
/// starts.
struct ExperimentConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
    PosthocConfig posthoc;
    EnsembleConfig ensemble;
    std::optional<SweepConfig> sweep;
    std::optional<ShiftConfig> shift;
    std::string source_text;

    static ExperimentConfig load(const std::filesystem::path& path);
    static ExperimentConfig from_doc(const ConfigDoc& doc);
    void validate() const;

    MlpSpec mlp_spec() const;
    /// Generates (or reads) the configured dataset and splits it.
    Splits materialize_data() const;
};

ShiftKind shift_kind_from_string(const std::string& s);
const char* to_string(ShiftKind kind);

} // namespace samlab
