#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "samlab/metrics.hpp"
#include "samlab/tensor.hpp"

namespace samlab {

struct Dataset {
    Tensor features; // [n x d]
    std::vector<int> labels;
    int num_classes = 0;
    std::string name;
    std::uint64_t seed = 0;

    std::size_t n() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    void validate() const;
};

/// K Gaussian clusters with means on the unit sphere and shared isotropic
/// standard deviation `class_overlap`; labels resampled uniformly over all K
/// classes with probability `label_noise`.
Dataset gen_blobs(int k, int d, int n, double class_overlap, double label_noise,
                  std::uint64_t seed);

/// Two interleaved half-circles in the plane plus isotropic Gaussian noise.
/// Class counts differ by at most one.
Dataset gen_two_moons(int n, double noise_sd, std::uint64_t seed);

enum class ShiftKind { gaussian_noise, feature_scale, feature_rotate };

struct ShiftSpec {
    ShiftKind kind = ShiftKind::gaussian_noise;
    int severity = 1; // 1..5

    void validate() const;
    std::string to_string() const;
};

/// Graded corruption: gaussian_noise adds N(0, (0.1 s)^2), feature_scale
/// multiplies by (1 + 0.15 s), feature_rotate turns the first two coordinates
/// by 9 degrees per severity step. Labels and sample count are untouched.
Dataset apply_shift(const Dataset& ds, const ShiftSpec& spec, std::uint64_t seed);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct Splits {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Seeded permutation followed by contiguous slicing; the three parts are
/// disjoint and exhaustive.
Splits split(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed);

/// Dataset CSV: header f0,...,f{d-1},label; one row per sample; doubles at
/// full round-trip precision.
void write_csv_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_csv_dataset(const std::filesystem::path& path);

/// Logits CSV: header l0,...,l{K-1},label. Probabilities are the softmax of
/// the stored logits.
PredictionSet read_logits_csv(const std::filesystem::path& path);
void write_logits_csv(const PredictionSet& preds, const std::filesystem::path& path);

} // namespace samlab
