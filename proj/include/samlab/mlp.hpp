#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "samlab/tensor.hpp"

namespace samlab {

/// Fully-connected ReLU classifier: affine layers with ReLU between them and
/// a linear (logit) head. layer_sizes = [d_in, h1, ..., K].
struct MlpSpec {
    std::vector<std::size_t> layer_sizes;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t num_classes() const { return layer_sizes.back(); }
    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    std::size_t param_count() const;
    bool operator==(const MlpSpec&) const = default;
};

/// Layer weights [out x in] and biases [out], stored as one flat vector so
/// optimizers can treat the model as a point in R^d. Structured and flat
/// views alias the same storage.
class ModelParams {
public:
    explicit ModelParams(MlpSpec spec); // all zeros

    /// He-style uniform init: W ~ U(-sqrt(6/in), sqrt(6/in)), b = 0,
    /// driven by spec.seed.
    static ModelParams init(const MlpSpec& spec);

    const MlpSpec& spec() const { return spec_; }
    std::size_t dim() const { return flat_.size(); }
    std::span<double> flat() { return flat_; }
    std::span<const double> flat() const { return flat_; }

    std::size_t num_layers() const { return spec_.num_layers(); }
    std::size_t layer_out(std::size_t l) const { return spec_.layer_sizes[l + 1]; }
    std::size_t layer_in(std::size_t l) const { return spec_.layer_sizes[l]; }
    std::span<const double> weight(std::size_t l) const;
    std::span<double> weight(std::size_t l);
    std::span<const double> bias(std::size_t l) const;
    std::span<double> bias(std::size_t l);

    Tensor weight_tensor(std::size_t l) const;
    Tensor bias_tensor(std::size_t l) const;

    /// Checkpoint JSON: {"layer_sizes": [...], "activation": "relu",
    /// "seed": n, "layers": [{"w": [...], "b": [...]}, ...]}. Doubles are
    /// serialized in shortest round-trip form, so save/load is lossless.
    void save(const std::filesystem::path& path) const;
    static ModelParams load(const std::filesystem::path& path,
                            const MlpSpec* expect = nullptr);

private:
    MlpSpec spec_;
    std::vector<double> flat_;
    struct Offsets {
        std::size_t w;
        std::size_t b;
    };
    std::vector<Offsets> offsets_;
};

/// Tape-free forward pass; batch is [m x d_in], result [m x K] logits.
Tensor forward(const ModelParams& params, const Tensor& batch);

/// Forward pass recorded on a tape. Returns the logits node and the leaf ids
/// of every weight/bias so gradients can be gathered back into flat order.
struct TapedMlp {
    std::vector<Tape::NodeId> weights;
    std::vector<Tape::NodeId> biases;
    Tape::NodeId logits;
};
TapedMlp forward_on_tape(Tape& tape, const ModelParams& params, const Tensor& batch);

/// Collects d(root)/d(params) into flat layout after tape.backward().
std::vector<double> flat_gradient(const Tape& tape, const TapedMlp& taped,
                                  const ModelParams& params);

} // namespace samlab
