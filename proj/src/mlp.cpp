#include "samlab/mlp.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "samlab/errors.hpp"
#include "samlab/rng.hpp"

namespace samlab {

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2) {
        throw ConfigError("mlp spec: need at least [d_in, K]");
    }
    for (std::size_t s : layer_sizes) {
        if (s < 1) throw ConfigError("mlp spec: layer sizes must be >= 1");
    }
    if (layer_sizes.back() < 2) {
        throw ConfigError("mlp spec: output classes K must be >= 2");
    }
}

std::size_t MlpSpec::param_count() const {
    std::size_t d = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        d += layer_sizes[l + 1] * layer_sizes[l] + layer_sizes[l + 1];
    }
    return d;
}

ModelParams::ModelParams(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
        const std::size_t out = spec_.layer_sizes[l + 1], in = spec_.layer_sizes[l];
        offsets_.push_back({off, off + out * in});
        off += out * in + out;
    }
    flat_.assign(off, 0.0);
}

ModelParams ModelParams::init(const MlpSpec& spec) {
    ModelParams p(spec);
    Rng rng(spec.seed);
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(p.layer_in(l)));
        for (double& w : p.weight(l)) w = rng.uniform(-bound, bound);
        // biases stay zero
    }
    return p;
}

std::span<const double> ModelParams::weight(std::size_t l) const {
    return {flat_.data() + offsets_[l].w, layer_out(l) * layer_in(l)};
}
std::span<double> ModelParams::weight(std::size_t l) {
    return {flat_.data() + offsets_[l].w, layer_out(l) * layer_in(l)};
}
std::span<const double> ModelParams::bias(std::size_t l) const {
    return {flat_.data() + offsets_[l].b, layer_out(l)};
}
std::span<double> ModelParams::bias(std::size_t l) {
    return {flat_.data() + offsets_[l].b, layer_out(l)};
}

Tensor ModelParams::weight_tensor(std::size_t l) const {
    auto w = weight(l);
    return Tensor({layer_out(l), layer_in(l)}, {w.begin(), w.end()});
}

Tensor ModelParams::bias_tensor(std::size_t l) const {
    auto b = bias(l);
    return Tensor({layer_out(l)}, {b.begin(), b.end()});
}

void ModelParams::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["layer_sizes"] = spec_.layer_sizes;
    j["activation"] = "relu";
    j["seed"] = spec_.seed;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < num_layers(); ++l) {
        nlohmann::ordered_json layer;
        auto w = weight(l);
        auto b = bias(l);
        layer["w"] = std::vector<double>(w.begin(), w.end());
        layer["b"] = std::vector<double>(b.begin(), b.end());
        layers.push_back(std::move(layer));
    }
    j["layers"] = std::move(layers);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open checkpoint for writing: " + path.string());
    out << j.dump(2) << "\n";
}

ModelParams ModelParams::load(const std::filesystem::path& path, const MlpSpec* expect) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path.string() + ": " + e.what());
    }
    try {
        MlpSpec spec;
        spec.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        if (j.at("activation").get<std::string>() != "relu") {
            throw ParseError("checkpoint " + path.string() + ": unsupported activation");
        }
        spec.validate();
        if (expect && !(spec == *expect)) {
            throw ConfigError("checkpoint " + path.string() +
                              " does not match the expected model shape");
        }
        ModelParams p(spec);
        const auto& layers = j.at("layers");
        if (layers.size() != p.num_layers()) {
            throw ParseError("checkpoint " + path.string() + ": expected " +
                             std::to_string(p.num_layers()) + " layers, found " +
                             std::to_string(layers.size()));
        }
        for (std::size_t l = 0; l < p.num_layers(); ++l) {
            const auto w = layers[l].at("w").get<std::vector<double>>();
            const auto b = layers[l].at("b").get<std::vector<double>>();
            if (w.size() != p.weight(l).size() || b.size() != p.bias(l).size()) {
                throw ParseError("checkpoint " + path.string() + ": layer " +
                                 std::to_string(l) + " has wrong element count");
            }
            std::copy(w.begin(), w.end(), p.weight(l).begin());
            std::copy(b.begin(), b.end(), p.bias(l).begin());
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path.string() + ": " + e.what());
    }
}

Tensor forward(const ModelParams& params, const Tensor& batch) {
    if (batch.shape.size() != 2 || batch.shape[1] != params.spec().input_dim()) {
        throw ConfigError("forward: batch features do not match model input dim");
    }
    const std::size_t m = batch.shape[0];
    Tensor x = batch;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const std::size_t out = params.layer_out(l), in = params.layer_in(l);
        auto w = params.weight(l);
        auto b = params.bias(l);
        Tensor y({m, out});
        for (std::size_t i = 0; i < m; ++i) {
            const double* xrow = &x.data[i * in];
            double* yrow = &y.data[i * out];
            for (std::size_t o = 0; o < out; ++o) {
                const double* wrow = &w[o * in];
                double acc = b[o];
                for (std::size_t p = 0; p < in; ++p) acc += xrow[p] * wrow[p];
                yrow[o] = acc;
            }
        }
        if (l + 1 < params.num_layers()) {
            for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        }
        x = std::move(y);
    }
    return x;
}

TapedMlp forward_on_tape(Tape& tape, const ModelParams& params, const Tensor& batch) {
    if (batch.shape.size() != 2 || batch.shape[1] != params.spec().input_dim()) {
        throw ConfigError("forward: batch features do not match model input dim");
    }
    TapedMlp taped;
    Tape::NodeId x = tape.leaf(batch);
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        // x * W^T realized as matmul with the transposed weight copy
        const std::size_t out = params.layer_out(l), in = params.layer_in(l);
        auto w = params.weight(l);
        Tensor wt({in, out});
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t p = 0; p < in; ++p) wt.data[p * out + o] = w[o * in + p];
        Tape::NodeId wn = tape.leaf(std::move(wt));
        Tape::NodeId bn = tape.leaf(params.bias_tensor(l));
        taped.weights.push_back(wn);
        taped.biases.push_back(bn);
        x = tape.add_row_vector(tape.matmul(x, wn), bn);
        if (l + 1 < params.num_layers()) x = tape.relu(x);
    }
    taped.logits = x;
    return taped;
}

std::vector<double> flat_gradient(const Tape& tape, const TapedMlp& taped,
                                  const ModelParams& params) {
    if (!tape.has_grads()) throw ConfigError("flat_gradient: run backward() first");
    std::vector<double> g(params.dim(), 0.0);
    std::size_t off = 0;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const std::size_t out = params.layer_out(l), in = params.layer_in(l);
        const Tensor& gw = tape.grad(taped.weights[l]); // [in x out], transposed layout
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t p = 0; p < in; ++p) g[off + o * in + p] = gw.data[p * out + o];
        off += out * in;
        const Tensor& gb = tape.grad(taped.biases[l]);
        for (std::size_t o = 0; o < out; ++o) g[off + o] = gb.data[o];
        off += out;
    }
    return g;
}

} // namespace samlab
