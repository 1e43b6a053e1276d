#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace samlab {

/// Dense row-major f64 tensor. Rank 0 (scalar), 1, and 2 are what the MLP
/// stack needs; nothing fancier.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    /// Rank-2 accessors; rank-1 tensors behave as a single row.
    std::size_t rows() const { return shape.size() >= 2 ? shape[0] : (shape.empty() ? 0 : 1); }
    std::size_t cols() const { return shape.size() >= 2 ? shape[1] : (shape.empty() ? 0 : shape[0]); }

    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
};

/// Define-by-run reverse-mode tape. Nodes are appended in execution order, so
/// inputs always reference strictly earlier ids; backward() walks the record
/// in reverse and accumulates vector-Jacobian products.
///
/// The tape is rebuilt for every forward pass and is single-threaded;
/// independent tapes never share state.
class Tape {
public:
    using NodeId = std::size_t;
    /// Accumulates d(output)/d(inputs) given this node's id; reads grad(self)
    /// and input values through the tape.
    using BackwardFn = std::function<void(Tape&, NodeId)>;

    NodeId leaf(Tensor value);

    /// [m x k] times [k x n] -> [m x n].
    NodeId matmul(NodeId a, NodeId b);
    /// Elementwise; shapes must agree.
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    /// max(x, 0); subgradient at 0 is 0.
    NodeId relu(NodeId a);
    /// Scalar broadcast multiply.
    NodeId scale(NodeId a, double factor);
    /// [m x n] + row vector [n]; the broadcast the affine layers need.
    NodeId add_row_vector(NodeId a, NodeId v);
    /// Row-wise log-softmax via log-sum-exp with max subtraction.
    NodeId log_softmax(NodeId a);
    /// Mean over every entry -> scalar.
    NodeId mean_all(NodeId a);

    /// Escape hatch for fused ops (the loss kernels live in losses.cpp).
    NodeId custom(const char* op, std::vector<NodeId> inputs, Tensor value, BackwardFn backward);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const std::vector<NodeId>& inputs(NodeId id) const { return nodes_[id].inputs; }
    const char* op_name(NodeId id) const { return nodes_[id].op; }
    std::size_t num_nodes() const { return nodes_.size(); }

    /// Reverse accumulation from a scalar root. Nodes the root does not reach
    /// keep zero gradients.
    void backward(NodeId root);

    const Tensor& grad(NodeId id) const { return grads_[id]; }
    Tensor& grad_mut(NodeId id) { return grads_[id]; }
    bool has_grads() const { return !grads_.empty(); }

private:
    struct Node {
        const char* op;
        std::vector<NodeId> inputs;
        Tensor value;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

/// Pure forward kernels shared by Tape and tape-free evaluation.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor log_softmax(const Tensor& logits);
Tensor softmax(const Tensor& logits);

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// Central differences use step h on each coordinate in turn.
double grad_check(const std::function<double(std::span<const double>)>& f,
                  const std::function<std::vector<double>(std::span<const double>)>& analytic_grad,
                  std::span<const double> params, double h);

} // namespace samlab
