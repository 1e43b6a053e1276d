#include "samlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "samlab/errors.hpp"

namespace samlab {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), static_cast<std::size_t>(1),
                           std::multiplies<>());
}

std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> s)
    : shape(std::move(s)), data(shape_product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_product(shape)) {
        throw ConfigError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    }
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
        throw ConfigError("matmul shape mismatch: " + shape_str(a.shape) + " x " +
                          shape_str(b.shape));
    }
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &a.data[i * k];
        double* crow = &c.data[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = &b.data[p * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor log_softmax(const Tensor& logits) {
    if (logits.shape.size() != 2 || logits.shape[1] < 2) {
        throw ConfigError("log_softmax expects [m x K] with K >= 2, got " +
                          shape_str(logits.shape));
    }
    const std::size_t m = logits.shape[0], k = logits.shape[1];
    Tensor out({m, k});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = &logits.data[i * k];
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < k; ++j) out.data[i * k + j] = row[j] - lse;
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    Tensor out = log_softmax(logits);
    for (double& v : out.data) v = std::exp(v);
    return out;
}

Tape::NodeId Tape::leaf(Tensor value) {
    nodes_.push_back({"leaf", {}, std::move(value), nullptr});
    return nodes_.size() - 1;
}

Tape::NodeId Tape::custom(const char* op, std::vector<NodeId> inputs, Tensor value,
                          BackwardFn backward) {
    for (NodeId in : inputs) {
        if (in >= nodes_.size()) {
            throw ConfigError(std::string(op) + ": input node id out of range");
        }
    }
    nodes_.push_back({op, std::move(inputs), std::move(value), std::move(backward)});
    return nodes_.size() - 1;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    Tensor c = samlab::matmul(value(a), value(b));
    return custom("matmul", {a, b}, std::move(c), [](Tape& t, NodeId self) {
        const NodeId a = t.inputs(self)[0], b = t.inputs(self)[1];
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        const Tensor& g = t.grad(self);
        const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
        Tensor& ga = t.grad_mut(a); // dA = G * B^T
        for (std::size_t i = 0; i < m; ++i) {
            const double* grow = &g.data[i * n];
            double* garow = &ga.data[i * k];
            for (std::size_t p = 0; p < k; ++p) {
                const double* brow = &bv.data[p * n];
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                garow[p] += acc;
            }
        }
        Tensor& gb = t.grad_mut(b); // dB = A^T * G
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = &av.data[i * k];
            const double* grow = &g.data[i * n];
            for (std::size_t p = 0; p < k; ++p) {
                const double av_ip = arow[p];
                double* gbrow = &gb.data[p * n];
                for (std::size_t j = 0; j < n; ++j) gbrow[j] += av_ip * grow[j];
            }
        }
    });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) {
        throw ConfigError("add: operand shapes disagree");
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    return custom("add", {a, b}, std::move(out), [](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        for (NodeId in : t.inputs(self)) {
            Tensor& gi = t.grad_mut(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi.data[i] += g.data[i];
        }
    });
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) {
        throw ConfigError("mul: operand shapes disagree");
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    return custom("mul", {a, b}, std::move(out), [](Tape& t, NodeId self) {
        const NodeId a = t.inputs(self)[0], b = t.inputs(self)[1];
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        Tensor& ga = t.grad_mut(a);
        Tensor& gb = t.grad_mut(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.data[i] += g.data[i] * bv.data[i];
            gb.data[i] += g.data[i] * av.data[i];
        }
    });
}

Tape::NodeId Tape::relu(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return custom("relu", {a}, std::move(out), [](Tape& t, NodeId self) {
        const NodeId a = t.inputs(self)[0];
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(a);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av.data[i] > 0.0) ga.data[i] += g.data[i];
        }
    });
}

Tape::NodeId Tape::scale(NodeId a, double factor) {
    Tensor out = value(a);
    for (double& v : out.data) v *= factor;
    return custom("scale", {a}, std::move(out), [factor](Tape& t, NodeId self) {
        const NodeId a = t.inputs(self)[0];
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += factor * g.data[i];
    });
}

Tape::NodeId Tape::add_row_vector(NodeId a, NodeId v) {
    const Tensor& av = value(a);
    const Tensor& vv = value(v);
    if (av.shape.size() != 2 || vv.size() != av.shape[1]) {
        throw ConfigError("add_row_vector: expected [m x n] + [n]");
    }
    const std::size_t m = av.shape[0], n = av.shape[1];
    Tensor out = av;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += vv.data[j];
    return custom("add_row_vector", {a, v}, std::move(out), [](Tape& t, NodeId self) {
        const NodeId a = t.inputs(self)[0], v = t.inputs(self)[1];
        const Tensor& g = t.grad(self);
        const std::size_t m = g.shape[0], n = g.shape[1];
        Tensor& ga = t.grad_mut(a);
        Tensor& gv = t.grad_mut(v);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gv.data[j] += g.data[i * n + j];
    });
}

Tape::NodeId Tape::log_softmax(NodeId a) {
    Tensor out = samlab::log_softmax(value(a));
    return custom("log_softmax", {a}, std::move(out), [](Tape& t, NodeId self) {
        // dx = g - softmax(x) * rowsum(g)
        const NodeId a = t.inputs(self)[0];
        const Tensor& g = t.grad(self);
        const Tensor& lsm = t.value(self);
        const std::size_t m = g.shape[0], k = g.shape[1];
        Tensor& ga = t.grad_mut(a);
        for (std::size_t i = 0; i < m; ++i) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < k; ++j) gsum += g.data[i * k + j];
            for (std::size_t j = 0; j < k; ++j) {
                const double p = std::exp(lsm.data[i * k + j]);
                ga.data[i * k + j] += g.data[i * k + j] - p * gsum;
            }
        }
    });
}

Tape::NodeId Tape::mean_all(NodeId a) {
    const Tensor& av = value(a);
    if (av.empty()) throw ConfigError("mean_all: empty tensor");
    double s = 0.0;
    for (double v : av.data) s += v;
    const double inv = 1.0 / static_cast<double>(av.size());
    return custom("mean_all", {a}, Tensor::scalar(s * inv), [inv](Tape& t, NodeId self) {
        const NodeId a = t.inputs(self)[0];
        const double g = t.grad(self).data[0];
        Tensor& ga = t.grad_mut(a);
        for (double& v : ga.data) v += g * inv;
    });
}

void Tape::backward(NodeId root) {
    if (root >= nodes_.size()) throw ConfigError("backward: root id out of range");
    if (nodes_[root].value.size() != 1) {
        throw ConfigError("backward: root must be scalar, has " +
                          std::to_string(nodes_[root].value.size()) + " entries");
    }
    grads_.clear();
    grads_.reserve(nodes_.size());
    for (const Node& n : nodes_) grads_.push_back(Tensor::zeros(n.value.shape));
    grads_[root].data[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
        if (nodes_[i].backward) nodes_[i].backward(*this, i);
    }
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  const std::function<std::vector<double>(std::span<const double>)>& analytic_grad,
                  std::span<const double> params, double h) {
    if (h <= 0.0) throw ConfigError("grad_check: step h must be positive");
    std::vector<double> p(params.begin(), params.end());
    const std::vector<double> analytic = analytic_grad(p);
    if (analytic.size() != p.size()) {
        throw ConfigError("grad_check: gradient length does not match parameter count");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + h;
        const double fp = f(p);
        p[i] = saved - h;
        const double fm = f(p);
        p[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("grad_check: non-finite function value");
        }
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace samlab
