#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "disbelief/core/error.hpp"
#include "disbelief/core/tensor.hpp"

namespace disbelief {

/// A named trainable array with its accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

    void zero_grad() { grad = Tensor::zeros_like(value); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Gradients of a scalar with respect to the leaves of a graph.
class GradientMap {
public:
    /// Gradient for a leaf; zeros when the leaf was unreachable or constant.
    Tensor of(const Var& leaf) const;

private:
    friend class Graph;
    std::unordered_map<std::size_t, Tensor> grads_;
    const Graph* graph_ = nullptr;
};

/// Tape of primitive operations in topological (creation) order.
///
/// Nodes are appended by the functions in ops.hpp; a node can only reference
/// nodes created before it, so the tape is acyclic by construction.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf that never receives a gradient.
    Var constant(Tensor value) { return push_leaf("constant", std::move(value), false, nullptr); }

    /// Leaf that receives a gradient (visible through GradientMap).
    Var input(Tensor value) { return push_leaf("input", std::move(value), true, nullptr); }

    /// Leaf bound to a parameter. Repeated calls return the same node.
    Var param(Parameter& p) {
        if (auto it = param_leaf_.find(&p); it != param_leaf_.end()) return Var(this, it->second);
        Var v = push_leaf("param", p.value, true, &p);
        param_leaf_.emplace(&p, v.id());
        return v;
    }

    /// Appends a non-leaf node. `inputs` must already exist in the tape.
    Var emit(const char* op, Tensor value, std::initializer_list<std::size_t> inputs, BackwardFn fn) {
        bool needs = false;
        for (std::size_t in : inputs) {
            if (in >= nodes_.size()) throw Error(std::string("node input out of order in op ") + op);
            needs = needs || nodes_[in].requires_grad;
        }
        return push(op, std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, nullptr);
    }

    /// Variant of emit for ops with a runtime number of inputs.
    Var emit(const char* op, Tensor value, const std::vector<std::size_t>& inputs, BackwardFn fn) {
        bool needs = false;
        for (std::size_t in : inputs) {
            if (in >= nodes_.size()) throw Error(std::string("node input out of order in op ") + op);
            needs = needs || nodes_[in].requires_grad;
        }
        return push(op, std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, nullptr);
    }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const char* op_name(std::size_t id) const { return nodes_[id].op; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient buffer of a node during backward.
    const Tensor& grad(std::size_t id) const { return grads_[id]; }

    /// Accumulation target for an input's gradient, or nullptr when that
    /// input does not need one.
    Tensor* grad_target(std::size_t id) {
        if (!nodes_[id].requires_grad) return nullptr;
        Tensor& g = grads_[id];
        if (g.size() != nodes_[id].value.size() || g.shape() != nodes_[id].value.shape())
            g = Tensor::zeros_like(nodes_[id].value);
        return &g;
    }

    /// Reverse-mode sweep from a rank-0 node. Gradients of parameter leaves
    /// are also added into each Parameter::grad.
    GradientMap backward(const Var& out) {
        if (&out.graph() != this) throw Error("backward: variable belongs to another graph");
        const std::size_t root = out.id();
        if (nodes_[root].value.rank() != 0)
            throw ShapeError("backward requires a scalar output, got shape " + shape_str(nodes_[root].value.shape()));
        grads_.assign(nodes_.size(), Tensor(Shape{0}));
        GradientMap result;
        result.graph_ = this;
        if (nodes_[root].requires_grad) {
            grads_[root] = Tensor::scalar(1.0);
            for (std::size_t i = root + 1; i-- > 0;) {
                Node& n = nodes_[i];
                if (!n.requires_grad || grads_[i].size() != n.value.size() || grads_[i].shape() != n.value.shape())
                    continue;
                if (!grads_[i].all_finite())
                    throw NumericError(std::string("non-finite gradient at node ") + std::to_string(i) + " (" + n.op + ")");
                if (n.backward) n.backward(*this, i);
            }
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            Node& n = nodes_[i];
            if (!n.is_leaf || !n.requires_grad) continue;
            Tensor g = grads_[i].shape() == n.value.shape() && grads_[i].size() == n.value.size()
                           ? grads_[i]
                           : Tensor::zeros_like(n.value);
            if (n.param) {
                auto& pg = n.param->grad;
                if (pg.shape() != g.shape()) pg = Tensor::zeros_like(n.param->value);
                for (std::size_t k = 0; k < g.size(); ++k) pg[k] += g[k];
            }
            result.grads_.emplace(i, std::move(g));
        }
        grads_.clear();
        return result;
    }

private:
    struct Node {
        const char* op;
        Tensor value;
        bool requires_grad;
        bool is_leaf;
        BackwardFn backward;
        Parameter* param;
    };

    Var push_leaf(const char* op, Tensor value, bool requires_grad, Parameter* param) {
        if (!value.all_finite()) throw NumericError(std::string("non-finite leaf value (") + op + ")");
        nodes_.push_back(Node{op, std::move(value), requires_grad, true, {}, param});
        return Var(this, nodes_.size() - 1);
    }

    Var push(const char* op, Tensor value, bool requires_grad, BackwardFn fn, Parameter* param) {
        if (!value.all_finite())
            throw NumericError(std::string("non-finite value produced by ") + op + " at node " +
                               std::to_string(nodes_.size()));
        nodes_.push_back(Node{op, std::move(value), requires_grad, false, std::move(fn), param});
        return Var(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::unordered_map<const Parameter*, std::size_t> param_leaf_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

inline Tensor GradientMap::of(const Var& leaf) const {
    if (auto it = grads_.find(leaf.id()); it != grads_.end()) return it->second;
    return Tensor::zeros_like(leaf.value());
}

} // namespace disbelief
