#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mrm/tensor.hpp"

namespace mrm::ad {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
class Var {
public:
    Var() = default;

    Graph* graph() const noexcept { return graph_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }
    const Tensor& value() const;

private:
    friend class Graph;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Tape of operations recorded during a forward pass.
///
/// Nodes are appended in evaluation order, so the tape order is a topological
/// order and backward() walks it in reverse, visiting each node once. Leaf
/// gradients accumulate with +=, which makes shared subexpressions sum their
/// contributions.
///
/// A graph is single-threaded. Parameters are borrowed by const reference, so
/// several graphs may read the same parameter tensors concurrently.
class Graph {
public:
    /// Propagates the gradient stored at `self` into its inputs.
    using Backward = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    /// Owned leaf that collects a gradient.
    Var variable(Tensor value);
    /// Borrowed leaf that collects a gradient; `value` must outlive the graph.
    Var parameter(const Tensor& value);

    /// Seeds d(root)/d(root) = 1 and runs reverse accumulation. `root` must hold
    /// a single element. May be called once per graph.
    void backward(Var root);

    const Tensor& value(Var v) const { return value(v.id()); }
    /// Accumulated gradient at `v`; zeros when backward never reached it.
    Tensor grad(Var v) const;
    /// Accumulated gradient at `v`, or nullptr when backward never reached it.
    const Tensor* grad_if_any(Var v) const;
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    const std::string& op_name(Var v) const { return nodes_[v.id()].op; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Interface used by operation implementations.
    Var record(Tensor value, std::initializer_list<Var> inputs, std::string op, Backward backward);
    Var record(Tensor value, std::span<const Var> inputs, std::string op, Backward backward);
    const Tensor& value(std::size_t id) const;
    const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
    bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    /// Zero-initialised gradient buffer for node `id`, allocated on first use.
    Tensor& grad_buffer(std::size_t id);

private:
    struct Node {
        std::string op;
        std::vector<std::size_t> inputs;
        Tensor owned;
        const Tensor* borrowed = nullptr;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        Backward backward;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// Operations. All inputs must belong to the same graph. Shape errors throw
// std::invalid_argument naming both shapes.

/// (m x k) . (k x n)
Var matmul(Var a, Var b);
/// (m x k) . (n x k)^T
Var matmul_nt(Var a, Var b);
/// (k x m)^T . (k x n)
Var matmul_tn(Var a, Var b);
/// Elementwise sum; `b` may also be a 1 x n row added to every row of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
/// Stacks the inputs along the first axis; column counts must agree.
Var concat(std::span<const Var> parts);
Var transpose(Var a);
/// Rows [begin, end) of `a`.
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// Softmax over a column restricted to `mask`; masked entries are exactly 0.
Var masked_softmax(Var scores, const std::vector<bool>& mask);
/// Coordinatewise maximum of equally shaped tensors. The gradient of each
/// coordinate goes to the first input holding the maximum.
Var maxpool_rows(std::span<const Var> rows);
Var sum(Var a);
Var sum_squares(Var a);
/// Cross entropy of a single probability against label y, with the
/// probability clamped to [clamp, 1 - clamp].
Var binary_cross_entropy(Var probability, double y, double clamp = 1e-7);

/// One weighted row lookup: out[out_row] += coef * table[table_row].
struct EmbedTerm {
    std::size_t out_row;
    std::size_t table_row;
    double coef;
};
/// Sparse linear combination of table rows into an (out_rows x table.cols) result.
Var embed_sum(Var table, std::span<const EmbedTerm> terms, std::size_t out_rows);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

/// Plain masked softmax on values (no graph).
std::vector<double> masked_softmax(std::span<const double> scores, const std::vector<bool>& mask);

}  // namespace mrm::ad
