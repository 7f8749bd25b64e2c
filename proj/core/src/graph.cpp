#include "mrm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mrm::ad {

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
    Node n;
    n.op = "constant";
    n.owned = std::move(value);
    return push(std::move(n));
}

Var Graph::variable(Tensor value) {
    Node n;
    n.op = "variable";
    n.owned = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Graph::parameter(const Tensor& value) {
    Node n;
    n.op = "parameter";
    n.borrowed = &value;
    n.requires_grad = true;
    return push(std::move(n));
}

const Tensor& Graph::value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.owned;
}

Tensor& Graph::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(value(id).shape(), 0.0);
        n.has_grad = true;
    }
    return n.grad;
}

Tensor Graph::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.has_grad) return n.grad;
    return Tensor(value(v.id()).shape(), 0.0);
}

const Tensor* Graph::grad_if_any(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.has_grad ? &n.grad : nullptr;
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, std::string op, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(op),
                  std::move(backward));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, std::string op, Backward backward) {
    Node n;
    n.op = std::move(op);
    n.owned = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        if (in.graph() != this) throw std::invalid_argument(n.op + ": input belongs to a different graph");
        n.inputs.push_back(in.id());
        n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

void Graph::backward(Var root) {
    if (root.graph() != this) throw std::invalid_argument("backward: root belongs to a different graph");
    if (backward_done_) throw std::logic_error("backward: already run on this graph");
    if (value(root.id()).size() != 1)
        throw std::invalid_argument("backward: root must be a single element, got " +
                                    value(root.id()).shape_string());
    backward_done_ = true;
    if (!nodes_[root.id()].requires_grad) return;
    grad_buffer(root.id())[0] = 1.0;
    for (std::size_t id = root.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.has_grad && n.backward) n.backward(*this, id);
    }
}

namespace {

Graph& graph_of(Var a) {
    if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
    return *a.graph();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                                b.shape_string());
}

void check_rank(const char* op, const Tensor& t) {
    if (t.rank() > 2) throw std::invalid_argument(std::string(op) + ": rank > 2 not supported " + t.shape_string());
}

// C += op(A) . op(B) on raw row-major buffers.
void gemm_acc(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ta ? a[p * lda + i] : a[i * lda + p];
            if (aip == 0.0) continue;
            double* crow = c + i * n;
            if (!tb) {
                const double* brow = b + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
            } else {
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * ldb + p];
            }
        }
    }
}

// out = op(a) . op(b) with gradient rules derived from the same kernel.
Var matmul_impl(Var a, Var b, bool ta, bool tb, const char* name) {
    Graph& g = graph_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    check_rank(name, av);
    check_rank(name, bv);
    const std::size_t m = ta ? av.cols() : av.rows();
    const std::size_t k = ta ? av.rows() : av.cols();
    const std::size_t kb = tb ? bv.cols() : bv.rows();
    const std::size_t n = tb ? bv.rows() : bv.cols();
    if (k != kb) shape_error(name, av, bv);
    Tensor out({m, n}, 0.0);
    gemm_acc(ta, tb, m, n, k, av.data().data(), av.cols(), bv.data().data(), bv.cols(), out.data().data());
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(out), {a, b}, name, [=](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad_of(self);
        const Tensor& A = gr.value(ia);
        const Tensor& B = gr.value(ib);
        if (gr.needs_grad(ia)) {
            Tensor& ga = gr.grad_buffer(ia);
            // dA = dC . op(B)^T, laid out as op(A).
            if (!ta)
                gemm_acc(false, !tb, m, k, n, go.data().data(), n, B.data().data(), B.cols(), ga.data().data());
            else
                gemm_acc(tb, true, k, m, n, B.data().data(), B.cols(), go.data().data(), n, ga.data().data());
        }
        if (gr.needs_grad(ib)) {
            Tensor& gb = gr.grad_buffer(ib);
            // dB = op(A)^T . dC, laid out as op(B).
            if (!tb)
                gemm_acc(!ta, false, k, n, m, A.data().data(), A.cols(), go.data().data(), n, gb.data().data());
            else
                gemm_acc(true, ta, n, k, m, go.data().data(), n, A.data().data(), A.cols(), gb.data().data());
        }
    });
}

template <class Fwd, class Deriv>
Var unary(Var a, const char* name, Fwd fwd, Deriv deriv) {
    Graph& g = graph_of(a);
    Tensor out = a.value();
    for (double& x : out.data()) x = fwd(x);
    const std::size_t ia = a.id();
    return g.record(std::move(out), {a}, name, [=](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad_of(self);
        const Tensor& x = gr.value(ia);
        const Tensor& y = gr.value(self);
        Tensor& ga = gr.grad_buffer(ia);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * deriv(x[i], y[i]);
    });
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) { return matmul_impl(a, b, false, false, "matmul"); }
Var matmul_nt(Var a, Var b) { return matmul_impl(a, b, false, true, "matmul_nt"); }
Var matmul_tn(Var a, Var b) { return matmul_impl(a, b, true, false, "matmul_tn"); }

Var add(Var a, Var b) {
    Graph& g = graph_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool row_bias = !av.same_shape(bv);
    if (row_bias && !(bv.rows() == 1 && bv.cols() == av.cols())) shape_error("add", av, bv);
    Tensor out = av;
    const std::size_t cols = av.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += row_bias ? bv[i % cols] : bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(out), {a, b}, "add", [=](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad_of(self);
        if (gr.needs_grad(ia)) gr.grad_buffer(ia).add_inplace(go);
        if (gr.needs_grad(ib)) {
            Tensor& gb = gr.grad_buffer(ib);
            for (std::size_t i = 0; i < go.size(); ++i) gb[row_bias ? i % cols : i] += go[i];
        }
    });
}

Var sub(Var a, Var b) {
    Graph& g = graph_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) shape_error("sub", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(out), {a, b}, "sub", [=](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad_of(self);
        if (gr.needs_grad(ia)) gr.grad_buffer(ia).add_inplace(go);
        if (gr.needs_grad(ib)) {
            Tensor& gb = gr.grad_buffer(ib);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
    });
}

Var mul(Var a, Var b) {
    Graph& g = graph_of(a);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) shape_error("mul", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return g.record(std::move(out), {a, b}, "mul", [=](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad_of(self);
        if (gr.needs_grad(ia)) {
            Tensor& ga = gr.grad_buffer(ia);
            const Tensor& B = gr.value(ib);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * B[i];
        }
        if (gr.needs_grad(ib)) {
            Tensor& gb = gr.grad_buffer(ib);
            const Tensor& A = gr.value(ia);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * A[i];
        }
    });
}

Var scale(Var a, double factor) {
    return unary(a, "scale", [factor](double x) { return factor * x; },
                 [factor](double, double) { return factor; });
}

Var tanh(Var a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
    return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    Graph& g = graph_of(parts.front());
    const std::size_t cols = parts.front().value().cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (p.value().cols() != cols) shape_error("concat", parts.front().value(), p.value());
        rows += p.value().rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    std::vector<std::size_t> ids;
    ids.reserve(parts.size());
    for (const Var& p : parts) {
        const auto d = p.value().data();
        data.insert(data.end(), d.begin(), d.end());
        ids.push_back(p.id());
    }
    return g.record(Tensor({rows, cols}, std::move(data)), parts, "concat",
                    [ids = std::move(ids)](Graph& gr, std::size_t self) {
                        const Tensor& go = gr.grad_of(self);
                        std::size_t offset = 0;
                        for (std::size_t id : ids) {
                            const std::size_t n = gr.value(id).size();
                            if (gr.needs_grad(id)) {
                                Tensor& gi = gr.grad_buffer(id);
                                for (std::size_t i = 0; i < n; ++i) gi[i] += go[offset + i];
                            }
                            offset += n;
                        }
                    });
}

Var transpose(Var a) {
    Graph& g = graph_of(a);
    const Tensor& av = a.value();
    check_rank("transpose", av);
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
    const std::size_t ia = a.id();
    return g.record(std::move(out), {a}, "transpose", [=](Graph& gr, std::size_t self) {
        const Tensor& go = gr.grad_of(self);
        Tensor& ga = gr.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += go.at(j, i);
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    Graph& g = graph_of(a);
    const Tensor& av = a.value();
    if (begin > end || end > av.rows())
        throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                    ") out of bounds for " + av.shape_string());
    const std::size_t cols = av.cols();
    std::vector<double> data(av.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                             av.data().begin() + static_cast<std::ptrdiff_t>(end * cols));
    const std::size_t ia = a.id();
    return g.record(Tensor({end - begin, cols}, std::move(data)), {a}, "slice_rows",
                    [=](Graph& gr, std::size_t self) {
                        const Tensor& go = gr.grad_of(self);
                        Tensor& ga = gr.grad_buffer(ia);
                        for (std::size_t i = 0; i < go.size(); ++i) ga[begin * cols + i] += go[i];
                    });
}

std::vector<double> masked_softmax(std::span<const double> scores, const std::vector<bool>& mask) {
    if (mask.size() != scores.size())
        throw std::invalid_argument("masked_softmax: mask length " + std::to_string(mask.size()) +
                                    " != score length " + std::to_string(scores.size()));
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (mask[i]) top = std::max(top, scores[i]);
    if (top == -std::numeric_limits<double>::infinity())
        throw std::invalid_argument("masked_softmax: every entry is masked");
    std::vector<double> out(scores.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!mask[i]) continue;
        out[i] = std::exp(scores[i] - top);
        total += out[i];
    }
    for (double& w : out) w /= total;
    return out;
}

Var masked_softmax(Var scores, const std::vector<bool>& mask) {
    Graph& g = graph_of(scores);
    const Tensor& sv = scores.value();
    auto weights = masked_softmax(sv.data(), mask);
    const std::size_t is = scores.id();
    return g.record(Tensor(sv.shape(), std::move(weights)), {scores}, "masked_softmax",
                    [=](Graph& gr, std::size_t self) {
                        const Tensor& go = gr.grad_of(self);
                        const Tensor& w = gr.value(self);
                        double inner = 0.0;
                        for (std::size_t i = 0; i < w.size(); ++i) inner += go[i] * w[i];
                        Tensor& gs = gr.grad_buffer(is);
                        // Masked weights are 0, so their gradient vanishes too.
                        for (std::size_t i = 0; i < w.size(); ++i) gs[i] += w[i] * (go[i] - inner);
                    });
}

Var maxpool_rows(std::span<const Var> rows) {
    if (rows.empty()) throw std::invalid_argument("maxpool_rows: empty group");
    Graph& g = graph_of(rows.front());
    const Tensor& first = rows.front().value();
    Tensor out = first;
    std::vector<std::size_t> winner(first.size(), 0);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const Tensor& v = rows[r].value();
        if (!v.same_shape(first)) shape_error("maxpool_rows", first, v);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] > out[i]) {
                out[i] = v[i];
                winner[i] = r;
            }
        }
    }
    std::vector<std::size_t> ids;
    ids.reserve(rows.size());
    for (const Var& r : rows) ids.push_back(r.id());
    return g.record(std::move(out), rows, "maxpool_rows",
                    [ids = std::move(ids), winner = std::move(winner)](Graph& gr, std::size_t self) {
                        const Tensor& go = gr.grad_of(self);
                        for (std::size_t i = 0; i < go.size(); ++i) {
                            const std::size_t id = ids[winner[i]];
                            if (gr.needs_grad(id)) gr.grad_buffer(id)[i] += go[i];
                        }
                    });
}

Var sum(Var a) {
    Graph& g = graph_of(a);
    double total = 0.0;
    for (double x : a.value().data()) total += x;
    const std::size_t ia = a.id();
    return g.record(Tensor::scalar(total), {a}, "sum", [=](Graph& gr, std::size_t self) {
        const double go = gr.grad_of(self)[0];
        for (double& x : gr.grad_buffer(ia).data()) x += go;
    });
}

Var sum_squares(Var a) {
    Graph& g = graph_of(a);
    double total = 0.0;
    for (double x : a.value().data()) total += x * x;
    const std::size_t ia = a.id();
    return g.record(Tensor::scalar(total), {a}, "sum_squares", [=](Graph& gr, std::size_t self) {
        const double go = gr.grad_of(self)[0];
        const Tensor& x = gr.value(ia);
        Tensor& ga = gr.grad_buffer(ia);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * go * x[i];
    });
}

Var binary_cross_entropy(Var probability, double y, double clamp) {
    Graph& g = graph_of(probability);
    const Tensor& pv = probability.value();
    if (pv.size() != 1)
        throw std::invalid_argument("binary_cross_entropy: expected one probability, got " + pv.shape_string());
    const double raw = pv[0];
    const double p = std::clamp(raw, clamp, 1.0 - clamp);
    const double loss = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    const bool clamped = p != raw;
    const std::size_t ip = probability.id();
    return g.record(Tensor::scalar(loss), {probability}, "binary_cross_entropy",
                    [=](Graph& gr, std::size_t self) {
                        if (clamped) return;
                        const double go = gr.grad_of(self)[0];
                        gr.grad_buffer(ip)[0] += go * (-(y / p) + (1.0 - y) / (1.0 - p));
                    });
}

Var embed_sum(Var table, std::span<const EmbedTerm> terms, std::size_t out_rows) {
    Graph& g = graph_of(table);
    const Tensor& tv = table.value();
    const std::size_t cols = tv.cols();
    Tensor out({out_rows, cols}, 0.0);
    for (const EmbedTerm& t : terms) {
        if (t.out_row >= out_rows || t.table_row >= tv.rows())
            throw std::invalid_argument("embed_sum: term (" + std::to_string(t.out_row) + ", " +
                                        std::to_string(t.table_row) + ") out of range for table " +
                                        tv.shape_string() + " and " + std::to_string(out_rows) + " output rows");
        const auto src = tv.row(t.table_row);
        auto dst = out.row(t.out_row);
        for (std::size_t c = 0; c < cols; ++c) dst[c] += t.coef * src[c];
    }
    const std::size_t it = table.id();
    return g.record(std::move(out), {table}, "embed_sum",
                    [it, cols, terms = std::vector<EmbedTerm>(terms.begin(), terms.end())](Graph& gr,
                                                                                          std::size_t self) {
                        const Tensor& go = gr.grad_of(self);
                        Tensor& gt = gr.grad_buffer(it);
                        for (const EmbedTerm& t : terms) {
                            const auto src = go.row(t.out_row);
                            auto dst = gt.row(t.table_row);
                            for (std::size_t c = 0; c < cols; ++c) dst[c] += t.coef * src[c];
                        }
                    });
}

}  // namespace mrm::ad
