// autodiff.hpp - reverse-mode automatic differentiation over dense 2-D tensors.
//
// The graph is recorded eagerly as ops execute. Every VJP is itself expressed
// in terms of the same primitive ops, so gradients produced with
// create_graph=true stay on the tape and can be differentiated again
// (second-order and higher).
//
// Conventions:
//   - scalars are 1x1 tensors; vectors are n x 1
//   - ReLU subgradient at 0 is 0
//   - row_max / select argmax ties resolve to the lowest index
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "fsaf/tensor.hpp"
#include "fsaf/util.hpp"

namespace fsaf::ad {

class Node;
using NodePtr = std::shared_ptr<Node>;

/// Handle to a node in the computation graph.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    static Var leaf(Tensor t);
    static Var constant(Tensor t);
    static Var constant(double v) { return constant(Tensor::scalar(v)); }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const;
    int rows() const { return value().rows; }
    int cols() const { return value().cols; }
    bool requires_grad() const;
    double scalar() const { return value().value(); }

    /// Same values, cut from the graph.
    Var detach() const { return constant(value()); }

    Node* get() const { return node_.get(); }
    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

using Vjp = std::function<std::vector<Var>(const std::vector<Var>& parents, const Var& self, const Var& grad)>;

class Node : public std::enable_shared_from_this<Node> {
public:
    Tensor value;
    const char* op = "leaf";
    std::vector<Var> parents;
    Vjp vjp;  // empty for leaves/constants
    bool requires_grad = false;
    std::uint64_t id = 0;

    static std::uint64_t next_id() {
        thread_local std::uint64_t counter = 0;
        return ++counter;
    }
};

inline const Tensor& Var::value() const {
    if (!node_) throw ValueError("Var: undefined");
    return node_->value;
}

inline bool Var::requires_grad() const { return node_ && node_->requires_grad; }

inline Var Var::leaf(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->op = "leaf";
    n->requires_grad = true;
    n->id = Node::next_id();
    return Var(n);
}

inline Var Var::constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->op = "const";
    n->requires_grad = false;
    n->id = Node::next_id();
    return Var(n);
}

// --- graph recording switch -------------------------------------------------

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

/// RAII guard: ops executed inside do not record parents (results are constants).
class NoGradGuard {
public:
    NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

namespace detail {

inline Var make_op(const char* op, Tensor value, std::vector<Var> parents, Vjp vjp) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    n->id = Node::next_id();
    if (grad_mode()) {
        bool req = false;
        for (const auto& p : parents) req = req || p.requires_grad();
        if (req) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->vjp = std::move(vjp);
        }
    }
    return Var(n);
}

inline void check_same_shape(const char* op, const Var& a, const Var& b) {
    if (!a.value().same_shape(b.value()))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                         b.value().shape_str());
}

}  // namespace detail

// --- primitive ops ----------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var relu(const Var& a);
Var square(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var row_sum(const Var& a);
Var row_mean(const Var& a);
Var row_max(const Var& a);
Var col_sum(const Var& a);
Var rep_cols(const Var& a, int n);
Var rep_rows(const Var& a, int m);
Var bcast_scalar(const Var& a, int r, int c);
Var reshape(const Var& a, int r, int c);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, int r0, int r1);
Var pad_rows(const Var& a, int r0, int total);
Var select_cols(const Var& a, std::vector<int> idx);
Var scatter_cols(const Var& a, std::vector<int> idx, int n);
Var row_logsumexp(const Var& a);

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape("add", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    return detail::make_op("add", std::move(out), {a, b},
                           [](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{g, g};
                           });
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_shape("sub", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
    return detail::make_op("sub", std::move(out), {a, b},
                           [](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{g, neg(g)};
                           });
}

inline Var mul(const Var& a, const Var& b) {
    detail::check_same_shape("mul", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
    return detail::make_op("mul", std::move(out), {a, b},
                           [](const std::vector<Var>& p, const Var&, const Var& g) {
                               return std::vector<Var>{mul(g, p[1]), mul(g, p[0])};
                           });
}

inline Var divide(const Var& a, const Var& b) {
    detail::check_same_shape("div", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= bv.data[i];
    return detail::make_op("div", std::move(out), {a, b},
                           [](const std::vector<Var>& p, const Var&, const Var& g) {
                               Var ga = divide(g, p[1]);
                               Var gb = neg(divide(mul(g, p[0]), mul(p[1], p[1])));
                               return std::vector<Var>{ga, gb};
                           });
}

inline Var neg(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v = -v;
    return detail::make_op("neg", std::move(out), {a},
                           [](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{neg(g)};
                           });
}

inline Var scale(const Var& a, double c) {
    Tensor out = a.value();
    for (double& v : out.data) v *= c;
    return detail::make_op("scale", std::move(out), {a},
                           [c](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{scale(g, c)};
                           });
}

inline Var add_scalar(const Var& a, double c) {
    Tensor out = a.value();
    for (double& v : out.data) v += c;
    return detail::make_op("add_scalar", std::move(out), {a},
                           [](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{g};
                           });
}

inline Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols != bv.rows)
        throw ShapeError("matmul: inner dimensions " + av.shape_str() + " * " + bv.shape_str());
    Tensor out(av.rows, bv.cols);
    out.map().noalias() = av.map() * bv.map();
    return detail::make_op("matmul", std::move(out), {a, b},
                           [](const std::vector<Var>& p, const Var&, const Var& g) {
                               return std::vector<Var>{matmul(g, transpose(p[1])),
                                                       matmul(transpose(p[0]), g)};
                           });
}

inline Var transpose(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.cols, av.rows);
    out.map() = av.map().transpose();
    return detail::make_op("transpose", std::move(out), {a},
                           [](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{transpose(g)};
                           });
}

inline Var relu(const Var& a) {
    const Tensor& av = a.value();
    Tensor out = av;
    Tensor mask(av.rows, av.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (out.data[i] > 0.0) {
            mask.data[i] = 1.0;
        } else {
            out.data[i] = 0.0;
        }
    }
    Var mask_c = Var::constant(std::move(mask));
    return detail::make_op("relu", std::move(out), {a},
                           [mask_c](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{mul(g, mask_c)};
                           });
}

inline Var square(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v *= v;
    return detail::make_op("square", std::move(out), {a},
                           [](const std::vector<Var>& p, const Var&, const Var& g) {
                               return std::vector<Var>{mul(g, scale(p[0], 2.0))};
                           });
}

inline Var exp(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v = std::exp(v);
    return detail::make_op("exp", std::move(out), {a},
                           [](const std::vector<Var>& p, const Var& self, const Var& g) {
                               (void)p;
                               return std::vector<Var>{mul(g, self)};
                           });
}

inline Var log(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v = std::log(v);
    return detail::make_op("log", std::move(out), {a},
                           [](const std::vector<Var>& p, const Var&, const Var& g) {
                               return std::vector<Var>{divide(g, p[0])};
                           });
}

inline Var sum_all(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data) s += v;
    const Tensor& av = a.value();
    int r = av.rows, c = av.cols;
    return detail::make_op("sum_all", Tensor::scalar(s), {a},
                           [r, c](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{bcast_scalar(g, r, c)};
                           });
}

inline Var mean_all(const Var& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

inline Var row_sum(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.rows, 1);
    for (int i = 0; i < av.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < av.cols; ++j) s += av.at(i, j);
        out.data[i] = s;
    }
    int n = av.cols;
    return detail::make_op("row_sum", std::move(out), {a},
                           [n](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{rep_cols(g, n)};
                           });
}

inline Var row_mean(const Var& a) { return scale(row_sum(a), 1.0 / a.value().cols); }

inline Var row_max(const Var& a) {
    const Tensor& av = a.value();
    if (av.cols == 0) throw ShapeError("row_max: empty rows");
    Tensor out(av.rows, 1);
    std::vector<int> argmax(av.rows, 0);
    for (int i = 0; i < av.rows; ++i) {
        double best = av.at(i, 0);
        int bj = 0;
        for (int j = 1; j < av.cols; ++j) {
            if (av.at(i, j) > best) {
                best = av.at(i, j);
                bj = j;
            }
        }
        out.data[i] = best;
        argmax[i] = bj;
    }
    int n = av.cols;
    return detail::make_op("row_max", std::move(out), {a},
                           [argmax, n](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{scatter_cols(g, argmax, n)};
                           });
}

inline Var col_sum(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(1, av.cols);
    for (int i = 0; i < av.rows; ++i)
        for (int j = 0; j < av.cols; ++j) out.data[j] += av.at(i, j);
    int m = av.rows;
    return detail::make_op("col_sum", std::move(out), {a},
                           [m](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{rep_rows(g, m)};
                           });
}

inline Var rep_cols(const Var& a, int n) {
    const Tensor& av = a.value();
    if (av.cols != 1) throw ShapeError("rep_cols: expected column vector, got " + av.shape_str());
    Tensor out(av.rows, n);
    for (int i = 0; i < av.rows; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = av.data[i];
    return detail::make_op("rep_cols", std::move(out), {a},
                           [](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{row_sum(g)};
                           });
}

inline Var rep_rows(const Var& a, int m) {
    const Tensor& av = a.value();
    if (av.rows != 1) throw ShapeError("rep_rows: expected row vector, got " + av.shape_str());
    Tensor out(m, av.cols);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < av.cols; ++j) out.at(i, j) = av.data[j];
    return detail::make_op("rep_rows", std::move(out), {a},
                           [](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{col_sum(g)};
                           });
}

inline Var bcast_scalar(const Var& a, int r, int c) {
    if (!a.value().is_scalar()) throw ShapeError("bcast_scalar: expected 1x1, got " + a.value().shape_str());
    Tensor out = Tensor::full(r, c, a.value().data[0]);
    return detail::make_op("bcast_scalar", std::move(out), {a},
                           [](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{sum_all(g)};
                           });
}

inline Var reshape(const Var& a, int r, int c) {
    const Tensor& av = a.value();
    if (static_cast<std::size_t>(r) * c != av.size())
        throw ShapeError("reshape: cannot view " + av.shape_str() + " as " + std::to_string(r) + "x" +
                         std::to_string(c));
    Tensor out(r, c, av.data);
    int orig_r = av.rows, orig_c = av.cols;
    return detail::make_op("reshape", std::move(out), {a},
                           [orig_r, orig_c](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{reshape(g, orig_r, orig_c)};
                           });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    int cols = parts[0].value().cols;
    int rows = 0;
    for (const auto& p : parts) {
        if (p.value().cols != cols) throw ShapeError("concat_rows: column mismatch");
        rows += p.value().rows;
    }
    Tensor out(rows, cols);
    std::vector<int> offsets;
    int at = 0;
    for (const auto& p : parts) {
        offsets.push_back(at);
        const Tensor& pv = p.value();
        std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + static_cast<std::size_t>(at) * cols);
        at += pv.rows;
    }
    std::vector<int> sizes;
    for (const auto& p : parts) sizes.push_back(p.value().rows);
    return detail::make_op("concat_rows", std::move(out), parts,
                           [offsets, sizes](const std::vector<Var>&, const Var&, const Var& g) {
                               std::vector<Var> gs;
                               gs.reserve(offsets.size());
                               for (std::size_t k = 0; k < offsets.size(); ++k)
                                   gs.push_back(slice_rows(g, offsets[k], offsets[k] + sizes[k]));
                               return gs;
                           });
}

inline Var slice_rows(const Var& a, int r0, int r1) {
    const Tensor& av = a.value();
    if (r0 < 0 || r1 > av.rows || r0 >= r1) throw ShapeError("slice_rows: bad range");
    Tensor out(r1 - r0, av.cols);
    std::copy(av.data.begin() + static_cast<std::size_t>(r0) * av.cols,
              av.data.begin() + static_cast<std::size_t>(r1) * av.cols, out.data.begin());
    int total = av.rows;
    return detail::make_op("slice_rows", std::move(out), {a},
                           [r0, total](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{pad_rows(g, r0, total)};
                           });
}

inline Var pad_rows(const Var& a, int r0, int total) {
    const Tensor& av = a.value();
    if (r0 < 0 || r0 + av.rows > total) throw ShapeError("pad_rows: bad placement");
    Tensor out(total, av.cols);
    std::copy(av.data.begin(), av.data.end(), out.data.begin() + static_cast<std::size_t>(r0) * av.cols);
    int r1 = r0 + av.rows;
    return detail::make_op("pad_rows", std::move(out), {a},
                           [r0, r1](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{slice_rows(g, r0, r1)};
                           });
}

/// Per-row gather: out[i] = a[i, idx[i]].
inline Var select_cols(const Var& a, std::vector<int> idx) {
    const Tensor& av = a.value();
    if (static_cast<int>(idx.size()) != av.rows) throw ShapeError("select_cols: index count != rows");
    Tensor out(av.rows, 1);
    for (int i = 0; i < av.rows; ++i) {
        if (idx[i] < 0 || idx[i] >= av.cols) throw ShapeError("select_cols: index out of range");
        out.data[i] = av.at(i, idx[i]);
    }
    int n = av.cols;
    return detail::make_op("select_cols", std::move(out), {a},
                           [idx, n](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{scatter_cols(g, idx, n)};
                           });
}

/// Per-row scatter: out[i, idx[i]] = a[i], zero elsewhere. Inverse of select_cols.
inline Var scatter_cols(const Var& a, std::vector<int> idx, int n) {
    const Tensor& av = a.value();
    if (av.cols != 1) throw ShapeError("scatter_cols: expected column vector");
    if (static_cast<int>(idx.size()) != av.rows) throw ShapeError("scatter_cols: index count != rows");
    Tensor out(av.rows, n);
    for (int i = 0; i < av.rows; ++i) {
        if (idx[i] < 0 || idx[i] >= n) throw ShapeError("scatter_cols: index out of range");
        out.at(i, idx[i]) = av.data[i];
    }
    return detail::make_op("scatter_cols", std::move(out), {a},
                           [idx](const std::vector<Var>&, const Var&, const Var& g) {
                               return std::vector<Var>{select_cols(g, idx)};
                           });
}

/// Numerically stable per-row log(sum(exp(x))).
inline Var row_logsumexp(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.rows, 1);
    for (int i = 0; i < av.rows; ++i) {
        double m = av.at(i, 0);
        for (int j = 1; j < av.cols; ++j) m = std::max(m, av.at(i, j));
        double s = 0.0;
        for (int j = 0; j < av.cols; ++j) s += std::exp(av.at(i, j) - m);
        out.data[i] = m + std::log(s);
    }
    int n = av.cols;
    return detail::make_op("row_logsumexp", std::move(out), {a},
                           [n](const std::vector<Var>& p, const Var&, const Var& g) {
                               // d lse / dx = softmax(x), rebuilt on the tape
                               Var softmax = exp(sub(p[0], rep_cols(row_logsumexp(p[0]), n)));
                               return std::vector<Var>{mul(rep_cols(g, n), softmax)};
                           });
}

// --- backward ---------------------------------------------------------------

/// Topological order of the subgraph reachable from root through
/// gradient-requiring nodes; parents precede children.
inline std::vector<Node*> topo_order(const Var& root) {
    std::vector<Node*> order;
    std::unordered_map<Node*, int> state;  // 0 unseen, 1 in stack, 2 done
    std::vector<std::pair<Node*, std::size_t>> stack;
    if (!root.requires_grad()) return order;
    stack.emplace_back(root.get(), 0);
    state[root.get()] = 1;
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next].get();
            ++next;
            if (p->requires_grad && state[p] == 0) {
                state[p] = 1;
                stack.emplace_back(p, 0);
            }
        } else {
            state[n] = 2;
            order.push_back(n);
            stack.pop_back();
        }
    }
    return order;
}

/// Gradients of a scalar root with respect to `wrt`.
/// With create_graph set, the returned gradients stay on the tape and can be
/// differentiated again. Unreached inputs get zero gradients.
/// A NaN in any intermediate gradient raises an error naming the node.
inline std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, bool create_graph = false) {
    if (!root.value().is_scalar())
        throw ShapeError("grad: root must be scalar, got " + root.value().shape_str());

    std::unordered_map<Node*, Var> grads;
    if (root.requires_grad()) {
        std::vector<Node*> order = topo_order(root);
        grads[root.get()] = Var::constant(Tensor::ones(1, 1));

        std::unique_ptr<NoGradGuard> guard;
        if (!create_graph) guard = std::make_unique<NoGradGuard>();

        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            auto gi = grads.find(n);
            if (gi == grads.end()) continue;  // not on any path from root
            const Var& g = gi->second;
            if (g.value().has_nan())
                throw ValueError(std::string("grad: NaN gradient at node op=") + n->op + " id=" +
                                 std::to_string(n->id));
            if (!n->vjp) continue;  // leaf
            std::vector<Var> pg = n->vjp(n->parents, Var(n->shared_from_this()), g);
            if (pg.size() != n->parents.size())
                throw ValueError(std::string("grad: vjp arity mismatch at op=") + n->op);
            for (std::size_t k = 0; k < pg.size(); ++k) {
                Node* p = n->parents[k].get();
                if (!p->requires_grad) continue;
                auto found = grads.find(p);
                if (found == grads.end())
                    grads.emplace(p, pg[k]);
                else
                    found->second = add(found->second, pg[k]);
            }
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto it = grads.find(w.get());
        if (it != grads.end())
            out.push_back(create_graph ? it->second : it->second.detach());
        else
            out.push_back(Var::constant(Tensor::zeros(w.rows(), w.cols())));
    }
    return out;
}

}  // namespace fsaf::ad
