#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dentalign/errors.hpp"
#include "dentalign/tensor.hpp"

namespace dentalign::ad {

enum class Op : std::uint8_t {
    kLeaf,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kScalarMul,
    kTranspose,
    kReshape,
    kConcat,
    kSoftmaxLastDim,
    kLog,
    kExp,
    kSigmoid,
    kRelu,
    kLayerNorm,
    kL2NormalizeLastDim,
    kReduceSum,
    kReduceMean,
    kReduceMax,
    kGatherRows,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kMatmul: return "matmul";
        case Op::kAdd: return "add";
        case Op::kSub: return "sub";
        case Op::kMul: return "elementwise-mul";
        case Op::kScalarMul: return "scalar-mul";
        case Op::kTranspose: return "transpose";
        case Op::kReshape: return "reshape";
        case Op::kConcat: return "concat";
        case Op::kSoftmaxLastDim: return "softmax-lastdim";
        case Op::kLog: return "log";
        case Op::kExp: return "exp";
        case Op::kSigmoid: return "sigmoid";
        case Op::kRelu: return "relu";
        case Op::kLayerNorm: return "layer-norm";
        case Op::kL2NormalizeLastDim: return "l2-normalize-lastdim";
        case Op::kReduceSum: return "reduce-sum";
        case Op::kReduceMean: return "reduce-mean";
        case Op::kReduceMax: return "reduce-max-with-argmax";
        case Op::kGatherRows: return "gather-rows";
    }
    return "?";
}

// Handle into a Graph node.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Gradients keyed by node id. Leaves with requires_grad that the backward
// sweep never reached are present as zero tensors.
class GradientMap {
public:
    void insert(Var v, Tensor g) { grads_.emplace(v.id, std::move(g)); }
    const Tensor& at(Var v) const {
        auto it = grads_.find(v.id);
        if (it == grads_.end()) throw ContractError("no gradient recorded for node " + std::to_string(v.id));
        return it->second;
    }
    bool contains(Var v) const { return grads_.count(v.id) != 0; }
    std::size_t size() const { return grads_.size(); }

private:
    std::map<std::int32_t, Tensor> grads_;
};

// Define-by-run tape. Nodes are appended in topological order; a fresh graph
// is built per forward pass. Confined to one thread.
class Graph {
    struct Node {
        Op op;
        std::vector<std::int32_t> inputs;
        Tensor value;
        double scalar_arg = 0.0;                // scalar-mul factor, layer-norm eps
        int axis_arg = 0;                       // concat / reduce-max axis
        std::vector<std::int64_t> index_arg;    // gather indices or argmax positions
    };

public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    std::size_t size() const { return nodes_.size(); }

    const Tensor& value(Var v) const { return node(v).value; }

    Var leaf(Tensor t) {
        Node n;
        n.op = Op::kLeaf;
        n.value = std::move(t);
        return push(std::move(n));
    }

    Var constant(Tensor t) {
        t.requires_grad = false;
        return leaf(std::move(t));
    }

    Var scalar_const(double v) { return leaf(Tensor::scalar(v)); }

    // ---- forward ops -------------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor& ta = node(a).value;
        const Tensor& tb = node(b).value;
        if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0]) {
            throw shape_error(Op::kMatmul, ta.shape, tb.shape);
        }
        const auto m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
        Tensor out = Tensor::zeros({m, n});
        matmul_accum(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
        return push_op(Op::kMatmul, {a, b}, std::move(out));
    }

    Var add(Var a, Var b) { return binary_pointwise(Op::kAdd, a, b); }
    Var sub(Var a, Var b) { return binary_pointwise(Op::kSub, a, b); }
    Var mul(Var a, Var b) { return binary_pointwise(Op::kMul, a, b); }

    Var scalar_mul(Var a, double c) {
        Tensor out = node(a).value;
        out.requires_grad = false;
        for (auto& v : out.data) v *= c;
        Node n;
        n.op = Op::kScalarMul;
        n.inputs = {a.id};
        n.value = std::move(out);
        n.scalar_arg = c;
        return push(std::move(n));
    }

    Var transpose(Var a) {
        const Tensor& ta = node(a).value;
        if (ta.rank() != 2) throw shape_error(Op::kTranspose, ta.shape);
        const auto m = ta.shape[0], n = ta.shape[1];
        Tensor out = Tensor::zeros({n, m});
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) out.at2(j, i) = ta.at2(i, j);
        return push_op(Op::kTranspose, {a}, std::move(out));
    }

    Var reshape(Var a, Shape s) {
        const Tensor& ta = node(a).value;
        if (shape_numel(s) != ta.numel()) throw shape_error(Op::kReshape, ta.shape, s);
        Tensor out(std::move(s), ta.data);
        return push_op(Op::kReshape, {a}, std::move(out));
    }

    Var concat(Var a, Var b, int axis) {
        const Tensor& ta = node(a).value;
        const Tensor& tb = node(b).value;
        if (ta.rank() != tb.rank() || ta.rank() == 0) throw shape_error(Op::kConcat, ta.shape, tb.shape);
        if (axis < 0 || axis >= ta.rank()) throw shape_error(Op::kConcat, ta.shape, tb.shape);
        for (std::int64_t d = 0; d < ta.rank(); ++d) {
            if (d != axis && ta.shape[d] != tb.shape[d]) throw shape_error(Op::kConcat, ta.shape, tb.shape);
        }
        Shape os = ta.shape;
        os[axis] += tb.shape[axis];
        Tensor out = Tensor::zeros(os);
        // outer = product of dims before axis, inner = product after
        std::int64_t outer = 1, inner = 1;
        for (int d = 0; d < axis; ++d) outer *= ta.shape[d];
        for (std::int64_t d = axis + 1; d < ta.rank(); ++d) inner *= ta.shape[d];
        const std::int64_t wa = ta.shape[axis] * inner, wb = tb.shape[axis] * inner;
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy_n(ta.data.begin() + o * wa, wa, out.data.begin() + o * (wa + wb));
            std::copy_n(tb.data.begin() + o * wb, wb, out.data.begin() + o * (wa + wb) + wa);
        }
        Node n;
        n.op = Op::kConcat;
        n.inputs = {a.id, b.id};
        n.value = std::move(out);
        n.axis_arg = axis;
        return push(std::move(n));
    }

    Var softmax_lastdim(Var a) {
        const Tensor& ta = node(a).value;
        if (ta.rank() < 1) throw shape_error(Op::kSoftmaxLastDim, ta.shape);
        const auto h = ta.shape.back();
        const auto rows = ta.numel() / h;
        Tensor out = Tensor::zeros(ta.shape);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* x = ta.data.data() + r * h;
            double* y = out.data.data() + r * h;
            double mx = x[0];
            for (std::int64_t j = 1; j < h; ++j) mx = std::max(mx, x[j]);
            double s = 0.0;
            for (std::int64_t j = 0; j < h; ++j) {
                y[j] = std::exp(x[j] - mx);
                s += y[j];
            }
            for (std::int64_t j = 0; j < h; ++j) y[j] /= s;
        }
        return push_op(Op::kSoftmaxLastDim, {a}, std::move(out));
    }

    Var log(Var a) { return unary(Op::kLog, a, [](double x) { return std::log(x); }); }
    Var exp(Var a) { return unary(Op::kExp, a, [](double x) { return std::exp(x); }); }
    Var sigmoid(Var a) {
        return unary(Op::kSigmoid, a, [](double x) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        });
    }
    Var relu(Var a) { return unary(Op::kRelu, a, [](double x) { return x > 0 ? x : 0.0; }); }

    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
        const Tensor& tx = node(x).value;
        const Tensor& tg = node(gamma).value;
        const Tensor& tb = node(beta).value;
        if (tx.rank() < 1) throw shape_error(Op::kLayerNorm, tx.shape);
        const auto h = tx.shape.back();
        if (tg.numel() != h || tb.numel() != h) throw shape_error(Op::kLayerNorm, tg.shape, tb.shape);
        const auto rows = tx.numel() / h;
        Tensor out = Tensor::zeros(tx.shape);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* xr = tx.data.data() + r * h;
            double* yr = out.data.data() + r * h;
            double mean = 0.0;
            for (std::int64_t j = 0; j < h; ++j) mean += xr[j];
            mean /= static_cast<double>(h);
            double var = 0.0;
            for (std::int64_t j = 0; j < h; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= static_cast<double>(h);
            const double inv = 1.0 / std::sqrt(var + eps);
            for (std::int64_t j = 0; j < h; ++j) {
                yr[j] = (xr[j] - mean) * inv * tg.data[static_cast<std::size_t>(j)] +
                        tb.data[static_cast<std::size_t>(j)];
            }
        }
        Node n;
        n.op = Op::kLayerNorm;
        n.inputs = {x.id, gamma.id, beta.id};
        n.value = std::move(out);
        n.scalar_arg = eps;
        return push(std::move(n));
    }

    Var l2_normalize_lastdim(Var a) {
        const Tensor& ta = node(a).value;
        if (ta.rank() < 1) throw shape_error(Op::kL2NormalizeLastDim, ta.shape);
        const auto h = ta.shape.back();
        const auto rows = ta.numel() / h;
        Tensor out = Tensor::zeros(ta.shape);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* x = ta.data.data() + r * h;
            double* y = out.data.data() + r * h;
            double s = 0.0;
            for (std::int64_t j = 0; j < h; ++j) s += x[j] * x[j];
            const double norm = std::sqrt(s);
            if (norm == 0.0) throw NumericalError("l2-normalize of a zero row");
            for (std::int64_t j = 0; j < h; ++j) y[j] = x[j] / norm;
        }
        return push_op(Op::kL2NormalizeLastDim, {a}, std::move(out));
    }

    Var reduce_sum(Var a) {
        const Tensor& ta = node(a).value;
        double s = 0.0;
        for (double v : ta.data) s += v;
        return push_op(Op::kReduceSum, {a}, Tensor::scalar(s));
    }

    Var reduce_mean(Var a) {
        const Tensor& ta = node(a).value;
        double s = 0.0;
        for (double v : ta.data) s += v;
        return push_op(Op::kReduceMean, {a}, Tensor::scalar(s / static_cast<double>(ta.numel())));
    }

    // Max over `axis` of a 1-D or 2-D tensor; ties resolve to the lowest
    // index, and the gradient routes entirely to the recorded argmax.
    Var reduce_max(Var a, int axis = 0) {
        const Tensor& ta = node(a).value;
        Node n;
        n.op = Op::kReduceMax;
        n.inputs = {a.id};
        n.axis_arg = axis;
        if (ta.rank() == 1) {
            if (axis != 0) throw shape_error(Op::kReduceMax, ta.shape);
            std::int64_t arg = 0;
            for (std::int64_t i = 1; i < ta.numel(); ++i)
                if (ta.data[static_cast<std::size_t>(i)] > ta.data[static_cast<std::size_t>(arg)]) arg = i;
            n.index_arg = {arg};
            n.value = Tensor::scalar(ta.data[static_cast<std::size_t>(arg)]);
        } else if (ta.rank() == 2) {
            const auto m = ta.shape[0], c = ta.shape[1];
            if (axis == 0) {
                Tensor out = Tensor::zeros({c});
                n.index_arg.resize(static_cast<std::size_t>(c));
                for (std::int64_t j = 0; j < c; ++j) {
                    std::int64_t arg = 0;
                    for (std::int64_t i = 1; i < m; ++i)
                        if (ta.at2(i, j) > ta.at2(arg, j)) arg = i;
                    n.index_arg[static_cast<std::size_t>(j)] = arg;
                    out.data[static_cast<std::size_t>(j)] = ta.at2(arg, j);
                }
                n.value = std::move(out);
            } else if (axis == 1) {
                Tensor out = Tensor::zeros({m});
                n.index_arg.resize(static_cast<std::size_t>(m));
                for (std::int64_t i = 0; i < m; ++i) {
                    std::int64_t arg = 0;
                    for (std::int64_t j = 1; j < c; ++j)
                        if (ta.at2(i, j) > ta.at2(i, arg)) arg = j;
                    n.index_arg[static_cast<std::size_t>(i)] = arg;
                    out.data[static_cast<std::size_t>(i)] = ta.at2(i, arg);
                }
                n.value = std::move(out);
            } else {
                throw shape_error(Op::kReduceMax, ta.shape);
            }
        } else {
            throw shape_error(Op::kReduceMax, ta.shape);
        }
        return push(std::move(n));
    }

    const std::vector<std::int64_t>& argmax_of(Var reduce_max_result) const {
        const Node& n = node(reduce_max_result);
        if (n.op != Op::kReduceMax) throw ContractError("argmax_of on a non-reduce-max node");
        return n.index_arg;
    }

    Var gather_rows(Var a, std::vector<std::int64_t> idx) {
        const Tensor& ta = node(a).value;
        if (ta.rank() < 1) throw shape_error(Op::kGatherRows, ta.shape);
        const auto m = ta.shape[0];
        const auto inner = ta.numel() / m;
        for (auto i : idx) {
            if (i < 0 || i >= m)
                throw ShapeError(std::string(op_name(Op::kGatherRows)) + ": index " + std::to_string(i) +
                                 " out of range for " + shape_str(ta.shape));
        }
        Shape os = ta.shape;
        os[0] = static_cast<std::int64_t>(idx.size());
        Tensor out = Tensor::zeros(os);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            std::copy_n(ta.data.begin() + idx[r] * inner, inner,
                        out.data.begin() + static_cast<std::int64_t>(r) * inner);
        }
        Node n;
        n.op = Op::kGatherRows;
        n.inputs = {a.id};
        n.value = std::move(out);
        n.index_arg = std::move(idx);
        return push(std::move(n));
    }

    // ---- backward ----------------------------------------------------------

    // Gradient of a scalar output w.r.t. every requires_grad leaf.
    GradientMap backward(Var output) const {
        const Tensor& out = node(output).value;
        if (!out.is_scalar()) {
            throw ContractError("backward requires a scalar output, got " + shape_str(out.shape));
        }
        std::vector<std::vector<double>> grads(nodes_.size());
        grads[static_cast<std::size_t>(output.id)].assign(1, 1.0);

        for (std::int32_t id = output.id; id >= 0; --id) {
            const auto& g = grads[static_cast<std::size_t>(id)];
            if (g.empty()) continue;
            accumulate_inputs(nodes_[static_cast<std::size_t>(id)], g, grads);
        }

        GradientMap map;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            if (n.op != Op::kLeaf || !n.value.requires_grad) continue;
            auto& g = grads[i];
            Tensor t = Tensor::zeros(n.value.shape);
            if (!g.empty()) t.data = std::move(g);
            map.insert(Var{static_cast<std::int32_t>(i)}, std::move(t));
        }
        return map;
    }

private:
    // deque: references to stored tensors stay valid while nodes are appended
    std::deque<Node> nodes_;

    const Node& node(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ContractError("invalid node handle");
        return nodes_[static_cast<std::size_t>(v.id)];
    }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Var push_op(Op op, std::initializer_list<Var> ins, Tensor value) {
        Node n;
        n.op = op;
        for (Var v : ins) n.inputs.push_back(v.id);
        value.requires_grad = false;
        n.value = std::move(value);
        return push(std::move(n));
    }

    static ShapeError shape_error(Op op, const Shape& a, const Shape& b = {}) {
        std::string msg = std::string(op_name(op)) + ": incompatible shapes " + shape_str(a);
        if (!b.empty()) msg += " and " + shape_str(b);
        return ShapeError(msg);
    }

    template <typename F>
    Var unary(Op op, Var a, F f) {
        const Tensor& ta = node(a).value;
        Tensor out = Tensor::zeros(ta.shape);
        for (std::size_t i = 0; i < ta.data.size(); ++i) out.data[i] = f(ta.data[i]);
        return push_op(op, {a}, std::move(out));
    }

    // add/sub/mul with same shapes, or scalar (numel 1) on either side.
    Var binary_pointwise(Op op, Var a, Var b) {
        const Tensor& ta = node(a).value;
        const Tensor& tb = node(b).value;
        const bool sa = ta.is_scalar(), sb = tb.is_scalar();
        if (!sa && !sb && ta.shape != tb.shape) throw shape_error(op, ta.shape, tb.shape);
        const Shape& os = sa ? tb.shape : ta.shape;
        Tensor out = Tensor::zeros(os);
        const auto n = out.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            const double x = ta.data[static_cast<std::size_t>(sa ? 0 : i)];
            const double y = tb.data[static_cast<std::size_t>(sb ? 0 : i)];
            out.data[static_cast<std::size_t>(i)] =
                op == Op::kAdd ? x + y : (op == Op::kSub ? x - y : x * y);
        }
        return push_op(op, {a, b}, std::move(out));
    }

    static void matmul_accum(const double* a, const double* b, double* c, std::int64_t m,
                             std::int64_t k, std::int64_t n) {
        for (std::int64_t i = 0; i < m; ++i) {
            const double* ai = a + i * k;
            double* ci = c + i * n;
            for (std::int64_t p = 0; p < k; ++p) {
                const double av = ai[p];
                if (av == 0.0) continue;
                const double* bp = b + p * n;
                for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    }

    static void matmul_at_b(const double* a, const double* b, double* c, std::int64_t m,
                            std::int64_t k, std::int64_t n) {
        // c (k x n) += a^T (k x m)^T... a is (m x k), computes a^T * b
        for (std::int64_t i = 0; i < m; ++i) {
            const double* ai = a + i * k;
            const double* bi = b + i * n;
            for (std::int64_t p = 0; p < k; ++p) {
                const double av = ai[p];
                if (av == 0.0) continue;
                double* cp = c + p * n;
                for (std::int64_t j = 0; j < n; ++j) cp[j] += av * bi[j];
            }
        }
    }

    static void matmul_a_bt(const double* a, const double* b, double* c, std::int64_t m,
                            std::int64_t k, std::int64_t n) {
        // a is (m x n), b is (k x n), computes a * b^T into c (m x k)
        for (std::int64_t i = 0; i < m; ++i) {
            const double* ai = a + i * n;
            double* ci = c + i * k;
            for (std::int64_t p = 0; p < k; ++p) {
                const double* bp = b + p * n;
                double s = 0.0;
                for (std::int64_t j = 0; j < n; ++j) s += ai[j] * bp[j];
                ci[p] += s;
            }
        }
    }

    void accumulate_inputs(const Node& n, const std::vector<double>& g,
                           std::vector<std::vector<double>>& grads) const {
        auto ensure = [&](std::int32_t id) -> std::vector<double>& {
            auto& slot = grads[static_cast<std::size_t>(id)];
            if (slot.empty()) slot.assign(nodes_[static_cast<std::size_t>(id)].value.data.size(), 0.0);
            return slot;
        };
        switch (n.op) {
            case Op::kLeaf:
                return;
            case Op::kMatmul: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& b = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                const auto m = a.shape[0], k = a.shape[1], c = b.shape[1];
                // dA = g * B^T ; dB = A^T * g
                matmul_a_bt(g.data(), b.data.data(), ensure(n.inputs[0]).data(), m, k, c);
                matmul_at_b(a.data.data(), g.data(), ensure(n.inputs[1]).data(), m, k, c);
                return;
            }
            case Op::kAdd:
            case Op::kSub:
            case Op::kMul: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& b = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                const bool sa = a.is_scalar() && !b.is_scalar();
                const bool sb = b.is_scalar() && !a.is_scalar();
                auto& da = ensure(n.inputs[0]);
                auto& db = ensure(n.inputs[1]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double gi = g[i];
                    const double av = a.data[sa ? 0 : i];
                    const double bv = b.data[sb ? 0 : i];
                    double ga, gb;
                    if (n.op == Op::kAdd) {
                        ga = gi;
                        gb = gi;
                    } else if (n.op == Op::kSub) {
                        ga = gi;
                        gb = -gi;
                    } else {
                        ga = gi * bv;
                        gb = gi * av;
                    }
                    da[sa ? 0 : i] += ga;
                    db[sb ? 0 : i] += gb;
                }
                return;
            }
            case Op::kScalarMul: {
                auto& da = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += n.scalar_arg * g[i];
                return;
            }
            case Op::kTranspose: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const auto m = a.shape[0], c = a.shape[1];
                auto& da = ensure(n.inputs[0]);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < c; ++j)
                        da[static_cast<std::size_t>(i * c + j)] += g[static_cast<std::size_t>(j * m + i)];
                return;
            }
            case Op::kReshape: {
                auto& da = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                return;
            }
            case Op::kConcat: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& b = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                const int axis = n.axis_arg;
                std::int64_t outer = 1, inner = 1;
                for (int d = 0; d < axis; ++d) outer *= a.shape[d];
                for (std::int64_t d = axis + 1; d < a.rank(); ++d) inner *= a.shape[d];
                const std::int64_t wa = a.shape[axis] * inner, wb = b.shape[axis] * inner;
                auto& da = ensure(n.inputs[0]);
                auto& db = ensure(n.inputs[1]);
                for (std::int64_t o = 0; o < outer; ++o) {
                    const double* go = g.data() + o * (wa + wb);
                    for (std::int64_t i = 0; i < wa; ++i) da[static_cast<std::size_t>(o * wa + i)] += go[i];
                    for (std::int64_t i = 0; i < wb; ++i) db[static_cast<std::size_t>(o * wb + i)] += go[wa + i];
                }
                return;
            }
            case Op::kSoftmaxLastDim: {
                const Tensor& y = n.value;
                const auto h = y.shape.back();
                const auto rows = y.numel() / h;
                auto& da = ensure(n.inputs[0]);
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* yr = y.data.data() + r * h;
                    const double* gr = g.data() + r * h;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < h; ++j) dot += yr[j] * gr[j];
                    for (std::int64_t j = 0; j < h; ++j)
                        da[static_cast<std::size_t>(r * h + j)] += yr[j] * (gr[j] - dot);
                }
                return;
            }
            case Op::kLog: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                auto& da = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / a.data[i];
                return;
            }
            case Op::kExp: {
                auto& da = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.value.data[i];
                return;
            }
            case Op::kSigmoid: {
                auto& da = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double s = n.value.data[i];
                    da[i] += g[i] * s * (1.0 - s);
                }
                return;
            }
            case Op::kRelu: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                auto& da = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (a.data[i] > 0) da[i] += g[i];
                return;
            }
            case Op::kLayerNorm: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& gamma = nodes_[static_cast<std::size_t>(n.inputs[1])].value;
                const auto h = x.shape.back();
                const auto rows = x.numel() / h;
                const double eps = n.scalar_arg;
                auto& dx = ensure(n.inputs[0]);
                auto& dgamma = ensure(n.inputs[1]);
                auto& dbeta = ensure(n.inputs[2]);
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* xr = x.data.data() + r * h;
                    const double* gr = g.data() + r * h;
                    double mean = 0.0;
                    for (std::int64_t j = 0; j < h; ++j) mean += xr[j];
                    mean /= static_cast<double>(h);
                    double var = 0.0;
                    for (std::int64_t j = 0; j < h; ++j) var += (xr[j] - mean) * (xr[j] - mean);
                    var /= static_cast<double>(h);
                    const double inv = 1.0 / std::sqrt(var + eps);
                    // xhat_j = (x_j - mean) * inv
                    double sum_gg = 0.0, sum_ggx = 0.0;
                    for (std::int64_t j = 0; j < h; ++j) {
                        const double xhat = (xr[j] - mean) * inv;
                        const double gg = gr[j] * gamma.data[static_cast<std::size_t>(j)];
                        sum_gg += gg;
                        sum_ggx += gg * xhat;
                        dgamma[static_cast<std::size_t>(j)] += gr[j] * xhat;
                        dbeta[static_cast<std::size_t>(j)] += gr[j];
                    }
                    const double hd = static_cast<double>(h);
                    for (std::int64_t j = 0; j < h; ++j) {
                        const double xhat = (xr[j] - mean) * inv;
                        const double gg = gr[j] * gamma.data[static_cast<std::size_t>(j)];
                        dx[static_cast<std::size_t>(r * h + j)] +=
                            inv * (gg - sum_gg / hd - xhat * sum_ggx / hd);
                    }
                }
                return;
            }
            case Op::kL2NormalizeLastDim: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const Tensor& y = n.value;
                const auto h = x.shape.back();
                const auto rows = x.numel() / h;
                auto& dx = ensure(n.inputs[0]);
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* xr = x.data.data() + r * h;
                    const double* yr = y.data.data() + r * h;
                    const double* gr = g.data() + r * h;
                    double norm = 0.0;
                    for (std::int64_t j = 0; j < h; ++j) norm += xr[j] * xr[j];
                    norm = std::sqrt(norm);
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < h; ++j) dot += yr[j] * gr[j];
                    for (std::int64_t j = 0; j < h; ++j)
                        dx[static_cast<std::size_t>(r * h + j)] += (gr[j] - yr[j] * dot) / norm;
                }
                return;
            }
            case Op::kReduceSum: {
                auto& da = ensure(n.inputs[0]);
                for (auto& v : da) v += g[0];
                return;
            }
            case Op::kReduceMean: {
                auto& da = ensure(n.inputs[0]);
                const double s = g[0] / static_cast<double>(da.size());
                for (auto& v : da) v += s;
                return;
            }
            case Op::kReduceMax: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                auto& da = ensure(n.inputs[0]);
                if (a.rank() == 1) {
                    da[static_cast<std::size_t>(n.index_arg[0])] += g[0];
                } else {
                    const auto c = a.shape[1];
                    if (n.axis_arg == 0) {
                        for (std::int64_t j = 0; j < c; ++j)
                            da[static_cast<std::size_t>(n.index_arg[static_cast<std::size_t>(j)] * c + j)] +=
                                g[static_cast<std::size_t>(j)];
                    } else {
                        for (std::size_t i = 0; i < n.index_arg.size(); ++i)
                            da[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(n.index_arg[i])] += g[i];
                    }
                }
                return;
            }
            case Op::kGatherRows: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
                const auto inner = a.numel() / a.shape[0];
                auto& da = ensure(n.inputs[0]);
                for (std::size_t r = 0; r < n.index_arg.size(); ++r) {
                    const double* gr = g.data() + static_cast<std::int64_t>(r) * inner;
                    double* dr = da.data() + n.index_arg[r] * inner;
                    for (std::int64_t i = 0; i < inner; ++i) dr[i] += gr[i];
                }
                return;
            }
        }
    }
};

}  // namespace dentalign::ad
