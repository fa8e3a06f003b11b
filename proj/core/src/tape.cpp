#include "contcl/tape.hpp"

#include <cmath>
#include <string>

#include "contcl/errors.hpp"

namespace contcl {

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Input: return "input";
        case OpKind::Constant: return "constant";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::ScalarMul: return "scalar_mul";
        case OpKind::MatMul: return "matmul";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::RowL2Normalize: return "row_l2_normalize";
        case OpKind::Dot: return "dot";
        case OpKind::ConcatRows: return "concat_rows";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "?";
}

namespace {

void expect_arity(OpKind kind, std::size_t got, std::size_t want) {
    if (got != want) {
        throw shape_error(std::string(op_name(kind)) + ": expected " +
                          std::to_string(want) + " inputs, got " + std::to_string(got));
    }
}

void accumulate(Tensor& slot, const Tensor& g) {
    for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
}

}  // namespace

Value Tape::input(Tensor v) {
    Node n;
    n.kind = OpKind::Input;
    n.value = std::move(v);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::constant(Tensor v) {
    Node n;
    n.kind = OpKind::Constant;
    n.value = std::move(v);
    n.requires_grad = false;
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node_at(Value v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw shape_error("Tape: invalid node handle");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Value v) const { return node_at(v).value; }

double Tape::scalar_value(Value v) const {
    const Tensor& t = node_at(v).value;
    if (!t.is_scalar()) throw shape_error("scalar_value: node is not scalar");
    return t[0];
}

const Tensor& Tape::grad(Value v) const {
    if (!grads_valid_) throw shape_error("grad: backward has not run");
    return node_at(v).grad;
}

Tensor Tape::compute(OpKind kind, const std::vector<int>& in, const OpAttr& attr,
                     Tensor* aux) const {
    auto val = [&](std::size_t i) -> const Tensor& { return nodes_[in[i]].value; };
    switch (kind) {
        case OpKind::Add:
            expect_arity(kind, in.size(), 2);
            return contcl::add(val(0), val(1));
        case OpKind::Sub:
            expect_arity(kind, in.size(), 2);
            return contcl::sub(val(0), val(1));
        case OpKind::Mul:
            expect_arity(kind, in.size(), 2);
            return contcl::mul(val(0), val(1));
        case OpKind::ScalarMul:
            expect_arity(kind, in.size(), 1);
            return contcl::scalar_mul(val(0), attr.scalar);
        case OpKind::MatMul:
            expect_arity(kind, in.size(), 2);
            return contcl::matmul(val(0), val(1));
        case OpKind::Tanh:
            expect_arity(kind, in.size(), 1);
            return contcl::tanh(val(0));
        case OpKind::Relu:
            expect_arity(kind, in.size(), 1);
            return contcl::relu(val(0));
        case OpKind::Exp:
            expect_arity(kind, in.size(), 1);
            return contcl::exp(val(0));
        case OpKind::Log:
            expect_arity(kind, in.size(), 1);
            return contcl::log(val(0));
        case OpKind::Sum:
            expect_arity(kind, in.size(), 1);
            return Tensor::scalar(contcl::sum(val(0)));
        case OpKind::Mean:
            expect_arity(kind, in.size(), 1);
            return Tensor::scalar(contcl::mean(val(0)));
        case OpKind::RowL2Normalize:
            expect_arity(kind, in.size(), 1);
            return contcl::row_l2_normalize(val(0));
        case OpKind::Dot:
            expect_arity(kind, in.size(), 2);
            return Tensor::scalar(contcl::dot(val(0), val(1)));
        case OpKind::ConcatRows: {
            if (in.empty()) throw shape_error("concat_rows: no inputs");
            std::vector<Tensor> parts;
            parts.reserve(in.size());
            for (std::size_t i = 0; i < in.size(); ++i) parts.push_back(val(i));
            return contcl::concat_rows(parts);
        }
        case OpKind::SoftmaxCrossEntropy:
            expect_arity(kind, in.size(), 1);
            return contcl::softmax_cross_entropy(val(0), attr.labels, aux);
        case OpKind::Input:
        case OpKind::Constant:
            break;
    }
    throw shape_error("apply: leaf kinds cannot be applied");
}

Value Tape::apply(OpKind kind, const std::vector<Value>& inputs, OpAttr attr) {
    Node n;
    n.kind = kind;
    n.attr = std::move(attr);
    n.inputs.reserve(inputs.size());
    for (Value v : inputs) {
        node_at(v);  // bounds check
        n.inputs.push_back(v.id);
        n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    }
    n.value = compute(kind, n.inputs, n.attr, &n.aux);
    if (!n.value.all_finite()) {
        throw numeric_error(std::string(op_name(kind)) + ": non-finite result");
    }
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Value root) {
    const Node& r = node_at(root);
    if (!r.value.is_scalar()) {
        throw shape_error("backward: root must be scalar");
    }
    for (Node& n : nodes_) {
        n.grad = Tensor::zeros(n.value.shape());
    }
    nodes_[root.id].grad[0] = 1.0;

    std::vector<char> touched(nodes_.size(), 0);
    touched[root.id] = 1;

    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!touched[id] || !n.requires_grad) continue;
        const Tensor& g = n.grad;
        auto gslot = [&](std::size_t i) -> Tensor& { return nodes_[n.inputs[i]].grad; };
        auto wants = [&](std::size_t i) -> bool {
            touched[n.inputs[i]] = 1;
            return nodes_[n.inputs[i]].requires_grad;
        };
        auto ival = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value; };

        switch (n.kind) {
            case OpKind::Input:
            case OpKind::Constant:
                break;
            case OpKind::Add:
                if (wants(0)) accumulate(gslot(0), g);
                if (wants(1)) accumulate(gslot(1), g);
                break;
            case OpKind::Sub:
                if (wants(0)) accumulate(gslot(0), g);
                if (wants(1)) {
                    Tensor& s = gslot(1);
                    for (std::size_t i = 0; i < s.size(); ++i) s[i] -= g[i];
                }
                break;
            case OpKind::Mul:
                if (wants(0)) accumulate(gslot(0), contcl::mul(g, ival(1)));
                if (wants(1)) accumulate(gslot(1), contcl::mul(g, ival(0)));
                break;
            case OpKind::ScalarMul:
                if (wants(0)) accumulate(gslot(0), contcl::scalar_mul(g, n.attr.scalar));
                break;
            case OpKind::MatMul:
                if (wants(0)) accumulate(gslot(0), matmul_nt(g, ival(1)));
                if (wants(1)) accumulate(gslot(1), matmul_tn(ival(0), g));
                break;
            case OpKind::Tanh:
                if (wants(0)) {
                    Tensor& s = gslot(0);
                    for (std::size_t i = 0; i < s.size(); ++i) {
                        const double y = n.value[i];
                        s[i] += g[i] * (1.0 - y * y);
                    }
                }
                break;
            case OpKind::Relu:
                if (wants(0)) {
                    Tensor& s = gslot(0);
                    const Tensor& x = ival(0);
                    for (std::size_t i = 0; i < s.size(); ++i) {
                        if (x[i] > 0.0) s[i] += g[i];
                    }
                }
                break;
            case OpKind::Exp:
                if (wants(0)) {
                    Tensor& s = gslot(0);
                    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i] * n.value[i];
                }
                break;
            case OpKind::Log:
                if (wants(0)) {
                    Tensor& s = gslot(0);
                    const Tensor& x = ival(0);
                    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i] / x[i];
                }
                break;
            case OpKind::Sum:
                if (wants(0)) {
                    Tensor& s = gslot(0);
                    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[0];
                }
                break;
            case OpKind::Mean:
                if (wants(0)) {
                    Tensor& s = gslot(0);
                    const double gi = g[0] / static_cast<double>(s.size());
                    for (std::size_t i = 0; i < s.size(); ++i) s[i] += gi;
                }
                break;
            case OpKind::RowL2Normalize:
                if (wants(0)) {
                    Tensor& s = gslot(0);
                    const Tensor& x = ival(0);
                    const std::size_t rows = x.rows(), cols = x.cols();
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double* xr = x.data() + i * cols;
                        const double* yr = n.value.data() + i * cols;
                        const double* gr = g.data() + i * cols;
                        double* sr = s.data() + i * cols;
                        double norm_sq = 0.0, gy = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) {
                            norm_sq += xr[j] * xr[j];
                            gy += gr[j] * yr[j];
                        }
                        const double inv_norm = 1.0 / std::sqrt(norm_sq);
                        for (std::size_t j = 0; j < cols; ++j) {
                            sr[j] += (gr[j] - yr[j] * gy) * inv_norm;
                        }
                    }
                }
                break;
            case OpKind::Dot:
                if (wants(0)) accumulate(gslot(0), contcl::scalar_mul(ival(1), g[0]));
                if (wants(1)) accumulate(gslot(1), contcl::scalar_mul(ival(0), g[0]));
                break;
            case OpKind::ConcatRows: {
                std::size_t offset = 0;
                for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                    const std::size_t count = nodes_[n.inputs[i]].value.size();
                    if (wants(i)) {
                        Tensor& s = gslot(i);
                        for (std::size_t j = 0; j < count; ++j) s[j] += g[offset + j];
                    }
                    offset += count;
                }
                break;
            }
            case OpKind::SoftmaxCrossEntropy:
                if (wants(0)) {
                    Tensor& s = gslot(0);
                    const Tensor& probs = n.aux;
                    const std::size_t rows = probs.rows(), cols = probs.cols();
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double gi = g[i];
                        if (gi == 0.0) continue;
                        const double* pr = probs.data() + i * cols;
                        double* sr = s.data() + i * cols;
                        for (std::size_t j = 0; j < cols; ++j) sr[j] += gi * pr[j];
                        sr[static_cast<std::size_t>(n.attr.labels[i])] -= gi;
                    }
                }
                break;
        }
    }
    grads_valid_ = true;
}

}  // namespace contcl
