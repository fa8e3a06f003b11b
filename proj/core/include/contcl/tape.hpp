#pragma once

#include <cstddef>
#include <vector>

#include "contcl/tensor.hpp"

namespace contcl {

enum class OpKind {
    Input,
    Constant,
    Add,
    Sub,
    Mul,
    ScalarMul,
    MatMul,
    Tanh,
    Relu,
    Exp,
    Log,
    Sum,
    Mean,
    RowL2Normalize,
    Dot,
    ConcatRows,
    SoftmaxCrossEntropy,
};

const char* op_name(OpKind kind);

struct OpAttr {
    double scalar = 0.0;       // ScalarMul factor
    std::vector<int> labels;   // SoftmaxCrossEntropy class indices, one per row
};

// Lightweight handle to a tape node.
struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Eagerly evaluated reverse-mode graph. Node values are computed on append;
// backward() fills one gradient slot per node. Single-owner, not thread-safe;
// independent tapes may be used concurrently.
class Tape {
public:
    Tape() = default;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Differentiable leaf.
    Value input(Tensor v);
    // Non-differentiable leaf; backward never accumulates into it
    // (stop-gradient), so grad() stays exactly zero.
    Value constant(Tensor v);

    // Generic dispatch; the typed wrappers below all route through here.
    Value apply(OpKind kind, const std::vector<Value>& inputs, OpAttr attr = {});

    Value add(Value a, Value b) { return apply(OpKind::Add, {a, b}); }
    Value sub(Value a, Value b) { return apply(OpKind::Sub, {a, b}); }
    Value mul(Value a, Value b) { return apply(OpKind::Mul, {a, b}); }
    Value scalar_mul(Value a, double c) {
        OpAttr attr;
        attr.scalar = c;
        return apply(OpKind::ScalarMul, {a}, attr);
    }
    Value matmul(Value a, Value b) { return apply(OpKind::MatMul, {a, b}); }
    Value tanh(Value a) { return apply(OpKind::Tanh, {a}); }
    Value relu(Value a) { return apply(OpKind::Relu, {a}); }
    Value exp(Value a) { return apply(OpKind::Exp, {a}); }
    Value log(Value a) { return apply(OpKind::Log, {a}); }
    Value sum(Value a) { return apply(OpKind::Sum, {a}); }
    Value mean(Value a) { return apply(OpKind::Mean, {a}); }
    Value row_l2_normalize(Value a) { return apply(OpKind::RowL2Normalize, {a}); }
    Value dot(Value a, Value b) { return apply(OpKind::Dot, {a, b}); }
    Value concat_rows(const std::vector<Value>& parts) {
        return apply(OpKind::ConcatRows, parts);
    }
    Value softmax_cross_entropy(Value logits, int label) {
        OpAttr attr;
        attr.labels = {label};
        return apply(OpKind::SoftmaxCrossEntropy, {logits}, attr);
    }
    Value softmax_cross_entropy(Value logits, std::vector<int> labels) {
        OpAttr attr;
        attr.labels = std::move(labels);
        return apply(OpKind::SoftmaxCrossEntropy, {logits}, attr);
    }

    // Gradient of the scalar root w.r.t. every reachable node, accumulated
    // additively over fan-out. May be called once per tape.
    void backward(Value root);

    const Tensor& value(Value v) const;
    const Tensor& grad(Value v) const;
    double scalar_value(Value v) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        OpKind kind;
        std::vector<int> inputs;
        Tensor value;
        Tensor grad;
        Tensor aux;  // cached locals (softmax probabilities)
        OpAttr attr;
        bool requires_grad = false;
    };

    Tensor compute(OpKind kind, const std::vector<int>& inputs, const OpAttr& attr,
                   Tensor* aux) const;
    const Node& node_at(Value v) const;

    std::vector<Node> nodes_;
    bool grads_valid_ = false;
};

}  // namespace contcl
