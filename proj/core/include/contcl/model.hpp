#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "contcl/data.hpp"
#include "contcl/tape.hpp"
#include "contcl/tensor.hpp"

namespace contcl {

// Token-embedding-mean encoder followed by a 2-layer tanh MLP.
// All weight matrices are stored input-dim x output-dim.
struct EncoderState {
    Tensor embedding;  // {V, d_e}
    Tensor w1;         // {d_e, d_h}
    Tensor b1;         // {1, d_h}
    Tensor w2;         // {d_h, d_z}
    Tensor b2;         // {1, d_z}

    static EncoderState init(int vocab, int embed_dim, int hidden_dim, int rep_dim,
                             std::uint64_t seed);

    int vocab() const { return static_cast<int>(embedding.rows()); }
    int embed_dim() const { return static_cast<int>(embedding.cols()); }
    int hidden_dim() const { return static_cast<int>(w1.cols()); }
    int rep_dim() const { return static_cast<int>(w2.cols()); }
    bool same_layout(const EncoderState& other) const;
};

// Linear head over all seen classes; grows as tasks introduce new classes.
// Column i of `weights` scores class_order[i]; old columns are never touched
// when the classifier expands.
struct ClassifierState {
    Tensor weights;  // {d_z, C_seen}
    Tensor bias;     // {1, C_seen}
    std::vector<int> class_order;

    static ClassifierState empty(int rep_dim);

    int num_classes() const { return static_cast<int>(class_order.size()); }
    bool has_classes() const { return !class_order.empty(); }
    // Index of a global class id in class_order, -1 if unseen.
    int class_index(int class_id) const;
};

// Appends columns for new class ids: seeded Gaussian (std 0.02) weights and
// zero bias. Existing columns are preserved bit-for-bit.
ClassifierState expand_classifier(const ClassifierState& cls,
                                  const std::vector<int>& new_class_ids,
                                  std::uint64_t seed);

// Normalized token-count row {1, V}: entry v is count(v) / num_tokens, so the
// product with the embedding table is the mean token embedding.
Tensor token_mean_counts(const Example& example, int vocab);

// Plain (tape-free) forward pass; bit-identical to the tape version.
Tensor encode(const EncoderState& enc, const Example& example);     // {1, d_z}
Tensor logits(const ClassifierState& cls, const Tensor& z);         // {1, C}
int predict(const ClassifierState& cls, const Tensor& z);           // argmax, lowest index wins ties

struct EncoderNodes {
    Value embedding, w1, b1, w2, b2;
};
struct ClassifierNodes {
    Value weights, bias;
};

EncoderNodes encoder_inputs(Tape& tape, const EncoderState& enc);
ClassifierNodes classifier_inputs(Tape& tape, const ClassifierState& cls);

// Batched differentiable encoding -> {B, d_z}. When token_deltas is given it
// must hold one {num_tokens, d_e} perturbation node per example, applied
// additively to the embedding outputs before mean pooling.
Value encode_nodes(Tape& tape, const EncoderNodes& enc, const Batch& batch, int vocab,
                   const std::vector<Value>* token_deltas = nullptr);
Value logits_nodes(Tape& tape, const ClassifierNodes& cls, Value z_batch);

struct ModelGrads {
    Tensor embedding, w1, b1, w2, b2, weights, bias;

    void accumulate(const ModelGrads& other);
    void scale(double factor);
};

ModelGrads read_model_grads(const Tape& tape, const EncoderNodes& enc,
                            const ClassifierNodes& cls);
void sgd_step(EncoderState& enc, ClassifierState& cls, const ModelGrads& grads,
              double lr_encoder, double lr_classifier);

// Versioned JSON checkpoint; float arrays round-trip bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const EncoderState& enc,
                     const ClassifierState& cls);
std::pair<EncoderState, ClassifierState> load_checkpoint(const std::filesystem::path& path);

}  // namespace contcl
