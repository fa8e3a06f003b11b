#pragma once

#include <cstdint>
#include <vector>

#include "contcl/contrastive.hpp"
#include "contcl/model.hpp"
#include "contcl/tensor.hpp"

namespace contcl {

// K-step projected-gradient settings for replay augmentation.
struct AdvConfig {
    int steps = 2;
    double epsilon = 0.3;
    double alpha = 0.1;

    enum class Init { Zero, Uniform };
    Init init = Init::Zero;

    void validate() const;
};

// Projects onto the Frobenius-norm epsilon ball: inputs inside the ball pass
// through unchanged, outside ones are radially rescaled.
Tensor project(Tensor delta, double epsilon);

// Replay objective L2 = ce + lambda2 * cp over a memory batch.
struct ReplayObjectiveOpts {
    double tau2 = 0.05;
    double lambda2 = 0.05;
    bool use_cp = true;  // false: L2 reduces to cross-entropy
};

// One differentiable evaluation of L2, optionally at perturbed embeddings.
struct ReplayPass {
    Tape tape;
    EncoderNodes enc;
    ClassifierNodes cls;
    Value objective;
    std::vector<Value> deltas;  // empty when built without perturbations
};

// `deltas`, when given, holds one {num_tokens, d_e} perturbation per example,
// added to the embedding outputs before mean pooling.
ReplayPass build_replay_pass(const EncoderState& enc, const ClassifierState& cls,
                             const Batch& batch, const PastRepStore& past,
                             const ReplayObjectiveOpts& opts,
                             const std::vector<Tensor>* deltas = nullptr);

// One ascent step per example:
//   g = grad_delta L2(F(x + delta), y); delta' = project(delta + alpha*g/||g||, eps)
// A zero gradient leaves the perturbation unchanged.
std::vector<Tensor> adv_step(const EncoderState& enc, const ClassifierState& cls,
                             const Batch& batch, const PastRepStore& past,
                             const ReplayObjectiveOpts& opts,
                             const std::vector<Tensor>& deltas, const AdvConfig& cfg);

struct ReplayLossResult {
    double objective = 0.0;           // mean of the per-step L2 values
    std::vector<double> step_losses;  // L2 at delta_0 .. delta_{K-1}
    ModelGrads grads;                 // accumulated over steps, scaled by 1/K
};

// FreeLB-style loop: evaluates L2 and accumulates parameter gradients at each
// of the K perturbation steps, taking one projected ascent step in between.
// Perturbations start fresh every call (no carry-over between batches).
ReplayLossResult adv_replay_loss(const EncoderState& enc, const ClassifierState& cls,
                                 const Batch& batch, const PastRepStore& past,
                                 const ReplayObjectiveOpts& opts, const AdvConfig& cfg,
                                 std::uint64_t init_seed = 0);

// Single clean evaluation of L2 (no perturbation nodes on the tape).
ReplayLossResult plain_replay_loss(const EncoderState& enc, const ClassifierState& cls,
                                   const Batch& batch, const PastRepStore& past,
                                   const ReplayObjectiveOpts& opts);

}  // namespace contcl
