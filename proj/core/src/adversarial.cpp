#include "contcl/adversarial.hpp"

#include <cmath>
#include <random>
#include <string>

#include "contcl/errors.hpp"
#include "contcl/rng.hpp"

namespace contcl {

void AdvConfig::validate() const {
    if (steps < 1) throw config_error("AdvConfig: steps must be >= 1");
    if (epsilon <= 0.0) throw config_error("AdvConfig: epsilon must be positive");
    if (alpha <= 0.0) throw config_error("AdvConfig: alpha must be positive");
}

Tensor project(Tensor delta, double epsilon) {
    if (epsilon <= 0.0) throw config_error("project: epsilon must be positive");
    double norm = frobenius_norm(delta);
    if (norm <= epsilon) return delta;
    double scale = epsilon / norm;
    for (int round = 0; round < 8; ++round) {
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= scale;
        norm = frobenius_norm(delta);
        if (norm <= epsilon) return delta;
        // Rounding overshot by an ulp or two; shrink slightly harder.
        scale = (epsilon / norm) * (1.0 - 1e-15);
    }
    throw numeric_error("project: could not reach the epsilon ball");
}

ReplayPass build_replay_pass(const EncoderState& enc, const ClassifierState& cls,
                             const Batch& batch, const PastRepStore& past,
                             const ReplayObjectiveOpts& opts,
                             const std::vector<Tensor>* deltas) {
    if (batch.empty()) throw shape_error("build_replay_pass: empty batch");

    ReplayPass pass;
    pass.enc = encoder_inputs(pass.tape, enc);
    pass.cls = classifier_inputs(pass.tape, cls);

    std::vector<int> class_idx;
    std::vector<int> labels;
    class_idx.reserve(batch.size());
    labels.reserve(batch.size());
    for (const Example* e : batch) {
        const int idx = cls.class_index(e->label);
        if (idx < 0) {
            throw input_error("build_replay_pass: label " + std::to_string(e->label) +
                              " not in classifier");
        }
        class_idx.push_back(idx);
        labels.push_back(e->label);
    }

    std::vector<Value> delta_nodes;
    const std::vector<Value>* delta_ptr = nullptr;
    if (deltas) {
        if (deltas->size() != batch.size()) {
            throw shape_error("build_replay_pass: one delta per example required");
        }
        delta_nodes.reserve(deltas->size());
        for (std::size_t i = 0; i < deltas->size(); ++i) {
            const Tensor& d = (*deltas)[i];
            if (d.rows() != batch[i]->tokens.size() ||
                d.cols() != static_cast<std::size_t>(enc.embed_dim())) {
                throw shape_error("build_replay_pass: delta shape mismatch");
            }
            delta_nodes.push_back(pass.tape.input(d));
        }
        delta_ptr = &delta_nodes;
    }

    Value z = encode_nodes(pass.tape, pass.enc, batch, enc.vocab(), delta_ptr);
    Value scores = logits_nodes(pass.tape, pass.cls, z);
    Value ce = pass.tape.mean(pass.tape.softmax_cross_entropy(scores, class_idx));

    if (opts.use_cp) {
        Value zn = pass.tape.row_l2_normalize(z);
        ContrastiveLoss cp = loss_cp(pass.tape, zn, labels, past, opts.tau2);
        pass.objective = combine(pass.tape, ce, cp.loss, opts.lambda2);
    } else {
        pass.objective = ce;
    }
    pass.deltas = std::move(delta_nodes);
    return pass;
}

namespace {

std::vector<Tensor> step_deltas(const ReplayPass& pass, const std::vector<Tensor>& deltas,
                                const AdvConfig& cfg) {
    std::vector<Tensor> next;
    next.reserve(deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        const Tensor& g = pass.tape.grad(pass.deltas[i]);
        if (!g.all_finite()) {
            throw numeric_error("adv_step: non-finite perturbation gradient");
        }
        const double norm = frobenius_norm(g);
        if (norm == 0.0) {
            next.push_back(deltas[i]);
            continue;
        }
        Tensor moved = deltas[i];
        const double scale = cfg.alpha / norm;
        for (std::size_t j = 0; j < moved.size(); ++j) moved[j] += scale * g[j];
        next.push_back(project(std::move(moved), cfg.epsilon));
    }
    return next;
}

std::vector<Tensor> initial_deltas(const EncoderState& enc, const Batch& batch,
                                   const AdvConfig& cfg, std::uint64_t init_seed) {
    std::vector<Tensor> deltas;
    deltas.reserve(batch.size());
    const std::size_t d_e = static_cast<std::size_t>(enc.embed_dim());
    for (const Example* e : batch) {
        Tensor d({e->tokens.size(), d_e});
        deltas.push_back(std::move(d));
    }
    if (cfg.init == AdvConfig::Init::Uniform) {
        auto rng = make_rng(init_seed, "adv-delta-init");
        for (Tensor& d : deltas) {
            const double bound = cfg.epsilon / std::sqrt(static_cast<double>(d.size()));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = dist(rng);
            d = project(std::move(d), cfg.epsilon);
        }
    }
    return deltas;
}

}  // namespace

std::vector<Tensor> adv_step(const EncoderState& enc, const ClassifierState& cls,
                             const Batch& batch, const PastRepStore& past,
                             const ReplayObjectiveOpts& opts,
                             const std::vector<Tensor>& deltas, const AdvConfig& cfg) {
    // alpha = 0 is allowed here and leaves the perturbation unchanged.
    if (cfg.epsilon <= 0.0) throw config_error("adv_step: epsilon must be positive");
    if (cfg.alpha < 0.0) throw config_error("adv_step: alpha must be non-negative");
    ReplayPass pass = build_replay_pass(enc, cls, batch, past, opts, &deltas);
    pass.tape.backward(pass.objective);
    return step_deltas(pass, deltas, cfg);
}

ReplayLossResult adv_replay_loss(const EncoderState& enc, const ClassifierState& cls,
                                 const Batch& batch, const PastRepStore& past,
                                 const ReplayObjectiveOpts& opts, const AdvConfig& cfg,
                                 std::uint64_t init_seed) {
    cfg.validate();
    std::vector<Tensor> deltas = initial_deltas(enc, batch, cfg, init_seed);

    ReplayLossResult result;
    for (int t = 0; t < cfg.steps; ++t) {
        ReplayPass pass = build_replay_pass(enc, cls, batch, past, opts, &deltas);
        pass.tape.backward(pass.objective);
        result.step_losses.push_back(pass.tape.scalar_value(pass.objective));
        if (t == 0) {
            result.grads = read_model_grads(pass.tape, pass.enc, pass.cls);
        } else {
            result.grads.accumulate(read_model_grads(pass.tape, pass.enc, pass.cls));
        }
        if (t + 1 < cfg.steps) {
            deltas = step_deltas(pass, deltas, cfg);
        }
    }
    const double inv_k = 1.0 / static_cast<double>(cfg.steps);
    result.grads.scale(inv_k);
    double total = 0.0;
    for (double l : result.step_losses) total += l;
    result.objective = total * inv_k;
    return result;
}

ReplayLossResult plain_replay_loss(const EncoderState& enc, const ClassifierState& cls,
                                   const Batch& batch, const PastRepStore& past,
                                   const ReplayObjectiveOpts& opts) {
    ReplayPass pass = build_replay_pass(enc, cls, batch, past, opts);
    pass.tape.backward(pass.objective);
    ReplayLossResult result;
    result.objective = pass.tape.scalar_value(pass.objective);
    result.step_losses.push_back(result.objective);
    result.grads = read_model_grads(pass.tape, pass.enc, pass.cls);
    return result;
}

}  // namespace contcl
