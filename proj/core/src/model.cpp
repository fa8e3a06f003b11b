#include "contcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "contcl/errors.hpp"
#include "contcl/rng.hpp"

namespace contcl {

namespace {

Tensor gaussian(std::vector<std::size_t> shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

}  // namespace

EncoderState EncoderState::init(int vocab, int embed_dim, int hidden_dim, int rep_dim,
                                std::uint64_t seed) {
    if (vocab <= 0 || embed_dim <= 0 || hidden_dim <= 0 || rep_dim <= 0) {
        throw config_error("EncoderState::init: dimensions must be positive");
    }
    auto rng = make_rng(seed, "encoder-init");
    EncoderState s;
    // Token embeddings are kept at unit-ish norm so that the adversarial
    // radius (a fraction of a token vector) is a meaningful perturbation;
    // the first layer compensates for the mean-pooling shrinkage.
    s.embedding = gaussian({static_cast<std::size_t>(vocab), static_cast<std::size_t>(embed_dim)},
                           0.15, rng);
    s.w1 = gaussian({static_cast<std::size_t>(embed_dim), static_cast<std::size_t>(hidden_dim)},
                    2.0, rng);
    s.b1 = Tensor::zeros({1, static_cast<std::size_t>(hidden_dim)});
    s.w2 = gaussian({static_cast<std::size_t>(hidden_dim), static_cast<std::size_t>(rep_dim)},
                    1.5 / std::sqrt(static_cast<double>(hidden_dim)), rng);
    s.b2 = Tensor::zeros({1, static_cast<std::size_t>(rep_dim)});
    return s;
}

bool EncoderState::same_layout(const EncoderState& other) const {
    return embedding.shape() == other.embedding.shape() && w1.shape() == other.w1.shape() &&
           b1.shape() == other.b1.shape() && w2.shape() == other.w2.shape() &&
           b2.shape() == other.b2.shape();
}

ClassifierState ClassifierState::empty(int rep_dim) {
    ClassifierState c;
    c.weights = Tensor::zeros({static_cast<std::size_t>(rep_dim), 0});
    c.bias = Tensor::zeros({1, 0});
    return c;
}

int ClassifierState::class_index(int class_id) const {
    for (std::size_t i = 0; i < class_order.size(); ++i) {
        if (class_order[i] == class_id) return static_cast<int>(i);
    }
    return -1;
}

ClassifierState expand_classifier(const ClassifierState& cls,
                                  const std::vector<int>& new_class_ids,
                                  std::uint64_t seed) {
    for (std::size_t i = 0; i < new_class_ids.size(); ++i) {
        if (cls.class_index(new_class_ids[i]) >= 0) {
            throw input_error("expand_classifier: class id already present: " +
                              std::to_string(new_class_ids[i]));
        }
        for (std::size_t j = i + 1; j < new_class_ids.size(); ++j) {
            if (new_class_ids[i] == new_class_ids[j]) {
                throw input_error("expand_classifier: duplicate class id: " +
                                  std::to_string(new_class_ids[i]));
            }
        }
    }
    if (new_class_ids.empty()) return cls;

    const std::size_t d = cls.weights.rows();
    const std::size_t old_c = cls.weights.cols();
    const std::size_t new_c = old_c + new_class_ids.size();

    ClassifierState out;
    out.weights = Tensor::zeros({d, new_c});
    out.bias = Tensor::zeros({1, new_c});
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < old_c; ++c) out.weights(r, c) = cls.weights(r, c);
    }
    for (std::size_t c = 0; c < old_c; ++c) out.bias(0, c) = cls.bias(0, c);

    auto rng = make_rng(seed, "classifier-expand");
    std::normal_distribution<double> dist(0.0, 0.02);
    for (std::size_t c = old_c; c < new_c; ++c) {
        for (std::size_t r = 0; r < d; ++r) out.weights(r, c) = dist(rng);
    }
    out.class_order = cls.class_order;
    out.class_order.insert(out.class_order.end(), new_class_ids.begin(), new_class_ids.end());
    return out;
}

Tensor token_mean_counts(const Example& example, int vocab) {
    if (example.tokens.empty()) {
        throw input_error("encode: example " + std::to_string(example.id) + " has no tokens");
    }
    Tensor counts({1, static_cast<std::size_t>(vocab)});
    const double w = 1.0 / static_cast<double>(example.tokens.size());
    for (int tok : example.tokens) {
        if (tok < 0 || tok >= vocab) {
            throw input_error("encode: token id " + std::to_string(tok) +
                              " outside vocabulary of size " + std::to_string(vocab));
        }
        counts[static_cast<std::size_t>(tok)] += w;
    }
    return counts;
}

Tensor encode(const EncoderState& enc, const Example& example) {
    const Tensor counts = token_mean_counts(example, enc.vocab());
    const Tensor e = matmul(counts, enc.embedding);
    const Tensor h = tanh(add(matmul(e, enc.w1), enc.b1));
    return add(matmul(h, enc.w2), enc.b2);
}

Tensor logits(const ClassifierState& cls, const Tensor& z) {
    if (!cls.has_classes()) throw shape_error("logits: classifier has no classes");
    return add(matmul(z, cls.weights), cls.bias);
}

int predict(const ClassifierState& cls, const Tensor& z) {
    const Tensor scores = logits(cls, z);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return cls.class_order[best];
}

EncoderNodes encoder_inputs(Tape& tape, const EncoderState& enc) {
    return EncoderNodes{tape.input(enc.embedding), tape.input(enc.w1), tape.input(enc.b1),
                        tape.input(enc.w2), tape.input(enc.b2)};
}

ClassifierNodes classifier_inputs(Tape& tape, const ClassifierState& cls) {
    return ClassifierNodes{tape.input(cls.weights), tape.input(cls.bias)};
}

Value encode_nodes(Tape& tape, const EncoderNodes& enc, const Batch& batch, int vocab,
                   const std::vector<Value>* token_deltas) {
    if (batch.empty()) throw shape_error("encode_nodes: empty batch");
    const std::size_t b = batch.size();
    const std::size_t v = static_cast<std::size_t>(vocab);

    Tensor counts({b, v});
    for (std::size_t i = 0; i < b; ++i) {
        const Tensor row = token_mean_counts(*batch[i], vocab);
        std::copy(row.values().begin(), row.values().end(), counts.data() + i * v);
    }
    Value e = tape.matmul(tape.constant(std::move(counts)), enc.embedding);

    if (token_deltas) {
        if (token_deltas->size() != b) {
            throw shape_error("encode_nodes: one delta node per example required");
        }
        // Mean over each example's token rows, as a block row-averaging matrix
        // applied to the stacked perturbations.
        std::size_t total_rows = 0;
        for (std::size_t i = 0; i < b; ++i) {
            total_rows += tape.value((*token_deltas)[i]).rows();
        }
        Tensor averager({b, total_rows});
        std::size_t offset = 0;
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t rows = tape.value((*token_deltas)[i]).rows();
            const double w = 1.0 / static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r) averager(i, offset + r) = w;
            offset += rows;
        }
        Value stacked = tape.concat_rows(*token_deltas);
        e = tape.add(e, tape.matmul(tape.constant(std::move(averager)), stacked));
    }

    Value ones = tape.constant(Tensor::full({b, 1}, 1.0));
    Value h = tape.tanh(tape.add(tape.matmul(e, enc.w1), tape.matmul(ones, enc.b1)));
    return tape.add(tape.matmul(h, enc.w2), tape.matmul(ones, enc.b2));
}

Value logits_nodes(Tape& tape, const ClassifierNodes& cls, Value z_batch) {
    const std::size_t b = tape.value(z_batch).rows();
    Value ones = tape.constant(Tensor::full({b, 1}, 1.0));
    return tape.add(tape.matmul(z_batch, cls.weights), tape.matmul(ones, cls.bias));
}

void ModelGrads::accumulate(const ModelGrads& other) {
    auto acc = [](Tensor& dst, const Tensor& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    acc(embedding, other.embedding);
    acc(w1, other.w1);
    acc(b1, other.b1);
    acc(w2, other.w2);
    acc(b2, other.b2);
    acc(weights, other.weights);
    acc(bias, other.bias);
}

void ModelGrads::scale(double factor) {
    for (Tensor* t : {&embedding, &w1, &b1, &w2, &b2, &weights, &bias}) {
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] *= factor;
    }
}

ModelGrads read_model_grads(const Tape& tape, const EncoderNodes& enc,
                            const ClassifierNodes& cls) {
    return ModelGrads{tape.grad(enc.embedding), tape.grad(enc.w1), tape.grad(enc.b1),
                      tape.grad(enc.w2),        tape.grad(enc.b2), tape.grad(cls.weights),
                      tape.grad(cls.bias)};
}

void sgd_step(EncoderState& enc, ClassifierState& cls, const ModelGrads& grads,
              double lr_encoder, double lr_classifier) {
    auto step = [](Tensor& p, const Tensor& g, double lr) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    };
    step(enc.embedding, grads.embedding, lr_encoder);
    step(enc.w1, grads.w1, lr_encoder);
    step(enc.b1, grads.b1, lr_encoder);
    step(enc.w2, grads.w2, lr_encoder);
    step(enc.b2, grads.b2, lr_encoder);
    step(cls.weights, grads.weights, lr_classifier);
    step(cls.bias, grads.bias, lr_classifier);
}

namespace {

nlohmann::json tensor_to_json(const Tensor& t) {
    return nlohmann::json{{"shape", t.shape()}, {"data", t.values()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
    return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                  j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderState& enc,
                     const ClassifierState& cls) {
    nlohmann::json j;
    j["format"] = "contcl-checkpoint";
    j["version"] = 1;
    j["encoder"] = {{"embedding", tensor_to_json(enc.embedding)},
                    {"w1", tensor_to_json(enc.w1)},
                    {"b1", tensor_to_json(enc.b1)},
                    {"w2", tensor_to_json(enc.w2)},
                    {"b2", tensor_to_json(enc.b2)}};
    j["classifier"] = {{"weights", tensor_to_json(cls.weights)},
                       {"bias", tensor_to_json(cls.bias)},
                       {"class_order", cls.class_order}};
    std::ofstream out(path);
    if (!out) throw input_error("save_checkpoint: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

std::pair<EncoderState, ClassifierState> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("load_checkpoint: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("load_checkpoint: " + std::string(e.what()));
    }
    if (j.value("format", "") != "contcl-checkpoint") {
        throw input_error("load_checkpoint: not a checkpoint file: " + path.string());
    }
    EncoderState enc;
    enc.embedding = tensor_from_json(j.at("encoder").at("embedding"));
    enc.w1 = tensor_from_json(j.at("encoder").at("w1"));
    enc.b1 = tensor_from_json(j.at("encoder").at("b1"));
    enc.w2 = tensor_from_json(j.at("encoder").at("w2"));
    enc.b2 = tensor_from_json(j.at("encoder").at("b2"));
    ClassifierState cls;
    cls.weights = tensor_from_json(j.at("classifier").at("weights"));
    cls.bias = tensor_from_json(j.at("classifier").at("bias"));
    cls.class_order = j.at("classifier").at("class_order").get<std::vector<int>>();
    return {std::move(enc), std::move(cls)};
}

}  // namespace contcl
