#include "contcl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "contcl/errors.hpp"

namespace contcl {

namespace {

double eval(const GraphFn& fn, const std::vector<Tensor>& point) {
    Tape tape;
    std::vector<Value> inputs;
    inputs.reserve(point.size());
    for (const Tensor& t : point) inputs.push_back(tape.input(t));
    Value root = fn(tape, inputs);
    return tape.scalar_value(root);
}

}  // namespace

double max_rel_grad_error(const GraphFn& fn, const std::vector<Tensor>& point, double step) {
    if (step <= 0.0) throw shape_error("max_rel_grad_error: step must be positive");

    Tape tape;
    std::vector<Value> inputs;
    inputs.reserve(point.size());
    for (const Tensor& t : point) inputs.push_back(tape.input(t));
    Value root = fn(tape, inputs);
    tape.backward(root);

    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const Tensor& analytic = tape.grad(inputs[i]);
        for (std::size_t j = 0; j < point[i].size(); ++j) {
            std::vector<Tensor> mutated = point;
            mutated[i][j] += step;
            const double f_plus = eval(fn, mutated);
            mutated[i][j] -= 2.0 * step;
            const double f_minus = eval(fn, mutated);
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[j];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

double grad_check(OpKind kind, const std::vector<Tensor>& point, double step, OpAttr attr,
                  std::uint64_t weight_seed) {
    GraphFn fn = [kind, attr, weight_seed](Tape& tape, const std::vector<Value>& inputs) {
        Value out = tape.apply(kind, inputs, attr);
        const Tensor& v = tape.value(out);
        if (v.is_scalar()) return out;
        std::mt19937_64 rng(weight_seed);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        Tensor weights(v.shape());
        for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = dist(rng);
        return tape.dot(out, tape.constant(weights));
    };
    return max_rel_grad_error(fn, point, step);
}

}  // namespace contcl
