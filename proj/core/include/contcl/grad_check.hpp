#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "contcl/tape.hpp"

namespace contcl {

// Builds a scalar-rooted graph over the given differentiable inputs.
using GraphFn = std::function<Value(Tape&, const std::vector<Value>&)>;

// Compares the analytic gradient of fn's root against central finite
// differences at `point`. Returns the maximum relative error over all input
// entries, with relative error |a-n| / max(1, |a|, |n|).
double max_rel_grad_error(const GraphFn& fn, const std::vector<Tensor>& point, double step);

// Same check for a single op: the op output is reduced to a scalar through a
// fixed random-weight contraction so the full Jacobian is exercised.
// `point` must lie in the op's domain, away from non-differentiable kinks.
double grad_check(OpKind kind, const std::vector<Tensor>& point, double step,
                  OpAttr attr = {}, std::uint64_t weight_seed = 7);

}  // namespace contcl
