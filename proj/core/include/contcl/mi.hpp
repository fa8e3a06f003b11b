#pragma once

#include <cstdint>
#include <vector>

#include "contcl/data.hpp"
#include "contcl/model.hpp"
#include "contcl/tensor.hpp"

namespace contcl {

// Statistics network T(a,b): 2-layer tanh MLP on the concatenated pair.
struct StatisticsNet {
    Tensor w1;  // {d_a + d_b, hidden}
    Tensor b1;  // {1, hidden}
    Tensor w2;  // {hidden, 1}
    Tensor b2;  // {1, 1}

    static StatisticsNet init(int input_dim, int hidden, std::uint64_t seed);
};

// Paired draws from the joint distribution: row i of `a` goes with row i of `b`.
struct MiSamples {
    Tensor a;
    Tensor b;

    std::size_t count() const { return a.rows(); }
};

struct MineOptions {
    int hidden = 64;
    int epochs = 200;
    int batch = 128;
    double lr = 0.05;
    double heldout_fraction = 0.2;
    int average_last = 10;  // held-out evaluations averaged into the estimate
};

struct MiEstimate {
    double raw = 0.0;      // Donsker-Varadhan bound on the held-out split
    double clamped = 0.0;  // max(raw, 0)
    bool degenerate = false;
};

// Trains the statistics net by gradient ascent on the Donsker-Varadhan bound
//   E_joint[T(a,b)] - log E_marginal[exp(T(a,b'))]
// where b' is an in-batch shuffle of b, and returns the bound evaluated on a
// held-out split, averaged over the last `average_last` evaluations.
// Constant inputs on either side yield a degenerate ~0 estimate.
MiEstimate mine_estimate(const MiSamples& samples, const MineOptions& opts,
                         std::uint64_t seed);

enum class MiMode {
    InputRepresentation,  // I(X;Z): frozen random-embedding featurization of x vs z
    RepresentationLabel,  // I(Z;Y): z vs one-hot label
};

MiEstimate measure_representation_mi(const EncoderState& enc,
                                     const std::vector<const Example*>& examples,
                                     MiMode mode, const MineOptions& opts,
                                     std::uint64_t seed);

// Pairs loaded from a representation dump for the RepresentationLabel mode.
MiSamples rep_label_samples(const std::vector<std::pair<int, std::vector<double>>>&
                                label_and_rep);

}  // namespace contcl
