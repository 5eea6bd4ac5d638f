#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace asrl {

// One row of the shifted-Gaussian comparison: N(0,1) against N(shift,1).
// neg_j_d is the critic's Wasserstein estimate, w1_exact the sample distance
// computed without any critic.
struct ToyW1Row {
    double shift = 0.0;
    double w1_exact = 0.0;
    double neg_j_d = 0.0;
};

// Trains a scalar-input critic (1 -> hidden -> hidden -> 1, relu) with the
// gradient-penalty objective for each shift, on fresh Gaussian batches every
// step. The estimate averages -(mean fake - mean real) over the final tenth
// of the steps; the exact value uses oracle_samples draws per side. A sanity
// check on the objective: the estimate should track the true distance, which
// grows with the shift.
std::vector<ToyW1Row> toy_w1_experiment(std::uint64_t seed,
                                        const std::vector<double>& shifts = {0.0, 0.5, 1.0, 2.0},
                                        int critic_steps = 2000, std::size_t batch = 64,
                                        std::size_t hidden = 64,
                                        std::size_t oracle_samples = 10000);

}  // namespace asrl
