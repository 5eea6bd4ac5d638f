#pragma once

#include <cstdint>
#include <vector>

#include "asrl/layers.hpp"
#include "asrl/objectives.hpp"

namespace asrl {

enum class OptimizerKind { kAdam, kRmsProp, kSgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::kAdam;
    double alpha = 2e-4;
    double beta1 = 0.5;   // Adam
    double beta2 = 0.999; // Adam
    double rho = 0.9;     // RMSProp decay
    double eps = 1e-8;
};

// Optimizer defaults tied to the objective: the classic objective trains with
// Adam(2e-4, 0.5, 0.999), clipped Wasserstein with RMSProp(1e-4), and the
// gradient-penalty variant with Adam(2e-4, 0.5, 0.9).
OptimizerConfig default_optimizer_for(ObjectiveKind kind);

class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, const ParamStore& params);

    // grads[i] pairs with params[i]; entries for non-trainable params are
    // ignored and may be null. Trainable entries must be present, finite, and
    // shape-matched.
    void step(ParamStore& params, const std::vector<const Tensor*>& grads);

    const OptimizerConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return t_; }

    // Checkpoint access: first/second moment buffers parallel to the store
    // (empty tensors at non-trainable slots), plus the step counter.
    std::vector<Tensor>& moment1() { return m_; }
    std::vector<Tensor>& moment2() { return v_; }
    const std::vector<Tensor>& moment1() const { return m_; }
    const std::vector<Tensor>& moment2() const { return v_; }
    void set_step_count(std::uint64_t t) { t_ = t; }

private:
    OptimizerConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace asrl
