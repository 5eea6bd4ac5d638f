#include "asrl/optim.hpp"

#include <cmath>

#include "asrl/errors.hpp"

namespace asrl {

OptimizerConfig default_optimizer_for(ObjectiveKind kind) {
    OptimizerConfig c;
    switch (kind) {
        case ObjectiveKind::kGan:
            c.kind = OptimizerKind::kAdam;
            c.alpha = 2e-4;
            c.beta1 = 0.5;
            c.beta2 = 0.999;
            break;
        case ObjectiveKind::kWgan:
            c.kind = OptimizerKind::kRmsProp;
            c.alpha = 1e-4;
            break;
        case ObjectiveKind::kWganGp:
            c.kind = OptimizerKind::kAdam;
            c.alpha = 2e-4;
            c.beta1 = 0.5;
            c.beta2 = 0.9;
            break;
    }
    return c;
}

Optimizer::Optimizer(OptimizerConfig cfg, const ParamStore& params) : cfg_(cfg) {
    const bool needs_m = cfg_.kind == OptimizerKind::kAdam;
    const bool needs_v = cfg_.kind != OptimizerKind::kSgd;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const bool tr = params[i].trainable;
        m_.push_back(needs_m && tr ? Tensor(params[i].value.shape()) : Tensor());
        v_.push_back(needs_v && tr ? Tensor(params[i].value.shape()) : Tensor());
    }
}

void Optimizer::step(ParamStore& params, const std::vector<const Tensor*>& grads) {
    if (grads.size() != params.size())
        throw ShapeError("optimizer step: gradient list length mismatch");
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        if (grads[i] == nullptr)
            throw ShapeError("optimizer step: missing gradient for " + params[i].name);
        const Tensor& grad = *grads[i];
        Tensor& theta = params[i].value;
        if (!grad.same_shape(theta))
            throw ShapeError("optimizer step: gradient shape mismatch for " + params[i].name);
        if (!grad.all_finite())
            throw NumericsError("optimizer step: non-finite gradient for " + params[i].name);

        switch (cfg_.kind) {
            case OptimizerKind::kSgd:
                for (std::size_t j = 0; j < theta.size(); ++j)
                    theta[j] -= cfg_.alpha * grad[j];
                break;
            case OptimizerKind::kRmsProp: {
                Tensor& v = v_[i];
                for (std::size_t j = 0; j < theta.size(); ++j) {
                    v[j] = cfg_.rho * v[j] + (1.0 - cfg_.rho) * grad[j] * grad[j];
                    theta[j] -= cfg_.alpha * grad[j] / std::sqrt(v[j] + cfg_.eps);
                }
                break;
            }
            case OptimizerKind::kAdam: {
                Tensor& m = m_[i];
                Tensor& v = v_[i];
                const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
                const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
                for (std::size_t j = 0; j < theta.size(); ++j) {
                    m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad[j];
                    v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad[j] * grad[j];
                    const double mhat = m[j] / c1;
                    const double vhat = v[j] / c2;
                    theta[j] -= cfg_.alpha * mhat / (std::sqrt(vhat) + cfg_.eps);
                }
                break;
            }
        }
    }
}

}  // namespace asrl
