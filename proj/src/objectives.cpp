#include "asrl/objectives.hpp"

#include <algorithm>

#include "asrl/errors.hpp"

namespace asrl {

namespace {

constexpr double kProbEps = 1e-12;

void require_probabilities(const Graph& g, NodeId n, const char* who) {
    const Tensor& t = g.value(n);
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < 0.0 || t[i] > 1.0)
            throw NumericsError(std::string(who) + ": discriminator output outside [0,1]");
    }
}

// -mean(log p), p clamped into (0,1)
NodeId neg_mean_log(Graph& g, NodeId p) {
    NodeId c = clamp(g, p, kProbEps, 1.0 - kProbEps);
    return scale(g, mean(g, log_op(g, c)), -1.0);
}

}  // namespace

int default_n_critic(ObjectiveKind kind) { return kind == ObjectiveKind::kGan ? 1 : 5; }

NodeId gan_d_loss(Graph& g, NodeId d_real, NodeId d_fake) {
    require_probabilities(g, d_real, "gan_d_loss");
    require_probabilities(g, d_fake, "gan_d_loss");
    NodeId one_minus_fake = add_const(g, scale(g, d_fake, -1.0), 1.0);
    return add(g, neg_mean_log(g, d_real), neg_mean_log(g, one_minus_fake));
}

NodeId gan_g_loss(Graph& g, NodeId d_fake) {
    require_probabilities(g, d_fake, "gan_g_loss");
    return neg_mean_log(g, d_fake);
}

NodeId gan_zero_sum_g_loss(Graph& g, NodeId d_real, NodeId d_fake) {
    return scale(g, gan_d_loss(g, d_real, d_fake), -1.0);
}

NodeId wgan_d_loss(Graph& g, NodeId d_real, NodeId d_fake) {
    return sub(g, mean(g, d_fake), mean(g, d_real));
}

NodeId wgan_g_loss(Graph& g, NodeId d_fake) { return scale(g, mean(g, d_fake), -1.0); }

NodeId interpolate(Graph& g, NodeId x_real, NodeId x_fake, NodeId eps) {
    return add(g, mul_row(g, sub(g, x_real, x_fake), eps), x_fake);
}

NodeId wgan_gp_d_loss(Graph& g, NodeId d_real, NodeId d_fake, NodeId penalty, double lambda_gp) {
    if (lambda_gp < 0.0) throw ConfigError("wgan_gp_d_loss: lambda must be nonnegative");
    return add(g, wgan_d_loss(g, d_real, d_fake), scale(g, penalty, lambda_gp));
}

NodeId l1_term(Graph& g, NodeId a, NodeId b) {
    return mean(g, row_sum(g, abs_op(g, sub(g, a, b))));
}

NodeId total_g_loss(Graph& g, NodeId j_g, NodeId l1, double gamma) {
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("total_g_loss: gamma must be in [0,1]");
    return add(g, scale(g, j_g, 1.0 - gamma), scale(g, l1, gamma));
}

void clip_weights(ParamStore& params, double c) {
    if (c <= 0.0) throw ConfigError("clip_weights: bound must be positive");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        Tensor& v = params[i].value;
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = std::clamp(v[j], -c, c);
    }
}

}  // namespace asrl
