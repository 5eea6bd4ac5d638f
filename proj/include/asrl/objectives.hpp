#pragma once

#include "asrl/graph.hpp"
#include "asrl/layers.hpp"

namespace asrl {

enum class ObjectiveKind { kGan, kWgan, kWganGp };

struct ObjectiveConfig {
    ObjectiveKind kind = ObjectiveKind::kWganGp;
    double lambda_gp = 10.0;  // WGAN_GP only
    double gamma_l1 = 0.9;
    double clip_c = 0.01;  // WGAN only
    int n_critic = 5;
};

// 5 critic steps per generator step for the Wasserstein objectives, 1:1 for
// the classic objective.
int default_n_critic(ObjectiveKind kind);

// Classic saturating discriminator loss -mean(log d_real) - mean(log(1-d_fake)).
// Inputs must be probabilities in [0,1]; they are clamped away from the log
// singularities at 1e-12.
NodeId gan_d_loss(Graph& g, NodeId d_real, NodeId d_fake);

// Non-saturating generator loss -mean(log d_fake).
NodeId gan_g_loss(Graph& g, NodeId d_fake);

// Zero-sum generator loss, the exact negation of gan_d_loss. Tests only;
// training uses gan_g_loss.
NodeId gan_zero_sum_g_loss(Graph& g, NodeId d_real, NodeId d_fake);

// mean(d_fake) - mean(d_real) / -mean(d_fake) on unbounded critic scores.
NodeId wgan_d_loss(Graph& g, NodeId d_real, NodeId d_fake);
NodeId wgan_g_loss(Graph& g, NodeId d_fake);

// x_hat = eps*x_real + (1-eps)*x_fake with one eps per batch row.
NodeId interpolate(Graph& g, NodeId x_real, NodeId x_fake, NodeId eps);

// wgan_d_loss + lambda * penalty, penalty from grad_norm_penalty.
NodeId wgan_gp_d_loss(Graph& g, NodeId d_real, NodeId d_fake, NodeId penalty, double lambda_gp);

// mean over batch rows of the L1 norm of (a - b).
NodeId l1_term(Graph& g, NodeId a, NodeId b);

// (1-gamma)*j_g + gamma*l1
NodeId total_g_loss(Graph& g, NodeId j_g, NodeId l1, double gamma);

// Clamps every trainable parameter into [-c, c]; running stats untouched.
void clip_weights(ParamStore& params, double c);

}  // namespace asrl
