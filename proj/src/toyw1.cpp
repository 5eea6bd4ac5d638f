#include "asrl/toyw1.hpp"

#include <cmath>
#include <string>

#include "asrl/autodiff.hpp"
#include "asrl/errors.hpp"
#include "asrl/evalkit.hpp"
#include "asrl/graph.hpp"
#include "asrl/layers.hpp"
#include "asrl/objectives.hpp"
#include "asrl/optim.hpp"
#include "asrl/rng.hpp"

namespace asrl {

namespace {

NodeId critic(Graph& g, const std::vector<NodeId>& p, NodeId x) {
    NodeId h = g.apply(OpKind::kRelu, {dense(g, x, p[0], p[1])});
    h = g.apply(OpKind::kRelu, {dense(g, h, p[2], p[3])});
    return dense(g, h, p[4], p[5]);
}

Tensor column(RngStream& r, std::size_t n, double shift) {
    Tensor t({n, 1});
    for (std::size_t i = 0; i < n; ++i) t[i] = r.normal() + shift;
    return t;
}

}  // namespace

std::vector<ToyW1Row> toy_w1_experiment(std::uint64_t seed, const std::vector<double>& shifts,
                                        int critic_steps, std::size_t batch, std::size_t hidden,
                                        std::size_t oracle_samples) {
    if (shifts.empty()) throw ConfigError("toy_w1: no shifts given");
    if (critic_steps < 10) throw ConfigError("toy_w1: need at least 10 critic steps");
    if (batch == 0 || hidden == 0 || oracle_samples == 0)
        throw ConfigError("toy_w1: batch, hidden and oracle_samples must be positive");

    constexpr double kLambdaGp = 10.0;
    std::vector<ToyW1Row> rows;
    for (std::size_t si = 0; si < shifts.size(); ++si) {
        const double shift = shifts[si];
        const std::string tag = std::to_string(si);

        ParamStore store;
        store.add("fc1.weight", Tensor({1, hidden}));
        store.add("fc1.bias", Tensor({hidden}));
        store.add("fc2.weight", Tensor({hidden, hidden}));
        store.add("fc2.bias", Tensor({hidden}));
        store.add("fc3.weight", Tensor({hidden, 1}));
        store.add("fc3.bias", Tensor({1}));
        init_params(store, seed, "toyw1/" + tag);

        OptimizerConfig ocfg = default_optimizer_for(ObjectiveKind::kWganGp);
        Optimizer opt(ocfg, store);
        RngStream real_rng(seed, "toy/real/" + tag);
        RngStream fake_rng(seed, "toy/fake/" + tag);
        RngStream eps_rng(seed, "toy/eps/" + tag);

        const int tail_start = critic_steps - critic_steps / 10;
        double tail_sum = 0.0;
        int tail_n = 0;
        for (int step = 0; step < critic_steps; ++step) {
            Graph g;
            std::vector<NodeId> p(store.size());
            for (std::size_t i = 0; i < store.size(); ++i) p[i] = g.leaf(store[i].value);
            NodeId x_real = g.leaf(column(real_rng, batch, 0.0));
            NodeId x_fake = g.leaf(column(fake_rng, batch, shift));
            Tensor eps_t({batch});
            for (std::size_t i = 0; i < batch; ++i) eps_t[i] = eps_rng.uniform();
            NodeId x_hat = interpolate(g, x_real, x_fake, g.leaf(std::move(eps_t)));

            NodeId d_real = critic(g, p, x_real);
            NodeId d_fake = critic(g, p, x_fake);
            NodeId d_hat = critic(g, p, x_hat);
            NodeId base = wgan_d_loss(g, d_real, d_fake);
            NodeId penalty = grad_norm_penalty(g, d_hat, x_hat);
            NodeId loss = wgan_gp_d_loss(g, d_real, d_fake, penalty, kLambdaGp);

            const double base_val = g.value(base)[0];
            if (!std::isfinite(g.value(loss)[0]))
                throw NumericsError("toy_w1: non-finite critic loss at step " +
                                    std::to_string(step));
            GradientMap grads = backward(g, loss);
            std::vector<NodeId> gids(store.size());
            for (std::size_t i = 0; i < store.size(); ++i) gids[i] = grad_or_zero(g, grads, p[i]);
            std::vector<const Tensor*> gptrs(store.size());
            for (std::size_t i = 0; i < store.size(); ++i) gptrs[i] = &g.value(gids[i]);
            opt.step(store, gptrs);

            if (step >= tail_start) {
                tail_sum += -base_val;
                ++tail_n;
            }
        }

        // Common random numbers: the shifted side reuses the same draws, so
        // the sample distance equals the population distance (exactly the
        // shift, and exactly zero at shift 0) instead of carrying sampling
        // noise of its own.
        RngStream oracle_rng(seed, "toy/oracle/" + tag);
        std::vector<double> a(oracle_samples), b(oracle_samples);
        for (std::size_t i = 0; i < oracle_samples; ++i) {
            a[i] = oracle_rng.normal();
            b[i] = a[i] + shift;
        }

        rows.push_back({shift, w1_exact_1d(std::move(a), std::move(b)), tail_sum / tail_n});
    }
    return rows;
}

}  // namespace asrl
