#include "asrl/layers.hpp"

#include <cmath>

#include "asrl/errors.hpp"

namespace asrl {

std::size_t ParamStore::add(std::string name, Tensor value, bool trainable) {
    if (index_.count(name)) throw ShapeError("duplicate parameter name: " + name);
    index_.emplace(name, items_.size());
    items_.push_back(Param{std::move(name), std::move(value), trainable});
    return items_.size() - 1;
}

Param* ParamStore::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
}

const Param* ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
}

std::size_t ParamStore::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : items_)
        if (p.trainable) n += p.value.size();
    return n;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void init_params(ParamStore& store, std::uint64_t seed, const std::string& scope) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        Param& p = store[i];
        if (ends_with(p.name, ".weight")) {
            RngStream r(seed, "init/" + scope + "/" + p.name);
            for (std::size_t j = 0; j < p.value.size(); ++j) p.value[j] = 0.02 * r.normal();
        } else if (ends_with(p.name, ".scale") || ends_with(p.name, ".running_var")) {
            for (std::size_t j = 0; j < p.value.size(); ++j) p.value[j] = 1.0;
        } else {
            for (std::size_t j = 0; j < p.value.size(); ++j) p.value[j] = 0.0;
        }
    }
}

NodeId dense(Graph& g, NodeId x, NodeId weight, NodeId bias) {
    return add_chan(g, matmul(g, x, weight), bias);
}

NodeId conv_layer(Graph& g, NodeId x, NodeId kernel, NodeId bias, int stride, int pad) {
    return add_chan(g, conv2d(g, x, kernel, stride, pad), bias);
}

NodeId deconv_layer(Graph& g, NodeId x, NodeId kernel, NodeId bias, int stride, int pad) {
    return add_chan(g, transposed_conv2d(g, x, kernel, stride, pad), bias);
}

BnResult batchnorm_train(Graph& g, NodeId x, NodeId scale_p, NodeId shift_p, double eps) {
    const Tensor& xv = g.value(x);
    if (xv.rank() < 2) throw ShapeError("batchnorm: input must be [batch, channels, ...]");
    if (xv.dim(0) < 2) throw ShapeError("batchnorm: train mode needs batch >= 2");
    const std::size_t c = xv.dim(1);
    const double m = static_cast<double>(xv.size() / c);

    NodeId mean_c = scale(g, chan_sum(g, x), 1.0 / m);
    NodeId xc = add_chan(g, x, scale(g, mean_c, -1.0));
    NodeId var_c = scale(g, chan_sum(g, square(g, xc)), 1.0 / m);
    NodeId inv_std = div_no_nan(g, g.leaf(Tensor::ones({c})),
                                sqrt_op(g, add_const(g, var_c, eps)));
    NodeId xn = mul_chan(g, xc, inv_std);
    NodeId out = add_chan(g, mul_chan(g, xn, scale_p), shift_p);
    return BnResult{out, g.value(mean_c), g.value(var_c)};
}

NodeId batchnorm_eval(Graph& g, NodeId x, const Tensor& running_mean, const Tensor& running_var,
                      NodeId scale_p, NodeId shift_p, double eps) {
    const Tensor& xv = g.value(x);
    if (xv.rank() < 2) throw ShapeError("batchnorm: input must be [batch, channels, ...]");
    if (running_mean.rank() != 1 || running_mean.dim(0) != xv.dim(1) ||
        !running_mean.same_shape(running_var))
        throw ShapeError("batchnorm: running stats do not match channel count");

    Tensor neg_mean(running_mean.shape());
    Tensor inv_std(running_var.shape());
    for (std::size_t i = 0; i < neg_mean.size(); ++i) {
        neg_mean[i] = -running_mean[i];
        inv_std[i] = 1.0 / std::sqrt(running_var[i] + eps);
    }
    NodeId xn = mul_chan(g, add_chan(g, x, g.leaf(neg_mean)), g.leaf(inv_std));
    return add_chan(g, mul_chan(g, xn, scale_p), shift_p);
}

}  // namespace asrl
