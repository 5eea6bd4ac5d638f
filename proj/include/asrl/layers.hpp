#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "asrl/graph.hpp"
#include "asrl/rng.hpp"
#include "asrl/tensor.hpp"

namespace asrl {

inline constexpr std::size_t kNoParam = static_cast<std::size_t>(-1);

// One named parameter tensor. Non-trainable entries (batch-norm running
// stats) are skipped by the optimizer and by weight clipping.
struct Param {
    std::string name;
    Tensor value;
    bool trainable = true;
};

// Ordered, name-unique parameter collection. Order is the update and
// serialization order, so it must be deterministic.
class ParamStore {
public:
    std::size_t add(std::string name, Tensor value, bool trainable = true);

    std::size_t size() const { return items_.size(); }
    Param& operator[](std::size_t i) { return items_[i]; }
    const Param& operator[](std::size_t i) const { return items_[i]; }

    // nullptr when absent
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;

    // total number of trainable scalar values
    std::size_t trainable_count() const;

private:
    std::vector<Param> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Fills every parameter from its name suffix: ".weight" draws Normal(0, 0.02),
// ".scale" and ".running_var" become 1, everything else 0. Each parameter gets
// its own stream keyed by scope and name, so insertion order does not matter.
void init_params(ParamStore& store, std::uint64_t seed, const std::string& scope);

// x[b,in] W[in,out] bias[out] -> [b,out]
NodeId dense(Graph& g, NodeId x, NodeId weight, NodeId bias);

// x[b,ci,h,w] k[co,ci,kh,kw] bias[co]
NodeId conv_layer(Graph& g, NodeId x, NodeId kernel, NodeId bias, int stride, int pad);

// x[b,ci,h,w] k[ci,co,kh,kw] bias[co]; out = (in-1)*stride - 2*pad + kernel
NodeId deconv_layer(Graph& g, NodeId x, NodeId kernel, NodeId bias, int stride, int pad);

struct BnResult {
    NodeId out;
    // per-channel batch statistics, detached, for the running-stat update
    Tensor batch_mean;
    Tensor batch_var;
};

// Train mode: normalize x[b,c,...] per channel over batch and spatial dims
// with biased variance, then apply scale/shift. Requires batch >= 2.
BnResult batchnorm_train(Graph& g, NodeId x, NodeId scale, NodeId shift, double eps);

// Eval mode: deterministic affine map from stored running statistics.
NodeId batchnorm_eval(Graph& g, NodeId x, const Tensor& running_mean, const Tensor& running_var,
                      NodeId scale, NodeId shift, double eps);

}  // namespace asrl
