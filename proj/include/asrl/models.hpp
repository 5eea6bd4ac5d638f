#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asrl/layers.hpp"

namespace asrl {

enum class Arch { kDcgan, kResnet, kMlp };
enum class Role { kGenerator, kDiscriminator };
enum class InputMode { kLowresImage, kNoise128 };
enum class Activation { kRelu, kTanh };
enum class OutputActivation { kTanh, kSigmoid, kLinear };

struct ModelConfig {
    Arch arch = Arch::kDcgan;
    Role role = Role::kGenerator;
    bool use_batchnorm = true;
    Activation activation = Activation::kRelu;
    InputMode input_mode = InputMode::kLowresImage;
    OutputActivation output_activation = OutputActivation::kTanh;
    // width of the first discriminator stage / the generator trunk
    std::size_t base_channels = 64;
    std::size_t mlp_hidden = 512;
    // high-res side length; low-res inputs are a quarter of this
    std::size_t image_size = 64;
    std::size_t image_channels = 3;
    double bn_eps = 1e-5;
    double bn_momentum = 0.9;
};

// Batch-norm behaviour for one forward pass. Frozen mode normalizes with
// batch statistics like train mode but leaves the stored running stats alone;
// the training loop uses it whenever one network's pass exists only to feed
// the other network's loss, so a discriminator step cannot modify generator
// state and vice versa.
enum class BnMode { kTrain, kFrozen, kEval };

// A built network: parameter store plus a flat list of forward instructions.
class Model {
public:
    static Model build(const ModelConfig& cfg, std::uint64_t seed);

    // Records every parameter as a leaf of g; result is indexed by store order.
    std::vector<NodeId> bind(Graph& g) const;

    // Runs the network on the bound parameters. In train mode, batch-norm uses
    // batch statistics and updates the stored running stats as a side effect.
    // Discriminators return shape [batch]; generators return image tensors.
    NodeId forward(Graph& g, const std::vector<NodeId>& bound, NodeId input, BnMode mode);
    NodeId forward(Graph& g, const std::vector<NodeId>& bound, NodeId input, bool train) {
        return forward(g, bound, input, train ? BnMode::kTrain : BnMode::kEval);
    }

    // Convenience: bind + forward in eval mode (no stat updates).
    NodeId forward_eval(Graph& g, NodeId input);

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }
    std::size_t parameter_count() const { return store_.trainable_count(); }

    // Expected input shape for a given batch size.
    std::vector<std::size_t> input_shape(std::size_t batch) const;

private:
    struct Step {
        enum Kind {
            kDense,
            kConv,
            kDeconv,
            kBatchNorm,
            kActivation,       // act: 0 relu, 1 tanh, 2 sigmoid
            kFlatten,
            kReshapePerSample, // shape holds per-sample dims
            kResidualBegin,
            kResidualEnd,
        } kind;
        std::size_t w = kNoParam, b = kNoParam;
        std::size_t bn_scale = kNoParam, bn_shift = kNoParam;
        std::size_t bn_mean = kNoParam, bn_var = kNoParam;
        int stride = 1, pad = 0, act = 0;
        std::vector<std::size_t> shape;
    };

    ModelConfig cfg_;
    ParamStore store_;
    std::vector<Step> steps_;
};

}  // namespace asrl
