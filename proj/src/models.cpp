#include "asrl/models.hpp"

#include "asrl/errors.hpp"

namespace asrl {

namespace {

const char* role_str(Role r) { return r == Role::kGenerator ? "generator" : "discriminator"; }

}  // namespace

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.image_size < 16 || cfg.image_size % 16 != 0)
        throw ConfigError("model: image_size must be a positive multiple of 16");
    if (cfg.image_channels == 0) throw ConfigError("model: image_channels must be positive");
    if (cfg.base_channels == 0) throw ConfigError("model: base_channels must be positive");
    if (cfg.arch == Arch::kMlp && cfg.mlp_hidden == 0)
        throw ConfigError("model: mlp_hidden must be positive");
    if (cfg.role == Role::kGenerator && cfg.output_activation != OutputActivation::kTanh)
        throw ConfigError("model: generators use a tanh output head");
    if (cfg.role == Role::kDiscriminator && cfg.output_activation == OutputActivation::kTanh)
        throw ConfigError("model: discriminator output must be sigmoid or linear");
    if (cfg.input_mode == InputMode::kNoise128 &&
        (cfg.role != Role::kGenerator || cfg.arch != Arch::kDcgan))
        throw ConfigError("model: noise input requires a dcgan-style generator");

    Model m;
    m.cfg_ = cfg;
    ParamStore& st = m.store_;
    std::vector<Step>& steps = m.steps_;

    const std::size_t L = cfg.image_size, l = L / 4, C = cfg.base_channels;
    const std::size_t ch = cfg.image_channels, H = cfg.mlp_hidden;
    const int hidden_act = cfg.activation == Activation::kRelu ? 0 : 1;

    auto dense_step = [&](const std::string& name, std::size_t in, std::size_t out) {
        Step s;
        s.kind = Step::kDense;
        s.w = st.add(name + ".weight", Tensor({in, out}));
        s.b = st.add(name + ".bias", Tensor({out}));
        steps.push_back(std::move(s));
    };
    auto conv_step = [&](const std::string& name, std::size_t ci, std::size_t co, std::size_t k,
                         int stride, int pad) {
        Step s;
        s.kind = Step::kConv;
        s.stride = stride;
        s.pad = pad;
        s.w = st.add(name + ".weight", Tensor({co, ci, k, k}));
        s.b = st.add(name + ".bias", Tensor({co}));
        steps.push_back(std::move(s));
    };
    auto deconv_step = [&](const std::string& name, std::size_t ci, std::size_t co, std::size_t k,
                           int stride, int pad) {
        Step s;
        s.kind = Step::kDeconv;
        s.stride = stride;
        s.pad = pad;
        s.w = st.add(name + ".weight", Tensor({ci, co, k, k}));
        s.b = st.add(name + ".bias", Tensor({co}));
        steps.push_back(std::move(s));
    };
    auto bn_step = [&](const std::string& name, std::size_t c) {
        if (!cfg.use_batchnorm) return;
        Step s;
        s.kind = Step::kBatchNorm;
        s.bn_scale = st.add(name + ".scale", Tensor({c}));
        s.bn_shift = st.add(name + ".shift", Tensor({c}));
        s.bn_mean = st.add(name + ".running_mean", Tensor({c}), false);
        s.bn_var = st.add(name + ".running_var", Tensor({c}), false);
        steps.push_back(std::move(s));
    };
    auto act_step = [&](int code) {
        Step s;
        s.kind = Step::kActivation;
        s.act = code;
        steps.push_back(std::move(s));
    };
    auto simple = [&](Step::Kind k) {
        Step s;
        s.kind = k;
        steps.push_back(std::move(s));
    };
    auto reshape_step = [&](std::vector<std::size_t> per_sample) {
        Step s;
        s.kind = Step::kReshapePerSample;
        s.shape = std::move(per_sample);
        steps.push_back(std::move(s));
    };

    if (cfg.role == Role::kDiscriminator && cfg.arch != Arch::kMlp) {
        // CNN critic: 4 stride-2 convs then one dense readout.
        conv_step("conv1", ch, C, 5, 2, 2);
        act_step(hidden_act);
        conv_step("conv2", C, 2 * C, 5, 2, 2);
        bn_step("bn2", 2 * C);
        act_step(hidden_act);
        conv_step("conv3", 2 * C, 4 * C, 5, 2, 2);
        bn_step("bn3", 4 * C);
        act_step(hidden_act);
        conv_step("conv4", 4 * C, 8 * C, 5, 2, 2);
        bn_step("bn4", 8 * C);
        act_step(hidden_act);
        simple(Step::kFlatten);
        dense_step("fc", 8 * C * (L / 16) * (L / 16), 1);
        if (cfg.output_activation == OutputActivation::kSigmoid) act_step(2);
        reshape_step({});
    } else if (cfg.role == Role::kDiscriminator) {
        // MLP critic
        simple(Step::kFlatten);
        dense_step("fc1", ch * L * L, H);
        bn_step("bn1", H);
        act_step(hidden_act);
        dense_step("fc2", H, H);
        bn_step("bn2", H);
        act_step(hidden_act);
        dense_step("fc3", H, H);
        bn_step("bn3", H);
        act_step(hidden_act);
        dense_step("fc4", H, 1);
        if (cfg.output_activation == OutputActivation::kSigmoid) act_step(2);
        reshape_step({});
    } else if (cfg.input_mode == InputMode::kNoise128) {
        // Project the noise vector to a small map, then four doubling deconvs.
        const std::size_t s0 = L / 16;
        dense_step("project", 128, 8 * C * s0 * s0);
        reshape_step({8 * C, s0, s0});
        bn_step("bn0", 8 * C);
        act_step(hidden_act);
        deconv_step("deconv1", 8 * C, 4 * C, 4, 2, 1);
        bn_step("bn1", 4 * C);
        act_step(hidden_act);
        deconv_step("deconv2", 4 * C, 2 * C, 4, 2, 1);
        bn_step("bn2", 2 * C);
        act_step(hidden_act);
        deconv_step("deconv3", 2 * C, C, 4, 2, 1);
        bn_step("bn3", C);
        act_step(hidden_act);
        deconv_step("deconv4", C, ch, 4, 2, 1);
        act_step(1);
    } else if (cfg.arch == Arch::kDcgan) {
        if (C % 4 != 0) throw ConfigError("model: dcgan generator needs base_channels % 4 == 0");
        conv_step("conv1", ch, C, 3, 1, 1);
        bn_step("bn1", C);
        act_step(hidden_act);
        conv_step("conv2", C, C, 3, 1, 1);
        bn_step("bn2", C);
        act_step(hidden_act);
        deconv_step("deconv1", C, C / 2, 4, 2, 1);
        bn_step("bn3", C / 2);
        act_step(hidden_act);
        deconv_step("deconv2", C / 2, C / 2, 3, 1, 1);
        bn_step("bn4", C / 2);
        act_step(hidden_act);
        deconv_step("deconv3", C / 2, C / 4, 4, 2, 1);
        bn_step("bn5", C / 4);
        act_step(hidden_act);
        deconv_step("deconv4", C / 4, ch, 3, 1, 1);
        act_step(1);
    } else if (cfg.arch == Arch::kResnet) {
        conv_step("conv_in", ch, C, 3, 1, 1);
        bn_step("bn_in", C);
        act_step(hidden_act);
        for (int i = 1; i <= 3; ++i) {
            const std::string blk = "block" + std::to_string(i);
            simple(Step::kResidualBegin);
            conv_step(blk + ".conv1", C, C, 3, 1, 1);
            bn_step(blk + ".bn1", C);
            act_step(hidden_act);
            conv_step(blk + ".conv2", C, C, 3, 1, 1);
            bn_step(blk + ".bn2", C);
            simple(Step::kResidualEnd);
        }
        deconv_step("deconv1", C, C, 4, 2, 1);
        bn_step("bn_up1", C);
        act_step(hidden_act);
        deconv_step("deconv2", C, ch, 4, 2, 1);
        act_step(1);
    } else {
        // MLP generator
        simple(Step::kFlatten);
        dense_step("fc1", ch * l * l, H);
        bn_step("bn1", H);
        act_step(hidden_act);
        dense_step("fc2", H, H);
        bn_step("bn2", H);
        act_step(hidden_act);
        dense_step("fc3", H, H);
        bn_step("bn3", H);
        act_step(hidden_act);
        dense_step("fc4", H, ch * L * L);
        act_step(1);
        reshape_step({ch, L, L});
    }

    init_params(m.store_, seed, role_str(cfg.role));
    return m;
}

std::vector<std::size_t> Model::input_shape(std::size_t batch) const {
    const std::size_t L = cfg_.image_size, ch = cfg_.image_channels;
    if (cfg_.role == Role::kDiscriminator) return {batch, ch, L, L};
    if (cfg_.input_mode == InputMode::kNoise128) return {batch, 128};
    return {batch, ch, L / 4, L / 4};
}

std::vector<NodeId> Model::bind(Graph& g) const {
    std::vector<NodeId> ids;
    ids.reserve(store_.size());
    for (std::size_t i = 0; i < store_.size(); ++i) ids.push_back(g.leaf(store_[i].value));
    return ids;
}

NodeId Model::forward(Graph& g, const std::vector<NodeId>& bound, NodeId input, BnMode mode) {
    if (bound.size() != store_.size())
        throw ShapeError("model forward: bound parameter list does not match the store");
    const std::size_t batch = g.value(input).rank() ? g.value(input).dim(0) : 0;
    if (g.value(input).shape() != input_shape(batch))
        throw ShapeError("model forward: input shape " + shape_str(g.value(input).shape()) +
                         ", expected " + shape_str(input_shape(batch)));

    NodeId cur = input;
    std::vector<NodeId> residual_stack;
    for (const Step& s : steps_) {
        switch (s.kind) {
            case Step::kDense:
                cur = dense(g, cur, bound[s.w], bound[s.b]);
                break;
            case Step::kConv:
                cur = conv_layer(g, cur, bound[s.w], bound[s.b], s.stride, s.pad);
                break;
            case Step::kDeconv:
                cur = deconv_layer(g, cur, bound[s.w], bound[s.b], s.stride, s.pad);
                break;
            case Step::kBatchNorm: {
                if (mode != BnMode::kEval) {
                    BnResult r = batchnorm_train(g, cur, bound[s.bn_scale], bound[s.bn_shift],
                                                 cfg_.bn_eps);
                    cur = r.out;
                    if (mode == BnMode::kTrain) {
                        Tensor& rm = store_[s.bn_mean].value;
                        Tensor& rv = store_[s.bn_var].value;
                        const double mom = cfg_.bn_momentum;
                        for (std::size_t i = 0; i < rm.size(); ++i) {
                            rm[i] = mom * rm[i] + (1.0 - mom) * r.batch_mean[i];
                            rv[i] = mom * rv[i] + (1.0 - mom) * r.batch_var[i];
                        }
                    }
                } else {
                    cur = batchnorm_eval(g, cur, store_[s.bn_mean].value, store_[s.bn_var].value,
                                         bound[s.bn_scale], bound[s.bn_shift], cfg_.bn_eps);
                }
                break;
            }
            case Step::kActivation:
                cur = s.act == 0 ? relu(g, cur) : s.act == 1 ? tanh_op(g, cur) : sigmoid(g, cur);
                break;
            case Step::kFlatten: {
                const Tensor& v = g.value(cur);
                cur = reshape(g, cur, {v.dim(0), v.size() / v.dim(0)});
                break;
            }
            case Step::kReshapePerSample: {
                std::vector<std::size_t> target{g.value(cur).dim(0)};
                target.insert(target.end(), s.shape.begin(), s.shape.end());
                cur = reshape(g, cur, target);
                break;
            }
            case Step::kResidualBegin:
                residual_stack.push_back(cur);
                break;
            case Step::kResidualEnd:
                cur = add(g, cur, residual_stack.back());
                residual_stack.pop_back();
                break;
        }
    }
    return cur;
}

NodeId Model::forward_eval(Graph& g, NodeId input) {
    return forward(g, bind(g), input, false);
}

}  // namespace asrl
