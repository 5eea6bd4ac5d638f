#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "asrl/models.hpp"
#include "testutil.hpp"

using namespace asrl;

namespace {

ModelConfig small_d(Arch arch = Arch::kDcgan) {
    ModelConfig c;
    c.arch = arch;
    c.role = Role::kDiscriminator;
    c.output_activation = OutputActivation::kLinear;
    c.base_channels = 8;
    c.mlp_hidden = 32;
    c.image_size = 32;
    return c;
}

ModelConfig small_g(Arch arch = Arch::kDcgan) {
    ModelConfig c;
    c.arch = arch;
    c.role = Role::kGenerator;
    c.output_activation = OutputActivation::kTanh;
    c.base_channels = 8;
    c.mlp_hidden = 32;
    c.image_size = 32;
    return c;
}

Tensor rand_input(const Model& m, std::size_t batch, std::uint64_t seed) {
    RngStream r(seed, "model input");
    return testutil::rand_tensor(r, m.input_shape(batch), -1, 1);
}

}  // namespace

TEST_CASE("cnn discriminator maps a 64x64x3 batch to one value per row") {
    ModelConfig c = small_d();
    c.image_size = 64;
    Model d = Model::build(c, 1);
    Graph g;
    NodeId out = d.forward_eval(g, g.leaf(rand_input(d, 3, 9)));
    CHECK(g.value(out).shape() == std::vector<std::size_t>{3});
}

TEST_CASE("mlp generator upscales 16x16x3 to 64x64x3") {
    ModelConfig c = small_g(Arch::kMlp);
    c.image_size = 64;
    Model m = Model::build(c, 2);
    CHECK(m.input_shape(2) == std::vector<std::size_t>{2, 3, 16, 16});
    Graph g;
    NodeId out = m.forward_eval(g, g.leaf(rand_input(m, 2, 10)));
    CHECK(g.value(out).shape() == std::vector<std::size_t>{2, 3, 64, 64});
}

TEST_CASE("noise generator maps 128-element vectors to images") {
    ModelConfig c = small_g();
    c.input_mode = InputMode::kNoise128;
    c.image_size = 64;
    Model m = Model::build(c, 3);
    CHECK(m.input_shape(4) == std::vector<std::size_t>{4, 128});
    Graph g;
    NodeId out = m.forward_eval(g, g.leaf(rand_input(m, 4, 11)));
    CHECK(g.value(out).shape() == std::vector<std::size_t>{4, 3, 64, 64});
}

TEST_CASE("dcgan generator output shape and range") {
    Model m = Model::build(small_g(), 4);
    Graph g;
    const Tensor& out = g.value(m.forward_eval(g, g.leaf(rand_input(m, 2, 12))));
    CHECK(out.shape() == std::vector<std::size_t>{2, 3, 32, 32});
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] >= -1.0);
        CHECK(out[i] <= 1.0);
    }
}

TEST_CASE("zeroing the output layer forces exact zero images") {
    for (Arch arch : {Arch::kDcgan, Arch::kResnet, Arch::kMlp}) {
        Model m = Model::build(small_g(arch), 5);
        const char* last = arch == Arch::kMlp ? "fc4" : arch == Arch::kDcgan ? "deconv4" : "deconv2";
        for (const char* suffix : {".weight", ".bias"}) {
            Param* p = m.params().find(std::string(last) + suffix);
            REQUIRE(p != nullptr);
            p->value = Tensor(p->value.shape());
        }
        Graph g;
        const Tensor& out = g.value(m.forward_eval(g, g.leaf(rand_input(m, 2, 13))));
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
    }
}

TEST_CASE("linear-head critic is the sigmoid critic without its squashing") {
    ModelConfig lin = small_d();
    ModelConfig sig = small_d();
    sig.output_activation = OutputActivation::kSigmoid;
    Model a = Model::build(lin, 6);
    Model b = Model::build(sig, 6);
    Tensor x = rand_input(a, 2, 14);

    Graph ga, gb;
    const Tensor& ra = ga.value(a.forward_eval(ga, ga.leaf(x)));
    const Tensor& rb = gb.value(b.forward_eval(gb, gb.leaf(x)));
    for (std::size_t i = 0; i < ra.size(); ++i) {
        CHECK(rb[i] == doctest::Approx(1.0 / (1.0 + std::exp(-ra[i]))).epsilon(1e-12));
        CHECK((rb[i] > 0.0 && rb[i] < 1.0));
    }
}

TEST_CASE("residual blocks with zeroed convs drop out of the resnet generator") {
    Model m = Model::build(small_g(Arch::kResnet), 7);
    for (int i = 1; i <= 3; ++i) {
        for (const char* conv : {".conv1", ".conv2"}) {
            for (const char* sfx : {".weight", ".bias"}) {
                Param* p = m.params().find("block" + std::to_string(i) + conv + sfx);
                REQUIRE(p != nullptr);
                p->value = Tensor(p->value.shape());
            }
        }
    }
    Tensor x = rand_input(m, 2, 15);
    Graph g;
    // value() references can dangle once more nodes are appended, so copy
    Tensor with_blocks = g.value(m.forward_eval(g, g.leaf(x)));

    // Same trunk rebuilt without the blocks.
    auto P = [&](const char* n) { return g.leaf(m.params().find(n)->value); };
    auto bn_eval_of = [&](NodeId h, const std::string& bn) {
        return batchnorm_eval(g, h, m.params().find(bn + ".running_mean")->value,
                              m.params().find(bn + ".running_var")->value, P((bn + ".scale").c_str()),
                              P((bn + ".shift").c_str()), m.config().bn_eps);
    };
    NodeId h = conv_layer(g, g.leaf(x), P("conv_in.weight"), P("conv_in.bias"), 1, 1);
    h = relu(g, bn_eval_of(h, "bn_in"));
    h = deconv_layer(g, h, P("deconv1.weight"), P("deconv1.bias"), 2, 1);
    h = relu(g, bn_eval_of(h, "bn_up1"));
    h = deconv_layer(g, h, P("deconv2.weight"), P("deconv2.bias"), 2, 1);
    const Tensor& no_blocks = g.value(tanh_op(g, h));
    CHECK(with_blocks == no_blocks);
}

TEST_CASE("same seed rebuilds identical models") {
    Model a = Model::build(small_g(Arch::kResnet), 8);
    Model b = Model::build(small_g(Arch::kResnet), 8);
    Model c = Model::build(small_g(Arch::kResnet), 9);
    REQUIRE(a.params().size() == b.params().size());
    CHECK(a.parameter_count() == b.parameter_count());
    bool all_same = true, any_diff_c = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        all_same = all_same && a.params()[i].value == b.params()[i].value;
        any_diff_c = any_diff_c || !(a.params()[i].value == c.params()[i].value);
    }
    CHECK(all_same);
    CHECK(any_diff_c);
}

TEST_CASE("batch norm updates running stats only in train mode") {
    Model m = Model::build(small_g(), 10);
    Tensor before = m.params().find("bn1.running_mean")->value;
    Tensor x = rand_input(m, 4, 16);
    {
        Graph g;
        m.forward(g, m.bind(g), g.leaf(x), false);
    }
    CHECK(m.params().find("bn1.running_mean")->value == before);
    {
        Graph g;
        m.forward(g, m.bind(g), g.leaf(x), true);
    }
    CHECK(!(m.params().find("bn1.running_mean")->value == before));
}

TEST_CASE("inconsistent configs are rejected at build time") {
    ModelConfig g_sig = small_g();
    g_sig.output_activation = OutputActivation::kSigmoid;
    CHECK_THROWS_AS(Model::build(g_sig, 1), ConfigError);

    ModelConfig d_tanh = small_d();
    d_tanh.output_activation = OutputActivation::kTanh;
    CHECK_THROWS_AS(Model::build(d_tanh, 1), ConfigError);

    ModelConfig noise_mlp = small_g(Arch::kMlp);
    noise_mlp.input_mode = InputMode::kNoise128;
    CHECK_THROWS_AS(Model::build(noise_mlp, 1), ConfigError);

    ModelConfig bad_size = small_g();
    bad_size.image_size = 20;
    CHECK_THROWS_AS(Model::build(bad_size, 1), ConfigError);
}

TEST_CASE("forward rejects wrong input shapes") {
    Model m = Model::build(small_d(), 11);
    Graph g;
    CHECK_THROWS_AS(m.forward_eval(g, g.leaf(Tensor({2, 3, 16, 16}))), ShapeError);
}

TEST_CASE("model gradients flow to every trainable parameter") {
    Model d = Model::build(small_d(), 12);
    Graph g;
    auto bound = d.bind(g);
    NodeId out = d.forward(g, bound, g.leaf(rand_input(d, 2, 17)), true);
    auto m = backward(g, mean(g, out));
    for (std::size_t i = 0; i < d.params().size(); ++i) {
        if (!d.params()[i].trainable) continue;
        INFO(d.params()[i].name);
        CHECK(m.count(bound[i]) == 1);
    }
}
