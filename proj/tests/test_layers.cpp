#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "asrl/autodiff.hpp"
#include "asrl/layers.hpp"
#include "testutil.hpp"

using namespace asrl;
using testutil::BuildFn;

TEST_CASE("dense identity and affine") {
    Graph g;
    NodeId x = g.leaf(Tensor({1, 2}, {1, 2}));
    NodeId w = g.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
    NodeId b = g.leaf(Tensor({2}));
    CHECK(g.value(dense(g, x, w, b)) == Tensor({1, 2}, {1, 2}));

    NodeId x2 = g.leaf(Tensor({1, 1}, {3}));
    NodeId w2 = g.leaf(Tensor({1, 1}, {2}));
    NodeId b2 = g.leaf(Tensor({1}, {1}));
    CHECK(g.value(dense(g, x2, w2, b2)) == Tensor({1, 1}, {7}));
}

TEST_CASE("dense gradients match finite differences") {
    RngStream r(21, "dense fd");
    auto x = testutil::rand_tensor(r, {3, 4}, -2, 2);
    auto w = testutil::rand_tensor(r, {4, 2}, -1, 1);
    auto b = testutil::rand_tensor(r, {2}, -1, 1);
    BuildFn f = [](Graph& g, const std::vector<NodeId>& in) {
        return mean(g, square(g, dense(g, in[0], in[1], in[2])));
    };
    CHECK(testutil::grad_check(f, {x, w, b}) < 1e-5);
}

TEST_CASE("deconv layer doubles spatial extent at stride 2") {
    Graph g;
    NodeId x = g.leaf(Tensor({1, 2, 16, 16}));
    NodeId k = g.leaf(Tensor({2, 3, 4, 4}));
    NodeId b = g.leaf(Tensor({3}));
    CHECK(g.value(deconv_layer(g, x, k, b, 2, 1)).shape() ==
          std::vector<std::size_t>{1, 3, 32, 32});
}

TEST_CASE("averaging conv preserves constant images in the interior") {
    Graph g;
    NodeId x = g.leaf(Tensor::full({1, 1, 6, 6}, 2.5));
    NodeId k = g.leaf(Tensor::full({1, 1, 3, 3}, 1.0 / 9.0));
    NodeId b = g.leaf(Tensor({1}));
    const Tensor& y = g.value(conv_layer(g, x, k, b, 1, 0));
    REQUIRE(y.shape() == std::vector<std::size_t>{1, 1, 4, 4});
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("conv layer gradients on a 2-channel 6x6 input") {
    RngStream r(22, "conv fd");
    auto x = testutil::rand_tensor(r, {1, 2, 6, 6}, -2, 2);
    auto k = testutil::rand_tensor(r, {3, 2, 3, 3}, -1, 1);
    auto b = testutil::rand_tensor(r, {3}, -1, 1);
    BuildFn f = [](Graph& g, const std::vector<NodeId>& in) {
        return mean(g, square(g, conv_layer(g, in[0], in[1], in[2], 2, 1)));
    };
    CHECK(testutil::grad_check(f, {x, k, b}) < 1e-5);

    BuildFn fd = [](Graph& g, const std::vector<NodeId>& in) {
        return mean(g, square(g, deconv_layer(g, in[0], in[1], in[2], 2, 1)));
    };
    auto kd = testutil::rand_tensor(r, {2, 3, 4, 4}, -1, 1);
    CHECK(testutil::grad_check(fd, {x, kd, b}) < 1e-5);
}

TEST_CASE("batchnorm flattens constant channels to zero") {
    Graph g;
    Tensor xv({4, 2, 2, 2});
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = (i / 4) % 2 == 0 ? 3.0 : -1.0;
    NodeId x = g.leaf(xv);
    NodeId sc = g.leaf(Tensor::ones({2}));
    NodeId sh = g.leaf(Tensor({2}));
    // constant per (batch,channel) slice and per channel overall
    Tensor out = g.value(batchnorm_train(g, x, sc, sh, 1e-5).out);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("batchnorm normalizes a two-value batch to plus and minus one") {
    Graph g;
    NodeId x = g.leaf(Tensor({2, 1}, {1, 3}));
    NodeId sc = g.leaf(Tensor::ones({1}));
    NodeId sh = g.leaf(Tensor({1}));
    BnResult r = batchnorm_train(g, x, sc, sh, 1e-5);
    const Tensor& out = g.value(r.out);
    CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(r.batch_mean[0] == 2.0);
    CHECK(r.batch_var[0] == 1.0);
}

TEST_CASE("batchnorm rejects tiny train batches") {
    Graph g;
    NodeId x = g.leaf(Tensor({1, 2, 2, 2}));
    NodeId sc = g.leaf(Tensor::ones({2}));
    NodeId sh = g.leaf(Tensor({2}));
    CHECK_THROWS_AS(batchnorm_train(g, x, sc, sh, 1e-5), ShapeError);
}

TEST_CASE("batchnorm gradients match finite differences") {
    RngStream r(23, "bn fd");
    auto x = testutil::rand_tensor(r, {4, 3, 2, 2}, -2, 2);
    auto sc = testutil::rand_tensor(r, {3}, 0.5, 1.5);
    auto sh = testutil::rand_tensor(r, {3}, -0.5, 0.5);
    BuildFn f = [](Graph& g, const std::vector<NodeId>& in) {
        NodeId y = batchnorm_train(g, in[0], in[1], in[2], 1e-5).out;
        return mean(g, square(g, add_const(g, y, 0.3)));
    };
    CHECK(testutil::grad_check(f, {x, sc, sh}) < 1e-4);
}

TEST_CASE("train-mode batchnorm output is standardized per channel") {
    RngStream r(24, "bn stats");
    auto xv = testutil::rand_tensor(r, {8, 3, 4, 4}, -3, 5);
    Graph g;
    NodeId x = g.leaf(xv);
    NodeId sc = g.leaf(Tensor::ones({3}));
    NodeId sh = g.leaf(Tensor({3}));
    Tensor out = g.value(batchnorm_train(g, x, sc, sh, 1e-5).out);
    const std::size_t per = out.size() / 3;
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        for (std::size_t b = 0; b < 8; ++b)
            for (std::size_t i = 0; i < 16; ++i) {
                const double v = out[(b * 3 + c) * 16 + i];
                s += v;
                s2 += v * v;
            }
        const double mu = s / static_cast<double>(per);
        CHECK(std::fabs(mu) < 1e-6);
        CHECK(std::fabs(s2 / static_cast<double>(per) - mu * mu - 1.0) < 1e-3);
    }
}

TEST_CASE("eval-mode batchnorm is a fixed affine map") {
    RngStream r(25, "bn eval");
    auto xv = testutil::rand_tensor(r, {2, 3, 2, 2}, -2, 2);
    Tensor rm({3}, {0.1, -0.4, 0.7});
    Tensor rv({3}, {1.5, 0.5, 2.0});
    auto run = [&]() {
        Graph g;
        NodeId x = g.leaf(xv);
        NodeId sc = g.leaf(Tensor({3}, {1.1, 0.9, 1.0}));
        NodeId sh = g.leaf(Tensor({3}, {0.2, 0.0, -0.1}));
        return g.value(batchnorm_eval(g, x, rm, rv, sc, sh, 1e-5));
    };
    CHECK(run() == run());

    // spot-check one element against the affine formula
    Tensor got = run();
    const double want = (xv[0] - 0.1) / std::sqrt(1.5 + 1e-5) * 1.1 + 0.2;
    CHECK(got[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("dense and conv are linear in x with zero bias") {
    RngStream r(26, "linear");
    auto xv = testutil::rand_tensor(r, {2, 2, 4, 4}, -2, 2);
    auto kv = testutil::rand_tensor(r, {2, 2, 3, 3}, -1, 1);
    Tensor x3(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) x3[i] = 3.0 * xv[i];

    auto fwd = [&](const Tensor& in) {
        Graph g;
        return g.value(
            conv_layer(g, g.leaf(in), g.leaf(kv), g.leaf(Tensor({2})), 1, 1));
    };
    Tensor a = fwd(xv), b = fwd(x3);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(3.0 * a[i] - b[i]) < 1e-12);
}

TEST_CASE("init fills weights with small noise and leaves structure params fixed") {
    auto make = [](std::uint64_t seed) {
        ParamStore st;
        st.add("conv1.weight", Tensor({100, 100}));
        st.add("conv1.bias", Tensor({100}));
        st.add("bn1.scale", Tensor({4}));
        st.add("bn1.shift", Tensor({4}));
        st.add("bn1.running_mean", Tensor({4}), false);
        st.add("bn1.running_var", Tensor({4}), false);
        init_params(st, seed, "generator");
        return st;
    };
    ParamStore a = make(5), b = make(5), c = make(6);
    CHECK(a.find("conv1.weight")->value == b.find("conv1.weight")->value);
    CHECK(!(a.find("conv1.weight")->value == c.find("conv1.weight")->value));
    CHECK(a.find("conv1.bias")->value == Tensor({100}));
    CHECK(a.find("bn1.scale")->value == Tensor::ones({4}));
    CHECK(a.find("bn1.shift")->value == Tensor({4}));
    CHECK(a.find("bn1.running_var")->value == Tensor::ones({4}));
    CHECK(a.find("bn1.running_mean")->trainable == false);
    CHECK(a.trainable_count() == 100 * 100 + 100 + 4 + 4);

    // empirical std of the 10^4 sampled weights
    const Tensor& w = a.find("conv1.weight")->value;
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s += w[i];
        s2 += w[i] * w[i];
    }
    const double mu = s / static_cast<double>(w.size());
    const double sd = std::sqrt(s2 / static_cast<double>(w.size()) - mu * mu);
    CHECK(sd > 0.019);
    CHECK(sd < 0.021);
}

TEST_CASE("duplicate parameter names are rejected") {
    ParamStore st;
    st.add("w.weight", Tensor({2}));
    CHECK_THROWS_AS(st.add("w.weight", Tensor({2})), ShapeError);
    CHECK(st.find("missing") == nullptr);
}
