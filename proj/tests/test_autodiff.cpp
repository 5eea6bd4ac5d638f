#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "asrl/autodiff.hpp"
#include "asrl/graph.hpp"
#include "testutil.hpp"

using namespace asrl;
using testutil::BuildFn;

TEST_CASE("square at 3 has gradient 6") {
    Graph g;
    NodeId x = g.leaf(Tensor::scalar(3.0));
    auto m = backward(g, square(g, x));
    CHECK(g.value(grad_of(m, x))[0] == 6.0);
}

TEST_CASE("relu gradient gates negative inputs") {
    Graph g;
    NodeId x = g.leaf(Tensor({2}, {-1.0, 2.0}));
    auto m = backward(g, sum(g, relu(g, x)));
    CHECK(g.value(grad_of(m, x)) == Tensor({2}, {0.0, 1.0}));
}

TEST_CASE("backward rejects non-scalar roots and bad ids") {
    Graph g;
    NodeId x = g.leaf(Tensor({3}, {1, 2, 3}));
    CHECK_THROWS_AS(backward(g, x), ShapeError);
    CHECK_THROWS_AS(backward(g, static_cast<NodeId>(99)), ShapeError);
    // shape [1] counts as scalar
    NodeId y = g.leaf(Tensor({1}, {2.0}));
    CHECK_NOTHROW(backward(g, square(g, y)));
}

TEST_CASE("unreachable leaves get zero gradients on request") {
    Graph g;
    NodeId x = g.leaf(Tensor::scalar(3.0));
    NodeId unused = g.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    auto m = backward(g, square(g, x));
    CHECK(m.find(unused) == m.end());
    CHECK(g.value(grad_or_zero(g, m, unused)) == Tensor({2, 2}));
    CHECK_THROWS_AS(grad_of(m, unused), ShapeError);
}

TEST_CASE("three-layer dense net matches finite differences") {
    RngStream r(101, "fd dense");
    auto x = testutil::rand_tensor(r, {4, 5}, -2, 2);
    auto w1 = testutil::rand_tensor(r, {5, 6}, -1, 1);
    auto w2 = testutil::rand_tensor(r, {6, 6}, -1, 1);
    auto w3 = testutil::rand_tensor(r, {6, 1}, -1, 1);
    BuildFn net = [](Graph& g, const std::vector<NodeId>& in) {
        NodeId h1 = tanh_op(g, matmul(g, in[0], in[1]));
        NodeId h2 = tanh_op(g, matmul(g, h1, in[2]));
        return mean(g, square(g, matmul(g, h2, in[3])));
    };
    CHECK(testutil::grad_check(net, {x, w1, w2, w3}) < 1e-5);
}

// Per-primitive gradient check: each case wires the op into a scalar loss with
// a weighting tensor so adjoints are non-uniform.
namespace {

struct PrimCase {
    const char* name;
    std::vector<std::vector<std::size_t>> shapes;
    double lo, hi;
    std::vector<double> kinks;
    BuildFn build;
    double tol = 1e-5;
};

NodeId weighted(Graph& g, NodeId y, double freq) {
    // deterministic non-uniform weights baked from index, so the loss is a
    // plain function of the leaves
    const Tensor& v = g.value(y);
    Tensor w(v.shape());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = std::cos(freq * static_cast<double>(i) + 0.3) + 1.5;
    return sum(g, mul(g, y, g.leaf(w)));
}

std::vector<PrimCase> primitive_cases() {
    std::vector<PrimCase> cases;
    auto bin = [](NodeId (*op)(Graph&, NodeId, NodeId)) {
        return [op](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, op(g, in[0], in[1]), 1.7);
        };
    };
    auto una = [](NodeId (*op)(Graph&, NodeId)) {
        return [op](Graph& g, const std::vector<NodeId>& in) {
            return weighted(g, op(g, in[0]), 1.3);
        };
    };
    cases.push_back({"add", {{2, 3}, {2, 3}}, -2, 2, {}, bin(&add)});
    cases.push_back({"sub", {{2, 3}, {2, 3}}, -2, 2, {}, bin(&sub)});
    cases.push_back({"mul", {{2, 3}, {2, 3}}, -2, 2, {}, bin(&mul)});
    // denominator bounded away from 0 so the masked point is not sampled
    cases.push_back({"div_no_nan", {{2, 3}, {2, 3}}, 0.5, 2, {}, bin(&div_no_nan)});
    cases.push_back({"matmul", {{3, 4}, {4, 2}}, -2, 2, {}, bin(&matmul)});
    cases.push_back({"transpose2d", {{3, 4}}, -2, 2, {}, una(&transpose2d)});
    cases.push_back({"relu", {{3, 4}}, -2, 2, {0.0}, una(&relu)});
    cases.push_back({"tanh", {{3, 4}}, -2, 2, {}, una(&tanh_op)});
    cases.push_back({"sigmoid", {{3, 4}}, -2, 2, {}, una(&sigmoid)});
    cases.push_back({"log", {{3, 4}}, 0.1, 2, {}, una(&log_op)});
    cases.push_back({"abs", {{3, 4}}, -2, 2, {0.0}, una(&abs_op)});
    cases.push_back({"square", {{3, 4}}, -2, 2, {}, una(&square)});
    cases.push_back({"sqrt", {{3, 4}}, 0.1, 2, {}, una(&sqrt_op)});
    cases.push_back({"mean", {{3, 4}}, -2, 2, {}, [](Graph& g, const std::vector<NodeId>& in) {
                         return mean(g, in[0]);
                     }});
    cases.push_back({"sum", {{3, 4}}, -2, 2, {}, [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, sum(g, in[0]), 0.9);
                     }});
    cases.push_back({"l2_norm_per_row", {{3, 4}}, 0.2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, l2_norm_per_row(g, in[0]), 2.1);
                     }});
    cases.push_back({"clamp", {{3, 4}}, -2, 2, {-1.0, 1.0},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, clamp(g, in[0], -1.0, 1.0), 1.1);
                     }});
    cases.push_back({"scale", {{3, 4}}, -2, 2, {}, [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, scale(g, in[0], -1.7), 1.1);
                     }});
    cases.push_back({"add_const", {{3, 4}}, -2, 2, {}, [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, add_const(g, in[0], 0.4), 1.1);
                     }});
    cases.push_back({"conv2d", {{2, 2, 5, 5}, {3, 2, 3, 3}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, conv2d(g, in[0], in[1], 2, 1), 0.7);
                     }});
    cases.push_back({"conv2d stride1", {{1, 2, 4, 4}, {2, 2, 2, 2}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, conv2d(g, in[0], in[1], 1, 0), 0.7);
                     }});
    cases.push_back({"transposed_conv2d", {{2, 2, 3, 3}, {2, 3, 4, 4}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, transposed_conv2d(g, in[0], in[1], 2, 1), 0.7);
                     }});
    cases.push_back({"conv2d_input_grad", {{1, 2, 3, 3}, {2, 2, 2, 2}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, conv2d_input_grad(g, in[0], in[1], 2, 1, 5, 5), 0.7);
                     }});
    cases.push_back({"conv2d_kernel_grad", {{1, 2, 5, 5}, {1, 3, 3, 3}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, conv2d_kernel_grad(g, in[0], in[1], 2, 1, 3, 3), 0.7);
                     }});
    cases.push_back({"row ops", {{3, 4}, {3}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         NodeId a = mul_row(g, in[0], in[1]);
                         NodeId b = row_bcast(g, row_sum(g, a), {3, 4});
                         return weighted(g, b, 1.9);
                     }});
    cases.push_back({"chan ops", {{2, 3, 2}, {3}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         NodeId a = mul_chan(g, add_chan(g, in[0], in[1]), in[1]);
                         NodeId b = chan_bcast(g, chan_sum(g, a), {2, 3, 2});
                         return weighted(g, b, 1.9);
                     }});
    cases.push_back({"scalar_bcast", {{}}, -2, 2, {}, [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, scalar_bcast(g, in[0], {2, 3}), 1.9);
                     }});
    cases.push_back({"concat", {{2, 3}, {2, 2}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, concat(g, in[0], in[1], 1), 1.9);
                     }});
    cases.push_back({"reshape/pad/slice", {{2, 6}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         NodeId r = reshape(g, in[0], {3, 4});
                         NodeId p = pad(g, r, {1, 0}, {0, 2});
                         NodeId s = slice(g, p, {0, 1}, {4, 3});
                         return weighted(g, s, 1.9);
                     }});
    cases.push_back({"avg_pool", {{2, 1, 4, 4}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, avg_pool(g, in[0], 2), 1.9);
                     }});
    cases.push_back({"avg_pool f4", {{1, 2, 4, 4}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, avg_pool(g, in[0], 4), 1.9);
                     }});
    cases.push_back({"nearest_up", {{1, 2, 3, 3}}, -2, 2, {},
                     [](Graph& g, const std::vector<NodeId>& in) {
                         return weighted(g, nearest_up(g, in[0], 2), 1.9);
                     }});
    return cases;
}

}  // namespace

TEST_CASE("every primitive matches finite differences over 100 seeds") {
    for (const auto& c : primitive_cases()) {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            RngStream r(seed, c.name);
            std::vector<Tensor> xs;
            for (const auto& sh : c.shapes)
                xs.push_back(testutil::rand_tensor_away(r, sh, c.lo, c.hi, c.kinks, 1e-3));
            worst = std::max(worst, testutil::grad_check(c.build, xs));
        }
        INFO(c.name);
        CHECK(worst < c.tol);
    }
}

TEST_CASE("zero-derivative conventions at marked points") {
    // relu/abs pullbacks at 0, clamp outside the window, norm of the zero row
    Graph g;
    NodeId x = g.leaf(Tensor({3}, {0.0, -1.5, 1.5}));
    auto m1 = backward(g, sum(g, relu(g, x)));
    CHECK(g.value(grad_of(m1, x)) == Tensor({3}, {0.0, 0.0, 1.0}));

    Graph g2;
    NodeId y = g2.leaf(Tensor({3}, {0.0, -2.0, 2.0}));
    auto m2 = backward(g2, sum(g2, clamp(g2, y, -1.0, 1.0)));
    CHECK(g2.value(grad_of(m2, y)) == Tensor({3}, {1.0, 0.0, 0.0}));

    Graph g3;
    NodeId z = g3.leaf(Tensor({2, 2}, {0.0, 0.0, 3.0, 4.0}));
    auto m3 = backward(g3, sum(g3, l2_norm_per_row(g3, z)));
    const Tensor& dz = g3.value(grad_of(m3, z));
    CHECK(dz[0] == 0.0);  // zero row stays exactly zero, not NaN
    CHECK(dz[1] == 0.0);
    CHECK(dz[2] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(dz[3] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("gradients are additive across summed objectives") {
    RngStream r(7, "linearity");
    auto x = testutil::rand_tensor(r, {3, 3}, -2, 2);
    BuildFn f = [](Graph& g, const std::vector<NodeId>& in) {
        return mean(g, square(g, in[0]));
    };
    BuildFn h = [](Graph& g, const std::vector<NodeId>& in) {
        return sum(g, tanh_op(g, in[0]));
    };
    BuildFn both = [&](Graph& g, const std::vector<NodeId>& in) {
        return add(g, f(g, in), h(g, in));
    };
    auto gf = testutil::ad_grads(f, {x})[0];
    auto gh = testutil::ad_grads(h, {x})[0];
    auto gb = testutil::ad_grads(both, {x})[0];
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::fabs(gb[i] - (gf[i] + gh[i])) < 1e-12);
}

TEST_CASE("reverse over reverse gives exact second derivatives") {
    // y = x^3: dy/dx = 3x^2, d2y/dx2 = 6x
    Graph g;
    NodeId x = g.leaf(Tensor::scalar(1.7));
    NodeId y = mul(g, square(g, x), x);
    auto m1 = backward(g, y);
    NodeId dx = grad_of(m1, x);
    CHECK(g.value(dx)[0] == doctest::Approx(3 * 1.7 * 1.7).epsilon(1e-12));
    auto m2 = backward(g, dx);
    CHECK(g.value(grad_of(m2, x))[0] == doctest::Approx(6 * 1.7).epsilon(1e-12));
}

TEST_CASE("second derivative of tanh chain matches finite differences of the first") {
    RngStream r(19, "second order");
    auto x0 = testutil::rand_tensor(r, {4}, -1.5, 1.5);
    auto w0 = testutil::rand_tensor(r, {4}, -1, 1);

    // s(x) = sum(tanh(w*x)); first-order grad wrt x, then p = sum(grad^2),
    // second pass differentiates p wrt w.
    BuildFn p_of = [](Graph& g, const std::vector<NodeId>& in) {
        NodeId s = sum(g, tanh_op(g, mul(g, in[0], in[1])));
        auto m1 = backward(g, s);
        return sum(g, square(g, grad_of(m1, in[0])));
    };
    CHECK(testutil::grad_check(p_of, {x0, w0}, 1e-5) < 1e-4);
}

TEST_CASE("norm penalty on a linear critic matches the closed form") {
    // critic D(x) = x . a over batch rows; grad wrt x is a for every row
    Graph g;
    NodeId x = g.leaf(Tensor({1, 2}, {0.3, -0.9}));
    NodeId a = g.leaf(Tensor({2, 1}, {3.0, 4.0}));
    NodeId out = matmul(g, x, a);
    NodeId pen = grad_norm_penalty(g, out, x);
    CHECK(g.value(pen)[0] == doctest::Approx(16.0).epsilon(1e-12));

    auto m = backward(g, pen);
    const Tensor& da = g.value(grad_of(m, a));
    CHECK(da[0] == doctest::Approx(4.8).epsilon(1e-10));
    CHECK(da[1] == doctest::Approx(6.4).epsilon(1e-10));
}

TEST_CASE("norm penalty closed form holds for random linear critics") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        RngStream r(seed, "linear critic");
        auto xv = testutil::rand_tensor(r, {3, 4}, -2, 2);
        auto av = testutil::rand_tensor(r, {4, 1}, -2, 2);
        Graph g;
        NodeId x = g.leaf(xv);
        NodeId a = g.leaf(av);
        NodeId pen = grad_norm_penalty(g, matmul(g, x, a), x);

        double norm = 0.0;
        for (std::size_t i = 0; i < 4; ++i) norm += av[i] * av[i];
        norm = std::sqrt(norm);
        CHECK(std::fabs(g.value(pen)[0] - (norm - 1) * (norm - 1)) < 1e-10);

        auto m = backward(g, pen);
        const Tensor& da = g.value(grad_of(m, a));
        for (std::size_t i = 0; i < 4; ++i) {
            const double want = 2.0 * (norm - 1.0) * av[i] / norm;
            CHECK(std::fabs(da[i] - want) < 1e-10);
        }
    }
}

TEST_CASE("norm penalty of an all-zero critic leaves the bias untouched") {
    Graph g;
    NodeId x = g.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    NodeId w = g.leaf(Tensor({3, 1}));
    NodeId b = g.leaf(Tensor({2, 1}));
    NodeId out = add(g, matmul(g, x, w), b);
    NodeId pen = grad_norm_penalty(g, out, x);
    CHECK(g.value(pen)[0] == doctest::Approx(1.0).epsilon(1e-12));

    auto m = backward(g, pen);
    CHECK(g.value(grad_or_zero(g, m, b)) == Tensor({2, 1}));
}

TEST_CASE("norm penalty through a two-layer tanh critic matches finite differences") {
    RngStream r(3, "penalty fd");
    auto xv = testutil::rand_tensor(r, {3, 4}, -1, 1);
    auto w1 = testutil::rand_tensor(r, {4, 5}, -1, 1);
    auto b1 = testutil::rand_tensor(r, {5}, -0.5, 0.5);
    auto w2 = testutil::rand_tensor(r, {5, 1}, -1, 1);

    BuildFn penalty = [](Graph& g, const std::vector<NodeId>& in) {
        NodeId xb = matmul(g, in[0], in[1]);
        NodeId ones_col = g.leaf(Tensor::ones({3, 1}));
        NodeId bias_mat = matmul(g, ones_col, reshape(g, in[2], {1, 5}));
        NodeId h = tanh_op(g, add(g, xb, bias_mat));
        NodeId out = matmul(g, h, in[3]);
        return grad_norm_penalty(g, out, in[0]);
    };
    CHECK(testutil::grad_check(penalty, {xv, w1, b1, w2}, 1e-5) < 1e-4);
}

TEST_CASE("norm penalty rejects a non-ancestor input") {
    Graph g;
    NodeId x = g.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    NodeId other = g.leaf(Tensor({2, 2}, {1, 1, 1, 1}));
    NodeId a = g.leaf(Tensor({2, 1}, {1.0, -1.0}));
    NodeId out = matmul(g, x, a);
    CHECK_THROWS_AS(grad_norm_penalty(g, out, other), ShapeError);
}
