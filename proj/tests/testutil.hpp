#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "asrl/autodiff.hpp"
#include "asrl/graph.hpp"
#include "asrl/rng.hpp"
#include "asrl/tensor.hpp"

namespace testutil {

// A test case is a closure that records some scalar function of the given
// leaves; the helpers below evaluate it and differentiate it both ways.
using BuildFn = std::function<asrl::NodeId(asrl::Graph&, const std::vector<asrl::NodeId>&)>;

inline double eval_scalar(const BuildFn& build, const std::vector<asrl::Tensor>& xs) {
    asrl::Graph g;
    std::vector<asrl::NodeId> ids;
    ids.reserve(xs.size());
    for (const auto& t : xs) ids.push_back(g.leaf(t));
    return g.value(build(g, ids))[0];
}

inline std::vector<asrl::Tensor> ad_grads(const BuildFn& build,
                                          const std::vector<asrl::Tensor>& xs) {
    asrl::Graph g;
    std::vector<asrl::NodeId> ids;
    ids.reserve(xs.size());
    for (const auto& t : xs) ids.push_back(g.leaf(t));
    auto m = asrl::backward(g, build(g, ids));
    std::vector<asrl::Tensor> out;
    for (auto id : ids) out.push_back(g.value(asrl::grad_or_zero(g, m, id)));
    return out;
}

inline std::vector<asrl::Tensor> fd_grads(const BuildFn& build, std::vector<asrl::Tensor> xs,
                                          double h = 1e-5) {
    std::vector<asrl::Tensor> out;
    for (auto& xj : xs) {
        asrl::Tensor gj(xj.shape());
        for (std::size_t i = 0; i < xj.size(); ++i) {
            const double keep = xj[i];
            xj[i] = keep + h;
            const double fp = eval_scalar(build, xs);
            xj[i] = keep - h;
            const double fm = eval_scalar(build, xs);
            xj[i] = keep;
            gj[i] = (fp - fm) / (2.0 * h);
        }
        out.push_back(std::move(gj));
    }
    return out;
}

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-2});
}

inline double max_rel_err(const asrl::Tensor& a, const asrl::Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
    return worst;
}

inline double grad_check(const BuildFn& build, const std::vector<asrl::Tensor>& xs,
                         double h = 1e-5) {
    const auto ad = ad_grads(build, xs);
    const auto fd = fd_grads(build, xs, h);
    double worst = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j)
        worst = std::max(worst, max_rel_err(ad[j], fd[j]));
    return worst;
}

inline asrl::Tensor rand_tensor(asrl::RngStream& r, std::vector<std::size_t> shape, double lo,
                                double hi) {
    asrl::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * r.uniform();
    return t;
}

// Like rand_tensor but resamples values that fall within `margin` of any point
// in `kinks`, for ops with subgradient conventions.
inline asrl::Tensor rand_tensor_away(asrl::RngStream& r, std::vector<std::size_t> shape, double lo,
                                     double hi, const std::vector<double>& kinks, double margin) {
    asrl::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v;
        bool near;
        do {
            v = lo + (hi - lo) * r.uniform();
            near = false;
            for (double k : kinks) near = near || std::fabs(v - k) < margin;
        } while (near);
        t[i] = v;
    }
    return t;
}

}  // namespace testutil
