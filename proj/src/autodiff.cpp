#include "asrl/autodiff.hpp"

#include <vector>

namespace asrl {

namespace {

// Reshape helper for reduction adjoints: sum() yields a rank-0 scalar, but the
// reduced operand may have been stored as shape [1] or [1,1].
NodeId fit_shape(Graph& g, NodeId n, const std::vector<std::size_t>& want) {
    if (g.value(n).shape() == want) return n;
    return reshape(g, n, want);
}

}  // namespace

GradientMap backward(Graph& g, NodeId root) {
    if (root >= g.size()) throw ShapeError("backward: root id out of range");
    if (g.value(root).size() != 1) throw ShapeError("backward: root must be a scalar");

    // Which nodes does the root depend on?
    std::vector<char> reachable(root + 1, 0);
    reachable[root] = 1;
    for (NodeId i = root + 1; i-- > 0;) {
        if (!reachable[i]) continue;
        for (NodeId in : g.node(i).inputs) reachable[in] = 1;
    }

    std::vector<std::vector<NodeId>> pending(root + 1);
    pending[root].push_back(g.leaf(Tensor::ones(g.value(root).shape())));

    GradientMap adj;
    for (NodeId i = root + 1; i-- > 0;) {
        if (!reachable[i] || pending[i].empty()) continue;

        NodeId gy = pending[i][0];
        for (std::size_t k = 1; k < pending[i].size(); ++k) gy = add(g, gy, pending[i][k]);
        adj.emplace(i, gy);

        // Copy node metadata: appending adjoint nodes may reallocate the tape.
        const OpKind kind = g.node(i).kind;
        const std::vector<NodeId> in = g.node(i).inputs;
        const OpAttrs attrs = g.node(i).attrs;

        auto emit = [&](std::size_t slot, NodeId contrib) { pending[in[slot]].push_back(contrib); };
        auto in_shape = [&](std::size_t slot) { return g.value(in[slot]).shape(); };

        switch (kind) {
            case OpKind::kLeaf:
                break;
            case OpKind::kAdd:
                emit(0, gy);
                emit(1, gy);
                break;
            case OpKind::kSub:
                emit(0, gy);
                emit(1, scale(g, gy, -1.0));
                break;
            case OpKind::kMul:
                emit(0, mul(g, gy, in[1]));
                emit(1, mul(g, gy, in[0]));
                break;
            case OpKind::kDivNoNan:
                // y = a/b (0 where b = 0); da = g/b, db = -g*y/b, both masked.
                emit(0, div_no_nan(g, gy, in[1]));
                emit(1, scale(g, div_no_nan(g, mul(g, gy, i), in[1]), -1.0));
                break;
            case OpKind::kMatmul:
                emit(0, matmul(g, gy, transpose2d(g, in[1])));
                emit(1, matmul(g, transpose2d(g, in[0]), gy));
                break;
            case OpKind::kTranspose2d:
                emit(0, transpose2d(g, gy));
                break;
            case OpKind::kConv2d: {
                const auto& c = std::get<ConvAttr>(attrs);
                const auto xs = in_shape(0), ks = in_shape(1);
                emit(0, conv2d_input_grad(g, gy, in[1], c.stride, c.pad, xs[2], xs[3]));
                emit(1, conv2d_kernel_grad(g, in[0], gy, c.stride, c.pad, ks[2], ks[3]));
                break;
            }
            case OpKind::kConv2dInputGrad: {
                // out = IG(dy, k); linear in both, so the adjoint u routes back
                // through the other two ops of the conv trio.
                const auto& c = std::get<ConvAttr>(attrs);
                const auto ks = in_shape(1);
                emit(0, conv2d(g, gy, in[1], c.stride, c.pad));
                emit(1, conv2d_kernel_grad(g, gy, in[0], c.stride, c.pad, ks[2], ks[3]));
                break;
            }
            case OpKind::kConv2dKernelGrad: {
                // out = KG(x, dy)
                const auto& c = std::get<ConvAttr>(attrs);
                const auto xs = in_shape(0);
                emit(0, conv2d_input_grad(g, in[1], gy, c.stride, c.pad, xs[2], xs[3]));
                emit(1, conv2d(g, in[0], gy, c.stride, c.pad));
                break;
            }
            case OpKind::kTransposedConv2d: {
                // Kernel layout [ci,co,kh,kw] lines up so both pullbacks reuse
                // the kernel tensor unchanged.
                const auto& c = std::get<ConvAttr>(attrs);
                const auto ks = in_shape(1);
                emit(0, conv2d(g, gy, in[1], c.stride, c.pad));
                emit(1, conv2d_kernel_grad(g, gy, in[0], c.stride, c.pad, ks[2], ks[3]));
                break;
            }
            case OpKind::kRelu:
                emit(0, mul(g, gy, step(g, in[0])));
                break;
            case OpKind::kStep:
            case OpKind::kSign:
            case OpKind::kInRangeMask:
                // Flat almost everywhere; derivative taken as zero.
                break;
            case OpKind::kTanh:
                // 1 - y^2
                emit(0, mul(g, gy, add_const(g, scale(g, square(g, i), -1.0), 1.0)));
                break;
            case OpKind::kSigmoid:
                // y * (1 - y)
                emit(0, mul(g, gy, mul(g, i, add_const(g, scale(g, i, -1.0), 1.0))));
                break;
            case OpKind::kLog:
                emit(0, div_no_nan(g, gy, in[0]));
                break;
            case OpKind::kClamp: {
                const auto& c = std::get<ClampAttr>(attrs);
                emit(0, mul(g, gy, in_range_mask(g, in[0], c.lo, c.hi)));
                break;
            }
            case OpKind::kAbs:
                emit(0, mul(g, gy, sign_op(g, in[0])));
                break;
            case OpKind::kSquare:
                emit(0, scale(g, mul(g, gy, in[0]), 2.0));
                break;
            case OpKind::kSqrt:
                emit(0, scale(g, div_no_nan(g, gy, i), 0.5));
                break;
            case OpKind::kScale:
                emit(0, scale(g, gy, std::get<ScalarAttr>(attrs).value));
                break;
            case OpKind::kAddConst:
                emit(0, gy);
                break;
            case OpKind::kMean: {
                const auto xs = in_shape(0);
                const double n = static_cast<double>(shape_size(xs));
                emit(0, scale(g, scalar_bcast(g, gy, xs), 1.0 / n));
                break;
            }
            case OpKind::kSum:
                emit(0, scalar_bcast(g, gy, in_shape(0)));
                break;
            case OpKind::kScalarBcast:
                emit(0, fit_shape(g, sum(g, gy), in_shape(0)));
                break;
            case OpKind::kRowSum:
                emit(0, row_bcast(g, gy, in_shape(0)));
                break;
            case OpKind::kRowBcast:
                emit(0, row_sum(g, gy));
                break;
            case OpKind::kMulRow:
                emit(0, mul_row(g, gy, in[1]));
                emit(1, row_sum(g, mul(g, gy, in[0])));
                break;
            case OpKind::kChanSum:
                emit(0, chan_bcast(g, gy, in_shape(0)));
                break;
            case OpKind::kChanBcast:
                emit(0, chan_sum(g, gy));
                break;
            case OpKind::kAddChan:
                emit(0, gy);
                emit(1, chan_sum(g, gy));
                break;
            case OpKind::kMulChan:
                emit(0, mul_chan(g, gy, in[1]));
                emit(1, chan_sum(g, mul(g, gy, in[0])));
                break;
            case OpKind::kL2NormPerRow:
                // dx = x * (g/r) per row, with 0/0 -> 0 right at r = 0.
                emit(0, mul_row(g, in[0], div_no_nan(g, gy, i)));
                break;
            case OpKind::kConcat: {
                const std::size_t axis = std::get<AxisAttr>(attrs).axis;
                const auto as = in_shape(0), bs = in_shape(1);
                std::vector<std::size_t> astart(as.size(), 0);
                std::vector<std::size_t> bstart(bs.size(), 0);
                bstart[axis] = as[axis];
                emit(0, slice(g, gy, astart, as));
                emit(1, slice(g, gy, bstart, bs));
                break;
            }
            case OpKind::kReshape:
                emit(0, reshape(g, gy, in_shape(0)));
                break;
            case OpKind::kPad: {
                const auto& p = std::get<PadAttr>(attrs);
                emit(0, slice(g, gy, p.before, in_shape(0)));
                break;
            }
            case OpKind::kSlice: {
                const auto& s = std::get<SliceAttr>(attrs);
                const auto xs = in_shape(0);
                std::vector<std::size_t> after(xs.size());
                for (std::size_t d = 0; d < xs.size(); ++d)
                    after[d] = xs[d] - s.start[d] - s.size[d];
                emit(0, pad(g, gy, s.start, after));
                break;
            }
            case OpKind::kAvgPool: {
                const int f = std::get<ConvAttr>(attrs).stride;
                emit(0, scale(g, nearest_up(g, gy, f), 1.0 / (f * f)));
                break;
            }
            case OpKind::kNearestUp: {
                const int f = std::get<ConvAttr>(attrs).stride;
                emit(0, scale(g, avg_pool(g, gy, f), static_cast<double>(f * f)));
                break;
            }
        }
    }
    return adj;
}

NodeId grad_of(const GradientMap& m, NodeId x) {
    auto it = m.find(x);
    if (it == m.end()) throw ShapeError("grad_of: node has no adjoint");
    return it->second;
}

NodeId grad_or_zero(Graph& g, const GradientMap& m, NodeId x) {
    auto it = m.find(x);
    if (it != m.end()) return it->second;
    return g.leaf(Tensor(g.value(x).shape()));
}

NodeId grad_norm_penalty(Graph& g, NodeId critic_output, NodeId input_node) {
    const Tensor& out = g.value(critic_output);
    const Tensor& in_t = g.value(input_node);
    if (out.rank() < 1 || in_t.rank() < 1 || out.dim(0) != in_t.dim(0))
        throw ShapeError("grad_norm_penalty: critic output and input batch dims differ");
    if (out.size() != out.dim(0))
        throw ShapeError("grad_norm_penalty: critic output must be one value per batch row");

    // Reject inputs the critic output does not actually depend on.
    {
        std::vector<char> reach(critic_output + 1, 0);
        reach[critic_output] = 1;
        bool found = false;
        for (NodeId i = critic_output + 1; i-- > 0;) {
            if (!reach[i]) continue;
            if (i == input_node) {
                found = true;
                break;
            }
            for (NodeId in : g.node(i).inputs) reach[in] = 1;
        }
        if (!found) throw ShapeError("grad_norm_penalty: input is not an ancestor of the output");
    }

    // Rows are independent, so per-row input gradients stack into the adjoint
    // of the summed output.
    GradientMap first = backward(g, sum(g, critic_output));
    NodeId gx = grad_or_zero(g, first, input_node);
    NodeId r = l2_norm_per_row(g, gx);
    return mean(g, square(g, add_const(g, r, -1.0)));
}

GradientMap grad_norm_penalty_backward(Graph& g, NodeId critic_output, NodeId input_node) {
    return backward(g, grad_norm_penalty(g, critic_output, input_node));
}

}  // namespace asrl
