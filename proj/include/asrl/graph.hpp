#pragma once

#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "asrl/tensor.hpp"

namespace asrl {

// Recorded primitive operations. Every op evaluates eagerly when recorded and
// stores its output, so the tape doubles as the value cache for backward.
//
// Shape rules (NCHW layout for images):
//   conv2d            x[b,ci,h,w] * k[co,ci,kh,kw], stride s, zero-pad p
//                     -> y[b,co,oh,ow], oh = (h+2p-kh)/s + 1 (floor)
//   transposed_conv2d x[b,ci,h,w] * k[ci,co,kh,kw]
//                     -> y[b,co,(h-1)s-2p+kh, (w-1)s-2p+kw]
//   matmul            [m,k] x [k,n] -> [m,n]
// Elementwise binary ops require identical shapes. Channel ops treat axis 1
// as the channel axis; row ops treat axis 0 as the batch/row axis.
enum class OpKind : std::uint8_t {
    kLeaf = 0,
    kAdd,
    kSub,
    kMul,
    kDivNoNan,  // a/b with 0 where b == 0
    kMatmul,
    kTranspose2d,
    kConv2d,
    kConv2dInputGrad,   // adjoint of conv2d w.r.t. x; aux = target spatial dims
    kConv2dKernelGrad,  // adjoint of conv2d w.r.t. kernel; aux = kernel spatial dims
    kTransposedConv2d,
    kRelu,
    kStep,  // 1 where x > 0 else 0; not differentiated
    kTanh,
    kSigmoid,
    kLog,
    kClamp,
    kInRangeMask,  // 1 where lo < x < hi else 0; not differentiated
    kAbs,
    kSign,  // -1/0/+1; not differentiated
    kSquare,
    kSqrt,
    kScale,     // x * attr.value
    kAddConst,  // x + attr.value
    kMean,      // all elements -> scalar []
    kSum,       // all elements -> scalar []
    kScalarBcast,
    kRowSum,        // [b,...] -> [b]
    kRowBcast,      // [b] -> [b,...]
    kMulRow,        // x[b,...] * r[b], r broadcast over trailing dims
    kChanSum,       // [b,c,...] -> [c]
    kChanBcast,     // [c] -> [b,c,...]
    kAddChan,       // x[b,c,...] + v[c]
    kMulChan,       // x[b,c,...] * v[c]
    kL2NormPerRow,  // [b,...] -> [b], sqrt of row sum of squares
    kConcat,
    kReshape,
    kPad,
    kSlice,
    kAvgPool,    // f x f block mean over the last two dims, stride f
    kNearestUp,  // replicate each pixel f x f over the last two dims
};

const char* op_name(OpKind kind);

struct ScalarAttr {
    double value = 0.0;
};
struct ClampAttr {
    double lo = 0.0, hi = 0.0;
};
struct ConvAttr {
    int stride = 1, pad = 0;
    // Conv2dInputGrad: target input spatial dims. Conv2dKernelGrad: kernel
    // spatial dims. Unused elsewhere.
    std::size_t aux_h = 0, aux_w = 0;
};
struct ShapeAttr {
    std::vector<std::size_t> shape;
};
struct AxisAttr {
    std::size_t axis = 0;
};
struct PadAttr {
    std::vector<std::size_t> before, after;
};
struct SliceAttr {
    std::vector<std::size_t> start, size;
};

using OpAttrs = std::variant<std::monostate, ScalarAttr, ClampAttr, ConvAttr, ShapeAttr,
                             AxisAttr, PadAttr, SliceAttr>;

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Tensor value;
};

// Append-only tape. Inputs always precede outputs, so node order is a
// topological order and reverse iteration is a valid backward schedule.
class Graph {
public:
    NodeId leaf(Tensor t);
    NodeId apply(OpKind kind, std::vector<NodeId> inputs, OpAttrs attrs = std::monostate{});

    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_.at(id); }
    // The reference is invalidated by the next leaf()/apply(); copy the Tensor
    // if more nodes will be recorded.
    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    bool is_leaf(NodeId id) const { return nodes_.at(id).kind == OpKind::kLeaf; }

    void save(std::ostream& os) const;
    static Graph load(std::istream& is);

    // Recompute every non-leaf output from the leaves; true iff all stored
    // outputs are reproduced bit-exactly.
    bool replay_check() const;

private:
    std::vector<Node> nodes_;
};

// Op-building API. Each call validates shapes, evaluates, checks the result
// is finite, and records a node.
NodeId add(Graph& g, NodeId a, NodeId b);
NodeId sub(Graph& g, NodeId a, NodeId b);
NodeId mul(Graph& g, NodeId a, NodeId b);
NodeId div_no_nan(Graph& g, NodeId a, NodeId b);
NodeId matmul(Graph& g, NodeId a, NodeId b);
NodeId transpose2d(Graph& g, NodeId a);
NodeId conv2d(Graph& g, NodeId x, NodeId kernel, int stride, int pad);
NodeId conv2d_input_grad(Graph& g, NodeId gy, NodeId kernel, int stride, int pad,
                         std::size_t target_h, std::size_t target_w);
NodeId conv2d_kernel_grad(Graph& g, NodeId x, NodeId gy, int stride, int pad,
                          std::size_t kernel_h, std::size_t kernel_w);
NodeId transposed_conv2d(Graph& g, NodeId x, NodeId kernel, int stride, int pad);
NodeId relu(Graph& g, NodeId a);
NodeId step(Graph& g, NodeId a);
NodeId tanh_op(Graph& g, NodeId a);
NodeId sigmoid(Graph& g, NodeId a);
NodeId log_op(Graph& g, NodeId a);
NodeId clamp(Graph& g, NodeId a, double lo, double hi);
NodeId in_range_mask(Graph& g, NodeId a, double lo, double hi);
NodeId abs_op(Graph& g, NodeId a);
NodeId sign_op(Graph& g, NodeId a);
NodeId square(Graph& g, NodeId a);
NodeId sqrt_op(Graph& g, NodeId a);
NodeId scale(Graph& g, NodeId a, double factor);
NodeId add_const(Graph& g, NodeId a, double value);
NodeId mean(Graph& g, NodeId a);
NodeId sum(Graph& g, NodeId a);
NodeId scalar_bcast(Graph& g, NodeId s, std::vector<std::size_t> shape);
NodeId row_sum(Graph& g, NodeId a);
NodeId row_bcast(Graph& g, NodeId r, std::vector<std::size_t> shape);
NodeId mul_row(Graph& g, NodeId x, NodeId r);
NodeId chan_sum(Graph& g, NodeId a);
NodeId chan_bcast(Graph& g, NodeId v, std::vector<std::size_t> shape);
NodeId add_chan(Graph& g, NodeId x, NodeId v);
NodeId mul_chan(Graph& g, NodeId x, NodeId v);
NodeId l2_norm_per_row(Graph& g, NodeId a);
NodeId concat(Graph& g, NodeId a, NodeId b, std::size_t axis);
NodeId reshape(Graph& g, NodeId a, std::vector<std::size_t> shape);
NodeId pad(Graph& g, NodeId a, std::vector<std::size_t> before, std::vector<std::size_t> after);
NodeId slice(Graph& g, NodeId a, std::vector<std::size_t> start, std::vector<std::size_t> size);
// Block mean sums each f x f block pairwise, so pooling an image whose blocks
// are constant is exact, not just close.
NodeId avg_pool(Graph& g, NodeId a, int factor);
NodeId nearest_up(Graph& g, NodeId a, int factor);

}  // namespace asrl
