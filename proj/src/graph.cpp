#include "asrl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace asrl {

namespace {

void check(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> st(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
    return st;
}

// rows = dim 0, rest = everything after
std::size_t row_rest(const Tensor& t) {
    std::size_t r = 1;
    for (std::size_t i = 1; i < t.rank(); ++i) r *= t.dim(i);
    return r;
}

// per-(batch,channel) contiguous block size for [b,c,...]
std::size_t chan_rest(const Tensor& t) {
    std::size_t r = 1;
    for (std::size_t i = 2; i < t.rank(); ++i) r *= t.dim(i);
    return r;
}

Tensor eval_elementwise2(OpKind kind, const Tensor& a, const Tensor& b) {
    check(a.same_shape(b), std::string(op_name(kind)) + ": operand shapes " +
                               shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out(a.shape());
    const std::size_t n = a.size();
    switch (kind) {
        case OpKind::kAdd:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
            break;
        case OpKind::kSub:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
            break;
        case OpKind::kMul:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
            break;
        case OpKind::kDivNoNan:
            for (std::size_t i = 0; i < n; ++i) out[i] = b[i] == 0.0 ? 0.0 : a[i] / b[i];
            break;
        default:
            throw ShapeError("not an elementwise op");
    }
    return out;
}

Tensor eval_matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, "matmul: operands must be rank 2, got " +
                                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
    check(a.dim(1) == b.dim(0), "matmul: inner dims " + std::to_string(a.dim(1)) + " vs " +
                                    std::to_string(b.dim(0)));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a[i * k + l];
            const double* brow = b.data() + l * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor eval_transpose2d(const Tensor& a) {
    check(a.rank() == 2, "transpose2d: operand must be rank 2");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

std::size_t conv_out_dim(std::size_t in, std::size_t k, int stride, int pad) {
    const std::size_t padded = in + 2 * static_cast<std::size_t>(pad);
    check(padded >= k, "conv2d: kernel larger than padded input");
    return (padded - k) / static_cast<std::size_t>(stride) + 1;
}

// y[b,co,oh,ow] = sum_{ci,kh,kw} x[b,ci,oh*s+kh-p, ow*s+kw-p] * k[co,ci,kh,kw]
Tensor eval_conv2d(const Tensor& x, const Tensor& k, int s, int p) {
    check(x.rank() == 4 && k.rank() == 4, "conv2d: operands must be rank 4 (NCHW)");
    check(x.dim(1) == k.dim(1), "conv2d: input channels " + std::to_string(x.dim(1)) +
                                    " vs kernel " + std::to_string(k.dim(1)));
    check(s >= 1 && p >= 0, "conv2d: stride must be >= 1, pad >= 0");
    const std::size_t B = x.dim(0), CI = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t CO = k.dim(0), KH = k.dim(2), KW = k.dim(3);
    const std::size_t OH = conv_out_dim(H, KH, s, p), OW = conv_out_dim(W, KW, s, p);
    Tensor out({B, CO, OH, OW});
    const std::size_t su = static_cast<std::size_t>(s);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t co = 0; co < CO; ++co) {
            double* yimg = out.data() + (b * CO + co) * OH * OW;
            for (std::size_t ci = 0; ci < CI; ++ci) {
                const double* ximg = x.data() + (b * CI + ci) * H * W;
                const double* kimg = k.data() + (co * CI + ci) * KH * KW;
                for (std::size_t kh = 0; kh < KH; ++kh) {
                    for (std::size_t kw = 0; kw < KW; ++kw) {
                        const double wv = kimg[kh * KW + kw];
                        if (wv == 0.0) continue;
                        // oh range where ih = oh*s + kh - p lands in [0,H)
                        const long ihoff = static_cast<long>(kh) - p;
                        std::size_t oh_lo = 0;
                        if (ihoff < 0) oh_lo = (static_cast<std::size_t>(-ihoff) + su - 1) / su;
                        for (std::size_t oh = oh_lo; oh < OH; ++oh) {
                            const long ih = static_cast<long>(oh * su) + ihoff;
                            if (ih >= static_cast<long>(H)) break;
                            const double* xrow = ximg + static_cast<std::size_t>(ih) * W;
                            double* yrow = yimg + oh * OW;
                            const long iwoff = static_cast<long>(kw) - p;
                            std::size_t ow_lo = 0;
                            if (iwoff < 0) ow_lo = (static_cast<std::size_t>(-iwoff) + su - 1) / su;
                            for (std::size_t ow = ow_lo; ow < OW; ++ow) {
                                const long iw = static_cast<long>(ow * su) + iwoff;
                                if (iw >= static_cast<long>(W)) break;
                                yrow[ow] += wv * xrow[static_cast<std::size_t>(iw)];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

// dx[b,ci,ih,iw] += g[b,co,oh,ow] * k[co,ci,kh,kw] with ih=oh*s+kh-p, iw=ow*s+kw-p
Tensor eval_conv2d_input_grad(const Tensor& gy, const Tensor& k, int s, int p, std::size_t TH,
                              std::size_t TW) {
    check(gy.rank() == 4 && k.rank() == 4, "conv2d_input_grad: operands must be rank 4");
    check(gy.dim(1) == k.dim(0), "conv2d_input_grad: channels mismatch");
    check(TH > 0 && TW > 0, "conv2d_input_grad: target dims must be positive");
    const std::size_t B = gy.dim(0), CO = gy.dim(1), OH = gy.dim(2), OW = gy.dim(3);
    const std::size_t CI = k.dim(1), KH = k.dim(2), KW = k.dim(3);
    check(conv_out_dim(TH, KH, s, p) == OH && conv_out_dim(TW, KW, s, p) == OW,
          "conv2d_input_grad: target dims inconsistent with gradient dims");
    Tensor out({B, CI, TH, TW});
    const std::size_t su = static_cast<std::size_t>(s);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t co = 0; co < CO; ++co) {
            const double* gimg = gy.data() + (b * CO + co) * OH * OW;
            for (std::size_t ci = 0; ci < CI; ++ci) {
                double* ximg = out.data() + (b * CI + ci) * TH * TW;
                const double* kimg = k.data() + (co * CI + ci) * KH * KW;
                for (std::size_t kh = 0; kh < KH; ++kh) {
                    for (std::size_t kw = 0; kw < KW; ++kw) {
                        const double wv = kimg[kh * KW + kw];
                        if (wv == 0.0) continue;
                        const long ihoff = static_cast<long>(kh) - p;
                        std::size_t oh_lo = 0;
                        if (ihoff < 0) oh_lo = (static_cast<std::size_t>(-ihoff) + su - 1) / su;
                        for (std::size_t oh = oh_lo; oh < OH; ++oh) {
                            const long ih = static_cast<long>(oh * su) + ihoff;
                            if (ih >= static_cast<long>(TH)) break;
                            double* xrow = ximg + static_cast<std::size_t>(ih) * TW;
                            const double* grow = gimg + oh * OW;
                            const long iwoff = static_cast<long>(kw) - p;
                            std::size_t ow_lo = 0;
                            if (iwoff < 0) ow_lo = (static_cast<std::size_t>(-iwoff) + su - 1) / su;
                            for (std::size_t ow = ow_lo; ow < OW; ++ow) {
                                const long iw = static_cast<long>(ow * su) + iwoff;
                                if (iw >= static_cast<long>(TW)) break;
                                xrow[static_cast<std::size_t>(iw)] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

// dk[co,ci,kh,kw] = sum_{b,oh,ow} g[b,co,oh,ow] * x[b,ci,oh*s+kh-p, ow*s+kw-p]
Tensor eval_conv2d_kernel_grad(const Tensor& x, const Tensor& gy, int s, int p, std::size_t KH,
                               std::size_t KW) {
    check(x.rank() == 4 && gy.rank() == 4, "conv2d_kernel_grad: operands must be rank 4");
    check(x.dim(0) == gy.dim(0), "conv2d_kernel_grad: batch mismatch");
    check(KH > 0 && KW > 0, "conv2d_kernel_grad: kernel dims must be positive");
    const std::size_t B = x.dim(0), CI = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t CO = gy.dim(1), OH = gy.dim(2), OW = gy.dim(3);
    check(conv_out_dim(H, KH, s, p) == OH && conv_out_dim(W, KW, s, p) == OW,
          "conv2d_kernel_grad: kernel dims inconsistent with gradient dims");
    Tensor out({CO, CI, KH, KW});
    const std::size_t su = static_cast<std::size_t>(s);
    for (std::size_t co = 0; co < CO; ++co) {
        for (std::size_t ci = 0; ci < CI; ++ci) {
            double* kimg = out.data() + (co * CI + ci) * KH * KW;
            for (std::size_t b = 0; b < B; ++b) {
                const double* gimg = gy.data() + (b * CO + co) * OH * OW;
                const double* ximg = x.data() + (b * CI + ci) * H * W;
                for (std::size_t kh = 0; kh < KH; ++kh) {
                    for (std::size_t kw = 0; kw < KW; ++kw) {
                        const long ihoff = static_cast<long>(kh) - p;
                        const long iwoff = static_cast<long>(kw) - p;
                        double acc = 0.0;
                        std::size_t oh_lo = 0;
                        if (ihoff < 0) oh_lo = (static_cast<std::size_t>(-ihoff) + su - 1) / su;
                        for (std::size_t oh = oh_lo; oh < OH; ++oh) {
                            const long ih = static_cast<long>(oh * su) + ihoff;
                            if (ih >= static_cast<long>(H)) break;
                            const double* xrow = ximg + static_cast<std::size_t>(ih) * W;
                            const double* grow = gimg + oh * OW;
                            std::size_t ow_lo = 0;
                            if (iwoff < 0) ow_lo = (static_cast<std::size_t>(-iwoff) + su - 1) / su;
                            for (std::size_t ow = ow_lo; ow < OW; ++ow) {
                                const long iw = static_cast<long>(ow * su) + iwoff;
                                if (iw >= static_cast<long>(W)) break;
                                acc += grow[ow] * xrow[static_cast<std::size_t>(iw)];
                            }
                        }
                        kimg[kh * KW + kw] += acc;
                    }
                }
            }
        }
    }
    return out;
}

// y[b,co,i*s+kh-p, j*s+kw-p] += x[b,ci,i,j] * k[ci,co,kh,kw]
Tensor eval_transposed_conv2d(const Tensor& x, const Tensor& k, int s, int p) {
    check(x.rank() == 4 && k.rank() == 4, "transposed_conv2d: operands must be rank 4");
    check(x.dim(1) == k.dim(0), "transposed_conv2d: input channels " + std::to_string(x.dim(1)) +
                                    " vs kernel " + std::to_string(k.dim(0)));
    check(s >= 1 && p >= 0, "transposed_conv2d: stride must be >= 1, pad >= 0");
    const std::size_t B = x.dim(0), CI = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t CO = k.dim(1), KH = k.dim(2), KW = k.dim(3);
    const long oh_l = static_cast<long>((H - 1) * static_cast<std::size_t>(s)) - 2L * p +
                      static_cast<long>(KH);
    const long ow_l = static_cast<long>((W - 1) * static_cast<std::size_t>(s)) - 2L * p +
                      static_cast<long>(KW);
    check(oh_l >= 1 && ow_l >= 1, "transposed_conv2d: output dims must be positive");
    const std::size_t OH = static_cast<std::size_t>(oh_l), OW = static_cast<std::size_t>(ow_l);
    Tensor out({B, CO, OH, OW});
    const std::size_t su = static_cast<std::size_t>(s);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t ci = 0; ci < CI; ++ci) {
            const double* ximg = x.data() + (b * CI + ci) * H * W;
            for (std::size_t co = 0; co < CO; ++co) {
                double* yimg = out.data() + (b * CO + co) * OH * OW;
                const double* kimg = k.data() + (ci * CO + co) * KH * KW;
                for (std::size_t kh = 0; kh < KH; ++kh) {
                    for (std::size_t kw = 0; kw < KW; ++kw) {
                        const double wv = kimg[kh * KW + kw];
                        if (wv == 0.0) continue;
                        const long ohoff = static_cast<long>(kh) - p;
                        const long owoff = static_cast<long>(kw) - p;
                        std::size_t i_lo = 0;
                        if (ohoff < 0) i_lo = (static_cast<std::size_t>(-ohoff) + su - 1) / su;
                        for (std::size_t i = i_lo; i < H; ++i) {
                            const long oh = static_cast<long>(i * su) + ohoff;
                            if (oh >= static_cast<long>(OH)) break;
                            double* yrow = yimg + static_cast<std::size_t>(oh) * OW;
                            const double* xrow = ximg + i * W;
                            std::size_t j_lo = 0;
                            if (owoff < 0) j_lo = (static_cast<std::size_t>(-owoff) + su - 1) / su;
                            for (std::size_t j = j_lo; j < W; ++j) {
                                const long ow = static_cast<long>(j * su) + owoff;
                                if (ow >= static_cast<long>(OW)) break;
                                yrow[static_cast<std::size_t>(ow)] += wv * xrow[j];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor eval_unary(OpKind kind, const Tensor& a, const OpAttrs& attrs) {
    Tensor out(a.shape());
    const std::size_t n = a.size();
    switch (kind) {
        case OpKind::kRelu:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
            break;
        case OpKind::kStep:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? 1.0 : 0.0;
            break;
        case OpKind::kTanh:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(a[i]);
            break;
        case OpKind::kSigmoid:
            for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
            break;
        case OpKind::kLog:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::log(a[i]);
            break;
        case OpKind::kClamp: {
            const auto& c = std::get<ClampAttr>(attrs);
            for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(a[i], c.lo), c.hi);
            break;
        }
        case OpKind::kInRangeMask: {
            const auto& c = std::get<ClampAttr>(attrs);
            for (std::size_t i = 0; i < n; ++i) out[i] = (a[i] > c.lo && a[i] < c.hi) ? 1.0 : 0.0;
            break;
        }
        case OpKind::kAbs:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(a[i]);
            break;
        case OpKind::kSign:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
            break;
        case OpKind::kSquare:
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * a[i];
            break;
        case OpKind::kSqrt:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(a[i]);
            break;
        case OpKind::kScale: {
            const double f = std::get<ScalarAttr>(attrs).value;
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * f;
            break;
        }
        case OpKind::kAddConst: {
            const double c = std::get<ScalarAttr>(attrs).value;
            for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + c;
            break;
        }
        default:
            throw ShapeError("not a unary op");
    }
    return out;
}

Tensor eval_reduce(OpKind kind, const Tensor& a) {
    switch (kind) {
        case OpKind::kMean: {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
            return Tensor::scalar(acc / static_cast<double>(a.size()));
        }
        case OpKind::kSum: {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
            return Tensor::scalar(acc);
        }
        case OpKind::kRowSum: {
            check(a.rank() >= 1, "row_sum: operand must have a row axis");
            const std::size_t B = a.dim(0), rest = row_rest(a);
            Tensor out({B});
            for (std::size_t b = 0; b < B; ++b) {
                double acc = 0.0;
                const double* row = a.data() + b * rest;
                for (std::size_t i = 0; i < rest; ++i) acc += row[i];
                out[b] = acc;
            }
            return out;
        }
        case OpKind::kChanSum: {
            check(a.rank() >= 2, "chan_sum: operand must have a channel axis");
            const std::size_t B = a.dim(0), C = a.dim(1), rest = chan_rest(a);
            Tensor out({C});
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t c = 0; c < C; ++c) {
                    double acc = 0.0;
                    const double* blk = a.data() + (b * C + c) * rest;
                    for (std::size_t i = 0; i < rest; ++i) acc += blk[i];
                    out[c] += acc;
                }
            }
            return out;
        }
        case OpKind::kL2NormPerRow: {
            check(a.rank() >= 1, "l2_norm_per_row: operand must have a row axis");
            const std::size_t B = a.dim(0), rest = row_rest(a);
            Tensor out({B});
            for (std::size_t b = 0; b < B; ++b) {
                double acc = 0.0;
                const double* row = a.data() + b * rest;
                for (std::size_t i = 0; i < rest; ++i) acc += row[i] * row[i];
                out[b] = std::sqrt(acc);
            }
            return out;
        }
        default:
            throw ShapeError("not a reduce op");
    }
}

Tensor eval_pad(const Tensor& a, const PadAttr& at) {
    check(at.before.size() == a.rank() && at.after.size() == a.rank(),
          "pad: amounts must match rank");
    std::vector<std::size_t> oshape(a.rank());
    for (std::size_t d = 0; d < a.rank(); ++d) oshape[d] = a.dim(d) + at.before[d] + at.after[d];
    Tensor out(oshape);
    const auto ost = strides_of(oshape);
    std::vector<std::size_t> idx(a.rank(), 0);
    for (std::size_t flat = 0; flat < a.size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < a.rank(); ++d) off += (idx[d] + at.before[d]) * ost[d];
        out[off] = a[flat];
        for (std::size_t d = a.rank(); d-- > 0;) {
            if (++idx[d] < a.dim(d)) break;
            idx[d] = 0;
        }
    }
    return out;
}

Tensor eval_slice(const Tensor& a, const SliceAttr& at) {
    check(at.start.size() == a.rank() && at.size.size() == a.rank(),
          "slice: start/size must match rank");
    for (std::size_t d = 0; d < a.rank(); ++d) {
        check(at.size[d] >= 1 && at.start[d] + at.size[d] <= a.dim(d),
              "slice: window exceeds dim " + std::to_string(d));
    }
    Tensor out(at.size);
    const auto ist = strides_of(a.shape());
    std::vector<std::size_t> idx(a.rank(), 0);
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < a.rank(); ++d) off += (at.start[d] + idx[d]) * ist[d];
        out[flat] = a[off];
        for (std::size_t d = a.rank(); d-- > 0;) {
            if (++idx[d] < at.size[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

Tensor eval_avg_pool(const Tensor& a, int factor) {
    check(factor >= 2, "avg_pool: factor must be >= 2");
    check(a.rank() >= 2, "avg_pool: need at least 2 dims, got " + shape_str(a.shape()));
    const std::size_t f = static_cast<std::size_t>(factor);
    const std::size_t h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
    check(h % f == 0 && w % f == 0,
          "avg_pool: spatial dims " + shape_str(a.shape()) + " not divisible by " +
              std::to_string(factor));
    std::vector<std::size_t> oshape = a.shape();
    oshape[a.rank() - 2] = h / f;
    oshape[a.rank() - 1] = w / f;
    Tensor out(oshape);
    std::size_t outer = 1;
    for (std::size_t d = 0; d + 2 < a.rank(); ++d) outer *= a.dim(d);
    const double inv = 1.0 / static_cast<double>(f * f);
    std::vector<double> buf(f * f);
    for (std::size_t o = 0; o < outer; ++o) {
        const double* img = a.data() + o * h * w;
        double* oimg = out.data() + o * (h / f) * (w / f);
        for (std::size_t oy = 0; oy < h / f; ++oy) {
            for (std::size_t ox = 0; ox < w / f; ++ox) {
                for (std::size_t ky = 0; ky < f; ++ky)
                    for (std::size_t kx = 0; kx < f; ++kx)
                        buf[ky * f + kx] = img[(oy * f + ky) * w + ox * f + kx];
                // Pairwise reduction: a block of equal values sums to an exact
                // power-of-two multiple, so constant blocks pool exactly.
                std::size_t n = f * f;
                while (n > 1) {
                    std::size_t half = n / 2;
                    for (std::size_t i = 0; i < half; ++i) buf[i] = buf[2 * i] + buf[2 * i + 1];
                    if (n % 2) buf[half++] = buf[n - 1];
                    n = half;
                }
                oimg[oy * (w / f) + ox] = buf[0] * inv;
            }
        }
    }
    return out;
}

Tensor eval_nearest_up(const Tensor& a, int factor) {
    check(factor >= 2, "nearest_up: factor must be >= 2");
    check(a.rank() >= 2, "nearest_up: need at least 2 dims, got " + shape_str(a.shape()));
    const std::size_t f = static_cast<std::size_t>(factor);
    const std::size_t h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
    std::vector<std::size_t> oshape = a.shape();
    oshape[a.rank() - 2] = h * f;
    oshape[a.rank() - 1] = w * f;
    Tensor out(oshape);
    std::size_t outer = 1;
    for (std::size_t d = 0; d + 2 < a.rank(); ++d) outer *= a.dim(d);
    for (std::size_t o = 0; o < outer; ++o) {
        const double* img = a.data() + o * h * w;
        double* oimg = out.data() + o * h * f * w * f;
        for (std::size_t oy = 0; oy < h * f; ++oy)
            for (std::size_t ox = 0; ox < w * f; ++ox)
                oimg[oy * w * f + ox] = img[(oy / f) * w + ox / f];
    }
    return out;
}

Tensor eval_concat(const Tensor& a, const Tensor& b, std::size_t axis) {
    check(a.rank() == b.rank() && a.rank() >= 1, "concat: rank mismatch");
    check(axis < a.rank(), "concat: axis out of range");
    for (std::size_t d = 0; d < a.rank(); ++d) {
        if (d != axis) check(a.dim(d) == b.dim(d), "concat: shapes differ off-axis");
    }
    std::vector<std::size_t> oshape = a.shape();
    oshape[axis] = a.dim(axis) + b.dim(axis);
    Tensor out(oshape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
    for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
    const std::size_t ablk = a.dim(axis) * inner, bblk = b.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
        std::memcpy(out.data() + o * (ablk + bblk), a.data() + o * ablk, ablk * sizeof(double));
        std::memcpy(out.data() + o * (ablk + bblk) + ablk, b.data() + o * bblk,
                    bblk * sizeof(double));
    }
    return out;
}

Tensor eval_op(OpKind kind, const std::vector<const Tensor*>& in, const OpAttrs& attrs) {
    switch (kind) {
        case OpKind::kLeaf:
            throw ShapeError("leaf nodes are not evaluated");
        case OpKind::kAdd:
        case OpKind::kSub:
        case OpKind::kMul:
        case OpKind::kDivNoNan:
            return eval_elementwise2(kind, *in[0], *in[1]);
        case OpKind::kMatmul:
            return eval_matmul(*in[0], *in[1]);
        case OpKind::kTranspose2d:
            return eval_transpose2d(*in[0]);
        case OpKind::kConv2d: {
            const auto& c = std::get<ConvAttr>(attrs);
            return eval_conv2d(*in[0], *in[1], c.stride, c.pad);
        }
        case OpKind::kConv2dInputGrad: {
            const auto& c = std::get<ConvAttr>(attrs);
            return eval_conv2d_input_grad(*in[0], *in[1], c.stride, c.pad, c.aux_h, c.aux_w);
        }
        case OpKind::kConv2dKernelGrad: {
            const auto& c = std::get<ConvAttr>(attrs);
            return eval_conv2d_kernel_grad(*in[0], *in[1], c.stride, c.pad, c.aux_h, c.aux_w);
        }
        case OpKind::kTransposedConv2d: {
            const auto& c = std::get<ConvAttr>(attrs);
            return eval_transposed_conv2d(*in[0], *in[1], c.stride, c.pad);
        }
        case OpKind::kRelu:
        case OpKind::kStep:
        case OpKind::kTanh:
        case OpKind::kSigmoid:
        case OpKind::kLog:
        case OpKind::kClamp:
        case OpKind::kInRangeMask:
        case OpKind::kAbs:
        case OpKind::kSign:
        case OpKind::kSquare:
        case OpKind::kSqrt:
        case OpKind::kScale:
        case OpKind::kAddConst:
            return eval_unary(kind, *in[0], attrs);
        case OpKind::kMean:
        case OpKind::kSum:
        case OpKind::kRowSum:
        case OpKind::kChanSum:
        case OpKind::kL2NormPerRow:
            return eval_reduce(kind, *in[0]);
        case OpKind::kScalarBcast: {
            const auto& sh = std::get<ShapeAttr>(attrs).shape;
            check(in[0]->size() == 1, "scalar_bcast: operand must be a scalar");
            return Tensor::full(sh, (*in[0])[0]);
        }
        case OpKind::kRowBcast: {
            const auto& sh = std::get<ShapeAttr>(attrs).shape;
            const Tensor& r = *in[0];
            check(r.rank() == 1, "row_bcast: operand must be rank 1");
            check(!sh.empty() && sh[0] == r.dim(0), "row_bcast: target row count mismatch");
            Tensor out(sh);
            const std::size_t rest = out.size() / r.dim(0);
            for (std::size_t b = 0; b < r.dim(0); ++b) {
                double* blk = out.data() + b * rest;
                for (std::size_t i = 0; i < rest; ++i) blk[i] = r[b];
            }
            return out;
        }
        case OpKind::kChanBcast: {
            const auto& sh = std::get<ShapeAttr>(attrs).shape;
            const Tensor& v = *in[0];
            check(v.rank() == 1, "chan_bcast: operand must be rank 1");
            check(sh.size() >= 2 && sh[1] == v.dim(0), "chan_bcast: target channel count mismatch");
            Tensor out(sh);
            const std::size_t B = sh[0], C = sh[1], rest = out.size() / (B * C);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    double* blk = out.data() + (b * C + c) * rest;
                    for (std::size_t i = 0; i < rest; ++i) blk[i] = v[c];
                }
            return out;
        }
        case OpKind::kMulRow: {
            const Tensor& x = *in[0];
            const Tensor& r = *in[1];
            check(r.rank() == 1 && x.rank() >= 1 && x.dim(0) == r.dim(0),
                  "mul_row: expected x[b,...] and r[b], got " + shape_str(x.shape()) + " and " +
                      shape_str(r.shape()));
            Tensor out(x.shape());
            const std::size_t B = x.dim(0), rest = row_rest(x);
            for (std::size_t b = 0; b < B; ++b) {
                const double rv = r[b];
                const double* src = x.data() + b * rest;
                double* dst = out.data() + b * rest;
                for (std::size_t i = 0; i < rest; ++i) dst[i] = src[i] * rv;
            }
            return out;
        }
        case OpKind::kAddChan:
        case OpKind::kMulChan: {
            const Tensor& x = *in[0];
            const Tensor& v = *in[1];
            check(v.rank() == 1 && x.rank() >= 2 && x.dim(1) == v.dim(0),
                  std::string(op_name(kind)) + ": expected x[b,c,...] and v[c], got " +
                      shape_str(x.shape()) + " and " + shape_str(v.shape()));
            Tensor out(x.shape());
            const std::size_t B = x.dim(0), C = x.dim(1), rest = chan_rest(x);
            const bool is_add = kind == OpKind::kAddChan;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    const double vv = v[c];
                    const double* src = x.data() + (b * C + c) * rest;
                    double* dst = out.data() + (b * C + c) * rest;
                    if (is_add)
                        for (std::size_t i = 0; i < rest; ++i) dst[i] = src[i] + vv;
                    else
                        for (std::size_t i = 0; i < rest; ++i) dst[i] = src[i] * vv;
                }
            return out;
        }
        case OpKind::kConcat:
            return eval_concat(*in[0], *in[1], std::get<AxisAttr>(attrs).axis);
        case OpKind::kReshape: {
            const auto& sh = std::get<ShapeAttr>(attrs).shape;
            check(shape_size(sh) == in[0]->size(), "reshape: element count mismatch, " +
                                                       shape_str(in[0]->shape()) + " -> " +
                                                       shape_str(sh));
            return Tensor(sh, std::vector<double>(in[0]->data(), in[0]->data() + in[0]->size()));
        }
        case OpKind::kPad:
            return eval_pad(*in[0], std::get<PadAttr>(attrs));
        case OpKind::kSlice:
            return eval_slice(*in[0], std::get<SliceAttr>(attrs));
        case OpKind::kAvgPool:
            return eval_avg_pool(*in[0], std::get<ConvAttr>(attrs).stride);
        case OpKind::kNearestUp:
            return eval_nearest_up(*in[0], std::get<ConvAttr>(attrs).stride);
    }
    throw ShapeError("unknown op kind");
}

}  // namespace

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::kLeaf: return "leaf";
        case OpKind::kAdd: return "add";
        case OpKind::kSub: return "sub";
        case OpKind::kMul: return "mul";
        case OpKind::kDivNoNan: return "div_no_nan";
        case OpKind::kMatmul: return "matmul";
        case OpKind::kTranspose2d: return "transpose2d";
        case OpKind::kConv2d: return "conv2d";
        case OpKind::kConv2dInputGrad: return "conv2d_input_grad";
        case OpKind::kConv2dKernelGrad: return "conv2d_kernel_grad";
        case OpKind::kTransposedConv2d: return "transposed_conv2d";
        case OpKind::kRelu: return "relu";
        case OpKind::kStep: return "step";
        case OpKind::kTanh: return "tanh";
        case OpKind::kSigmoid: return "sigmoid";
        case OpKind::kLog: return "log";
        case OpKind::kClamp: return "clamp";
        case OpKind::kInRangeMask: return "in_range_mask";
        case OpKind::kAbs: return "abs";
        case OpKind::kSign: return "sign";
        case OpKind::kSquare: return "square";
        case OpKind::kSqrt: return "sqrt";
        case OpKind::kScale: return "scale";
        case OpKind::kAddConst: return "add_const";
        case OpKind::kMean: return "mean";
        case OpKind::kSum: return "sum";
        case OpKind::kScalarBcast: return "scalar_bcast";
        case OpKind::kRowSum: return "row_sum";
        case OpKind::kRowBcast: return "row_bcast";
        case OpKind::kMulRow: return "mul_row";
        case OpKind::kChanSum: return "chan_sum";
        case OpKind::kChanBcast: return "chan_bcast";
        case OpKind::kAddChan: return "add_chan";
        case OpKind::kMulChan: return "mul_chan";
        case OpKind::kL2NormPerRow: return "l2_norm_per_row";
        case OpKind::kConcat: return "concat";
        case OpKind::kReshape: return "reshape";
        case OpKind::kPad: return "pad";
        case OpKind::kSlice: return "slice";
        case OpKind::kAvgPool: return "avg_pool";
        case OpKind::kNearestUp: return "nearest_up";
    }
    return "?";
}

NodeId Graph::leaf(Tensor t) {
    t.ensure_finite("leaf tensor");
    nodes_.push_back(Node{OpKind::kLeaf, {}, std::monostate{}, std::move(t)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::apply(OpKind kind, std::vector<NodeId> inputs, OpAttrs attrs) {
    std::vector<const Tensor*> in;
    in.reserve(inputs.size());
    for (NodeId id : inputs) in.push_back(&nodes_.at(id).value);
    Tensor out = eval_op(kind, in, attrs);
    out.ensure_finite(std::string("op ") + op_name(kind));
    nodes_.push_back(Node{kind, std::move(inputs), std::move(attrs), std::move(out)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

bool Graph::replay_check() const {
    std::vector<Tensor> re;
    re.reserve(nodes_.size());
    for (const Node& nd : nodes_) {
        if (nd.kind == OpKind::kLeaf) {
            re.push_back(nd.value);
            continue;
        }
        std::vector<const Tensor*> in;
        in.reserve(nd.inputs.size());
        for (NodeId id : nd.inputs) in.push_back(&re[id]);
        Tensor v = eval_op(nd.kind, in, nd.attrs);
        if (v.shape() != nd.value.shape()) return false;
        if (std::memcmp(v.data(), nd.value.data(), v.size() * sizeof(double)) != 0) return false;
        re.push_back(std::move(v));
    }
    return true;
}

// ---------------------------------------------------------------------------
// serialization (little-endian binary)

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("graph stream truncated");
    return v;
}

void put_dims(std::ostream& os, const std::vector<std::size_t>& dims) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size()));
    for (std::size_t d : dims) put<std::uint64_t>(os, d);
}

std::vector<std::size_t> get_dims(std::istream& is) {
    const auto n = get<std::uint32_t>(is);
    std::vector<std::size_t> dims(n);
    for (auto& d : dims) d = static_cast<std::size_t>(get<std::uint64_t>(is));
    return dims;
}

void put_tensor(std::ostream& os, const Tensor& t) {
    put_dims(os, t.shape());
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor get_tensor(std::istream& is) {
    auto dims = get_dims(is);
    std::vector<double> data(shape_size(dims));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw IoError("graph stream truncated");
    return Tensor(std::move(dims), std::move(data));
}

constexpr char kGraphMagic[4] = {'A', 'S', 'G', 'R'};
constexpr std::uint32_t kGraphVersion = 1;

}  // namespace

void Graph::save(std::ostream& os) const {
    os.write(kGraphMagic, 4);
    put<std::uint32_t>(os, kGraphVersion);
    put<std::uint64_t>(os, nodes_.size());
    for (const Node& nd : nodes_) {
        put<std::uint8_t>(os, static_cast<std::uint8_t>(nd.kind));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(nd.inputs.size()));
        for (NodeId id : nd.inputs) put<std::uint32_t>(os, id);
        put<std::uint8_t>(os, static_cast<std::uint8_t>(nd.attrs.index()));
        if (const auto* s = std::get_if<ScalarAttr>(&nd.attrs)) {
            put<double>(os, s->value);
        } else if (const auto* c = std::get_if<ClampAttr>(&nd.attrs)) {
            put<double>(os, c->lo);
            put<double>(os, c->hi);
        } else if (const auto* cv = std::get_if<ConvAttr>(&nd.attrs)) {
            put<std::int32_t>(os, cv->stride);
            put<std::int32_t>(os, cv->pad);
            put<std::uint64_t>(os, cv->aux_h);
            put<std::uint64_t>(os, cv->aux_w);
        } else if (const auto* sh = std::get_if<ShapeAttr>(&nd.attrs)) {
            put_dims(os, sh->shape);
        } else if (const auto* ax = std::get_if<AxisAttr>(&nd.attrs)) {
            put<std::uint64_t>(os, ax->axis);
        } else if (const auto* pd = std::get_if<PadAttr>(&nd.attrs)) {
            put_dims(os, pd->before);
            put_dims(os, pd->after);
        } else if (const auto* sl = std::get_if<SliceAttr>(&nd.attrs)) {
            put_dims(os, sl->start);
            put_dims(os, sl->size);
        }
        put_tensor(os, nd.value);
    }
}

Graph Graph::load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kGraphMagic, 4) != 0) throw IoError("not a graph stream");
    if (get<std::uint32_t>(is) != kGraphVersion) throw IoError("graph stream version mismatch");
    const auto count = get<std::uint64_t>(is);
    Graph g;
    g.nodes_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Node nd;
        nd.kind = static_cast<OpKind>(get<std::uint8_t>(is));
        const auto nin = get<std::uint32_t>(is);
        nd.inputs.resize(nin);
        for (auto& id : nd.inputs) {
            id = get<std::uint32_t>(is);
            if (id >= i) throw IoError("graph stream has forward reference");
        }
        switch (get<std::uint8_t>(is)) {
            case 0: nd.attrs = std::monostate{}; break;
            case 1: nd.attrs = ScalarAttr{get<double>(is)}; break;
            case 2: {
                ClampAttr c;
                c.lo = get<double>(is);
                c.hi = get<double>(is);
                nd.attrs = c;
                break;
            }
            case 3: {
                ConvAttr c;
                c.stride = get<std::int32_t>(is);
                c.pad = get<std::int32_t>(is);
                c.aux_h = static_cast<std::size_t>(get<std::uint64_t>(is));
                c.aux_w = static_cast<std::size_t>(get<std::uint64_t>(is));
                nd.attrs = c;
                break;
            }
            case 4: nd.attrs = ShapeAttr{get_dims(is)}; break;
            case 5: nd.attrs = AxisAttr{static_cast<std::size_t>(get<std::uint64_t>(is))}; break;
            case 6: {
                PadAttr p;
                p.before = get_dims(is);
                p.after = get_dims(is);
                nd.attrs = p;
                break;
            }
            case 7: {
                SliceAttr s;
                s.start = get_dims(is);
                s.size = get_dims(is);
                nd.attrs = s;
                break;
            }
            default: throw IoError("graph stream has unknown attr tag");
        }
        nd.value = get_tensor(is);
        g.nodes_.push_back(std::move(nd));
    }
    return g;
}

// ---------------------------------------------------------------------------
// op-building API

NodeId add(Graph& g, NodeId a, NodeId b) { return g.apply(OpKind::kAdd, {a, b}); }
NodeId sub(Graph& g, NodeId a, NodeId b) { return g.apply(OpKind::kSub, {a, b}); }
NodeId mul(Graph& g, NodeId a, NodeId b) { return g.apply(OpKind::kMul, {a, b}); }
NodeId div_no_nan(Graph& g, NodeId a, NodeId b) { return g.apply(OpKind::kDivNoNan, {a, b}); }
NodeId matmul(Graph& g, NodeId a, NodeId b) { return g.apply(OpKind::kMatmul, {a, b}); }
NodeId transpose2d(Graph& g, NodeId a) { return g.apply(OpKind::kTranspose2d, {a}); }

NodeId conv2d(Graph& g, NodeId x, NodeId kernel, int stride, int pad) {
    return g.apply(OpKind::kConv2d, {x, kernel}, ConvAttr{stride, pad, 0, 0});
}
NodeId conv2d_input_grad(Graph& g, NodeId gy, NodeId kernel, int stride, int pad,
                         std::size_t target_h, std::size_t target_w) {
    return g.apply(OpKind::kConv2dInputGrad, {gy, kernel}, ConvAttr{stride, pad, target_h, target_w});
}
NodeId conv2d_kernel_grad(Graph& g, NodeId x, NodeId gy, int stride, int pad, std::size_t kernel_h,
                          std::size_t kernel_w) {
    return g.apply(OpKind::kConv2dKernelGrad, {x, gy}, ConvAttr{stride, pad, kernel_h, kernel_w});
}
NodeId transposed_conv2d(Graph& g, NodeId x, NodeId kernel, int stride, int pad) {
    return g.apply(OpKind::kTransposedConv2d, {x, kernel}, ConvAttr{stride, pad, 0, 0});
}

NodeId relu(Graph& g, NodeId a) { return g.apply(OpKind::kRelu, {a}); }
NodeId step(Graph& g, NodeId a) { return g.apply(OpKind::kStep, {a}); }
NodeId tanh_op(Graph& g, NodeId a) { return g.apply(OpKind::kTanh, {a}); }
NodeId sigmoid(Graph& g, NodeId a) { return g.apply(OpKind::kSigmoid, {a}); }
NodeId log_op(Graph& g, NodeId a) { return g.apply(OpKind::kLog, {a}); }
NodeId clamp(Graph& g, NodeId a, double lo, double hi) {
    return g.apply(OpKind::kClamp, {a}, ClampAttr{lo, hi});
}
NodeId in_range_mask(Graph& g, NodeId a, double lo, double hi) {
    return g.apply(OpKind::kInRangeMask, {a}, ClampAttr{lo, hi});
}
NodeId abs_op(Graph& g, NodeId a) { return g.apply(OpKind::kAbs, {a}); }
NodeId sign_op(Graph& g, NodeId a) { return g.apply(OpKind::kSign, {a}); }
NodeId square(Graph& g, NodeId a) { return g.apply(OpKind::kSquare, {a}); }
NodeId sqrt_op(Graph& g, NodeId a) { return g.apply(OpKind::kSqrt, {a}); }
NodeId scale(Graph& g, NodeId a, double factor) {
    return g.apply(OpKind::kScale, {a}, ScalarAttr{factor});
}
NodeId add_const(Graph& g, NodeId a, double value) {
    return g.apply(OpKind::kAddConst, {a}, ScalarAttr{value});
}
NodeId mean(Graph& g, NodeId a) { return g.apply(OpKind::kMean, {a}); }
NodeId sum(Graph& g, NodeId a) { return g.apply(OpKind::kSum, {a}); }
NodeId scalar_bcast(Graph& g, NodeId s, std::vector<std::size_t> shape) {
    return g.apply(OpKind::kScalarBcast, {s}, ShapeAttr{std::move(shape)});
}
NodeId row_sum(Graph& g, NodeId a) { return g.apply(OpKind::kRowSum, {a}); }
NodeId row_bcast(Graph& g, NodeId r, std::vector<std::size_t> shape) {
    return g.apply(OpKind::kRowBcast, {r}, ShapeAttr{std::move(shape)});
}
NodeId mul_row(Graph& g, NodeId x, NodeId r) { return g.apply(OpKind::kMulRow, {x, r}); }
NodeId chan_sum(Graph& g, NodeId a) { return g.apply(OpKind::kChanSum, {a}); }
NodeId chan_bcast(Graph& g, NodeId v, std::vector<std::size_t> shape) {
    return g.apply(OpKind::kChanBcast, {v}, ShapeAttr{std::move(shape)});
}
NodeId add_chan(Graph& g, NodeId x, NodeId v) { return g.apply(OpKind::kAddChan, {x, v}); }
NodeId mul_chan(Graph& g, NodeId x, NodeId v) { return g.apply(OpKind::kMulChan, {x, v}); }
NodeId l2_norm_per_row(Graph& g, NodeId a) { return g.apply(OpKind::kL2NormPerRow, {a}); }
NodeId concat(Graph& g, NodeId a, NodeId b, std::size_t axis) {
    return g.apply(OpKind::kConcat, {a, b}, AxisAttr{axis});
}
NodeId reshape(Graph& g, NodeId a, std::vector<std::size_t> shape) {
    return g.apply(OpKind::kReshape, {a}, ShapeAttr{std::move(shape)});
}
NodeId pad(Graph& g, NodeId a, std::vector<std::size_t> before, std::vector<std::size_t> after) {
    return g.apply(OpKind::kPad, {a}, PadAttr{std::move(before), std::move(after)});
}
NodeId slice(Graph& g, NodeId a, std::vector<std::size_t> start, std::vector<std::size_t> size) {
    return g.apply(OpKind::kSlice, {a}, SliceAttr{std::move(start), std::move(size)});
}
NodeId avg_pool(Graph& g, NodeId a, int factor) {
    return g.apply(OpKind::kAvgPool, {a}, ConvAttr{factor, 0, 0, 0});
}
NodeId nearest_up(Graph& g, NodeId a, int factor) {
    return g.apply(OpKind::kNearestUp, {a}, ConvAttr{factor, 0, 0, 0});
}

}  // namespace asrl
