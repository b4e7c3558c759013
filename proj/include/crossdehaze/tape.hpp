#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "crossdehaze/tensor.hpp"

namespace crossdehaze {

/// Reverse-mode autodiff tape.
///
/// Ops append nodes in execution order, so creation order is a topological
/// order and backward() is a single reverse sweep. Within a sweep every
/// gradient is accumulated with +=. Across sweeps, leaf gradients persist
/// (two backward calls double them) while interior gradients are reset, so
/// repeated backward calls on the same graph stay well defined.
///
/// The tape is pinned in memory (no copy/move): op closures capture the
/// tape pointer plus node ids, never node references.
template <typename T>
class Tape {
public:
    using Id = int32_t;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable leaf (parameter or input).
    Id leaf(Tensor<T> value) { return push(std::move(value), true, nullptr); }

    /// Non-differentiable leaf; gradient flow stops here.
    Id constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

    const Tensor<T>& val(Id id) const { return nodes_[check(id)].value; }
    Tensor<T>& grad(Id id) { return nodes_[check(id)].grad; }
    bool requires_grad(Id id) const { return nodes_[check(id)].requires_grad; }
    size_t node_count() const { return nodes_.size(); }

    /// Appends an op node. `bw` is empty when no input requires grad.
    Id push(Tensor<T> value, bool requires_grad, std::function<void()> bw) {
        Node n;
        n.grad = Tensor<T>::zeros(value.shape);
        n.value = std::move(value);
        n.backward = std::move(bw);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size()) - 1;
    }

    void backward(Id root) {
        require(val(root).numel() == 1, Errc::invalid_argument,
                "backward requires a scalar loss node");
        for (Node& n : nodes_)
            if (n.backward) n.grad.fill(T(0));
        nodes_[root].grad.data[0] += T(1);
        for (Id i = root; i >= 0; --i)
            if (nodes_[i].backward) nodes_[i].backward();
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::function<void()> backward;
        bool requires_grad = false;
    };

    Id check(Id id) const {
        require(id >= 0 && id < static_cast<Id>(nodes_.size()), Errc::invalid_argument,
                "node id not on this tape");
        return id;
    }

    std::vector<Node> nodes_;
};

namespace tapeops {

template <typename T>
using Id = typename Tape<T>::Id;

inline int reflect_index(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

}  // namespace tapeops

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
tapeops::Id<T> add(Tape<T>& tp, tapeops::Id<T> a, tapeops::Id<T> b) {
    require(tp.val(a).same_shape(tp.val(b)), Errc::dimension_mismatch, "add: shape mismatch");
    Tensor<T> out = tp.val(a);
    const Tensor<T>& vb = tp.val(b);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];

    const bool track = tp.requires_grad(a) || tp.requires_grad(b);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, b, id] {
            const Tensor<T>& g = tp.grad(id);
            Tensor<T>& ga = tp.grad(a);
            Tensor<T>& gb = tp.grad(b);
            for (size_t i = 0; i < g.data.size(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] += g.data[i];
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

template <typename T>
tapeops::Id<T> sub(Tape<T>& tp, tapeops::Id<T> a, tapeops::Id<T> b) {
    require(tp.val(a).same_shape(tp.val(b)), Errc::dimension_mismatch, "sub: shape mismatch");
    Tensor<T> out = tp.val(a);
    const Tensor<T>& vb = tp.val(b);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];

    const bool track = tp.requires_grad(a) || tp.requires_grad(b);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, b, id] {
            const Tensor<T>& g = tp.grad(id);
            Tensor<T>& ga = tp.grad(a);
            Tensor<T>& gb = tp.grad(b);
            for (size_t i = 0; i < g.data.size(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] -= g.data[i];
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Multiplication by a compile-time-known constant.
template <typename T>
tapeops::Id<T> scale(Tape<T>& tp, tapeops::Id<T> a, T factor) {
    Tensor<T> out = tp.val(a);
    for (T& v : out.data) v *= factor;

    const bool track = tp.requires_grad(a);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, id, factor] {
            const Tensor<T>& g = tp.grad(id);
            Tensor<T>& ga = tp.grad(a);
            for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += factor * g.data[i];
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Gradient barrier: copies the value into a fresh constant leaf.
template <typename T>
tapeops::Id<T> detach(Tape<T>& tp, tapeops::Id<T> a) {
    return tp.constant(tp.val(a));
}

/// GELU, tanh form: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
template <typename T>
tapeops::Id<T> gelu(Tape<T>& tp, tapeops::Id<T> a) {
    constexpr double kSqrt2OverPi = 0.7978845608028654;
    constexpr double kCubic = 0.044715;
    const Tensor<T>& x = tp.val(a);
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double v = static_cast<double>(x.data[i]);
        const double u = kSqrt2OverPi * (v + kCubic * v * v * v);
        out.data[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(u)));
    }

    const bool track = tp.requires_grad(a);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, id] {
            const Tensor<T>& g = tp.grad(id);
            const Tensor<T>& x = tp.val(a);
            Tensor<T>& ga = tp.grad(a);
            for (size_t i = 0; i < g.data.size(); ++i) {
                const double v = static_cast<double>(x.data[i]);
                const double u = kSqrt2OverPi * (v + kCubic * v * v * v);
                const double t = std::tanh(u);
                const double du = kSqrt2OverPi * (1.0 + 3.0 * kCubic * v * v);
                const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                ga.data[i] += static_cast<T>(d) * g.data[i];
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

// ---------------------------------------------------------------------------
// Spatial ops on (C,H,W) tensors
// ---------------------------------------------------------------------------

template <typename T>
tapeops::Id<T> reflect_pad(Tape<T>& tp, tapeops::Id<T> a, int left, int right, int top, int bottom) {
    const Tensor<T>& x = tp.val(a);
    require(x.ndim() == 3, Errc::dimension_mismatch, "reflect_pad: expected (C,H,W)");
    const int C = x.chans(), H = x.height(), W = x.width();
    require(left >= 0 && right >= 0 && top >= 0 && bottom >= 0, Errc::invalid_argument,
            "reflect_pad: negative padding");
    require(left < W && right < W && top < H && bottom < H, Errc::invalid_argument,
            "reflect_pad: padding must be smaller than the image");

    Tensor<T> out = Tensor<T>::zeros({C, H + top + bottom, W + left + right});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H + top + bottom; ++y) {
            const int sy = tapeops::reflect_index(y - top, H);
            for (int x2 = 0; x2 < W + left + right; ++x2)
                out.at3(c, y, x2) = x.at3(c, sy, tapeops::reflect_index(x2 - left, W));
        }

    const bool track = tp.requires_grad(a);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, id, left, top, C, H, W] {
            const Tensor<T>& g = tp.grad(id);
            Tensor<T>& ga = tp.grad(a);
            const int OH = g.height(), OW = g.width();
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < OH; ++y) {
                    const int sy = tapeops::reflect_index(y - top, H);
                    for (int x2 = 0; x2 < OW; ++x2)
                        ga.at3(c, sy, tapeops::reflect_index(x2 - left, W)) += g.at3(c, y, x2);
                }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

template <typename T>
tapeops::Id<T> crop2d(Tape<T>& tp, tapeops::Id<T> a, int x0, int y0, int w, int h) {
    const Tensor<T>& x = tp.val(a);
    require(x.ndim() == 3, Errc::dimension_mismatch, "crop2d: expected (C,H,W)");
    require(x0 >= 0 && y0 >= 0 && w >= 1 && h >= 1 && x0 + w <= x.width() && y0 + h <= x.height(),
            Errc::out_of_range, "crop2d: rectangle out of bounds");
    const int C = x.chans();

    Tensor<T> out = Tensor<T>::zeros({C, h, w});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < h; ++y)
            for (int x2 = 0; x2 < w; ++x2) out.at3(c, y, x2) = x.at3(c, y0 + y, x0 + x2);

    const bool track = tp.requires_grad(a);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, id, x0, y0, w, h, C] {
            const Tensor<T>& g = tp.grad(id);
            Tensor<T>& ga = tp.grad(a);
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < h; ++y)
                    for (int x2 = 0; x2 < w; ++x2) ga.at3(c, y0 + y, x0 + x2) += g.at3(c, y, x2);
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Channel slice: keeps `count` channels starting at `start`.
template <typename T>
tapeops::Id<T> slice_channels(Tape<T>& tp, tapeops::Id<T> a, int start, int count) {
    const Tensor<T>& x = tp.val(a);
    require(x.ndim() == 3, Errc::dimension_mismatch, "slice_channels: expected (C,H,W)");
    require(start >= 0 && count >= 1 && start + count <= x.chans(), Errc::out_of_range,
            "slice_channels: channel range out of bounds");
    const int H = x.height(), W = x.width();
    const size_t plane = static_cast<size_t>(H) * W;

    Tensor<T> out = Tensor<T>::zeros({count, H, W});
    std::copy(x.data.begin() + start * plane, x.data.begin() + (start + count) * plane, out.data.begin());

    const bool track = tp.requires_grad(a);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, id, start, plane] {
            const Tensor<T>& g = tp.grad(id);
            Tensor<T>& ga = tp.grad(a);
            for (size_t i = 0; i < g.data.size(); ++i) ga.data[start * plane + i] += g.data[i];
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Valid cross-correlation: x (Cin,H,W) * w (Cout,Cin,K,K) + b (Cout),
/// stride 1 or 2. Output (Cout, (H-K)/s+1, (W-K)/s+1).
template <typename T>
tapeops::Id<T> conv2d_valid(Tape<T>& tp, tapeops::Id<T> xa, tapeops::Id<T> wa, tapeops::Id<T> ba,
                            int stride) {
    const Tensor<T>& x = tp.val(xa);
    const Tensor<T>& w = tp.val(wa);
    const Tensor<T>& b = tp.val(ba);
    require(x.ndim() == 3 && w.ndim() == 4 && b.ndim() == 1, Errc::dimension_mismatch,
            "conv2d: rank mismatch");
    require(w.dim(1) == x.chans(), Errc::dimension_mismatch, "conv2d: input channel mismatch");
    require(w.dim(0) == b.dim(0), Errc::dimension_mismatch, "conv2d: bias size mismatch");
    require(stride == 1 || stride == 2, Errc::invalid_argument, "conv2d: stride must be 1 or 2");
    const int Cin = x.chans(), H = x.height(), W = x.width();
    const int Cout = w.dim(0), K = w.dim(2);
    require(w.dim(3) == K, Errc::dimension_mismatch, "conv2d: kernel must be square");
    require(K <= H && K <= W, Errc::dimension_mismatch, "conv2d: kernel larger than input");
    const int OH = (H - K) / stride + 1, OW = (W - K) / stride + 1;

    Tensor<T> out = Tensor<T>::zeros({Cout, OH, OW});
    for (int co = 0; co < Cout; ++co) {
        const T* wc = w.data.data() + static_cast<size_t>(co) * Cin * K * K;
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                T acc = b.data[co];
                for (int ci = 0; ci < Cin; ++ci)
                    for (int ky = 0; ky < K; ++ky) {
                        const T* xr = &x.at3(ci, oy * stride + ky, ox * stride);
                        const T* wr = wc + (static_cast<size_t>(ci) * K + ky) * K;
                        for (int kx = 0; kx < K; ++kx) acc += wr[kx] * xr[kx];
                    }
                out.at3(co, oy, ox) = acc;
            }
    }

    const bool track = tp.requires_grad(xa) || tp.requires_grad(wa) || tp.requires_grad(ba);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, xa, wa, ba, id, stride, Cin, K, Cout] {
            const Tensor<T>& g = tp.grad(id);
            const Tensor<T>& x = tp.val(xa);
            const Tensor<T>& w = tp.val(wa);
            Tensor<T>& gx = tp.grad(xa);
            Tensor<T>& gw = tp.grad(wa);
            Tensor<T>& gb = tp.grad(ba);
            const int OH = g.height(), OW = g.width();
            for (int co = 0; co < Cout; ++co) {
                const T* wc = w.data.data() + static_cast<size_t>(co) * Cin * K * K;
                T* gwc = gw.data.data() + static_cast<size_t>(co) * Cin * K * K;
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        const T go = g.at3(co, oy, ox);
                        gb.data[co] += go;
                        for (int ci = 0; ci < Cin; ++ci)
                            for (int ky = 0; ky < K; ++ky) {
                                const T* xr = &x.at3(ci, oy * stride + ky, ox * stride);
                                T* gxr = &gx.at3(ci, oy * stride + ky, ox * stride);
                                const T* wr = wc + (static_cast<size_t>(ci) * K + ky) * K;
                                T* gwr = gwc + (static_cast<size_t>(ci) * K + ky) * K;
                                for (int kx = 0; kx < K; ++kx) {
                                    gwr[kx] += go * xr[kx];
                                    gxr[kx] += go * wr[kx];
                                }
                            }
                    }
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Same-size convolution: reflect padding of (K-1)/2 on each side, then a
/// valid convolution. With stride 2 and even input dims the output is
/// exactly half size.
template <typename T>
tapeops::Id<T> conv2d(Tape<T>& tp, tapeops::Id<T> x, tapeops::Id<T> w, tapeops::Id<T> b,
                      int stride = 1) {
    const int K = tp.val(w).dim(2);
    const int pad = (K - 1) / 2;
    require(K % 2 == 1, Errc::invalid_argument, "conv2d: kernel size must be odd");
    const auto padded = pad > 0 ? reflect_pad(tp, x, pad, pad, pad, pad) : x;
    return conv2d_valid(tp, padded, w, b, stride);
}

/// Per-channel normalization over the spatial extent with learned scale
/// and shift:  y_c = gamma_c * (x_c - mean_c)/sqrt(var_c + eps) + beta_c.
template <typename T>
tapeops::Id<T> channel_norm(Tape<T>& tp, tapeops::Id<T> xa, tapeops::Id<T> ga, tapeops::Id<T> ba,
                            T eps = T(1e-6)) {
    const Tensor<T>& x = tp.val(xa);
    const Tensor<T>& gamma = tp.val(ga);
    const Tensor<T>& beta = tp.val(ba);
    require(x.ndim() == 3, Errc::dimension_mismatch, "channel_norm: expected (C,H,W)");
    const int C = x.chans();
    require(gamma.numel() == C && beta.numel() == C, Errc::dimension_mismatch,
            "channel_norm: scale/shift size mismatch");
    const size_t n = static_cast<size_t>(x.height()) * x.width();

    Tensor<T> out = Tensor<T>::zeros(x.shape);
    // saved for backward
    auto xhat = std::make_shared<std::vector<T>>(x.data.size());
    auto inv_std = std::make_shared<std::vector<T>>(C);
    for (int c = 0; c < C; ++c) {
        const T* p = x.data.data() + c * n;
        double mu = 0.0;
        for (size_t i = 0; i < n; ++i) mu += p[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double d = p[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        (*inv_std)[c] = inv;
        T* xh = xhat->data() + c * n;
        T* o = out.data.data() + c * n;
        for (size_t i = 0; i < n; ++i) {
            xh[i] = static_cast<T>((p[i] - mu)) * inv;
            o[i] = gamma.data[c] * xh[i] + beta.data[c];
        }
    }

    const bool track = tp.requires_grad(xa) || tp.requires_grad(ga) || tp.requires_grad(ba);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, xa, ga, ba, id, C, n, xhat, inv_std] {
            const Tensor<T>& g = tp.grad(id);
            const Tensor<T>& gamma = tp.val(ga);
            Tensor<T>& gx = tp.grad(xa);
            Tensor<T>& ggamma = tp.grad(ga);
            Tensor<T>& gbeta = tp.grad(ba);
            for (int c = 0; c < C; ++c) {
                const T* gp = g.data.data() + c * n;
                const T* xh = xhat->data() + c * n;
                double sum_g = 0.0, sum_gx = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    sum_g += gp[i];
                    sum_gx += gp[i] * xh[i];
                }
                gbeta.data[c] += static_cast<T>(sum_g);
                ggamma.data[c] += static_cast<T>(sum_gx);
                const T mean_g = static_cast<T>(sum_g / static_cast<double>(n));
                const T mean_gx = static_cast<T>(sum_gx / static_cast<double>(n));
                const T k = gamma.data[c] * (*inv_std)[c];
                T* gxp = gx.data.data() + c * n;
                for (size_t i = 0; i < n; ++i)
                    gxp[i] += k * (gp[i] - mean_g - xh[i] * mean_gx);
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Multi-head scaled dot-product attention within non-overlapping
/// win x win windows. q,k,v are (C,H,W) with H,W multiples of win and C a
/// multiple of `heads`; tokens are window pixels, features the channels of
/// one head. If `probs_out` is given the softmax rows are copied there
/// (row-major per window/head) for inspection.
template <typename T>
tapeops::Id<T> window_attention(Tape<T>& tp, tapeops::Id<T> qa, tapeops::Id<T> ka,
                                tapeops::Id<T> va, int win, int heads,
                                std::vector<T>* probs_out = nullptr) {
    const Tensor<T>& q = tp.val(qa);
    require(q.ndim() == 3, Errc::dimension_mismatch, "window_attention: expected (C,H,W)");
    require(tp.val(ka).same_shape(q) && tp.val(va).same_shape(q), Errc::dimension_mismatch,
            "window_attention: q/k/v shape mismatch");
    const int C = q.chans(), H = q.height(), W = q.width();
    require(H % win == 0 && W % win == 0, Errc::dimension_mismatch,
            "window_attention: dims must be multiples of the window");
    require(C % heads == 0, Errc::dimension_mismatch,
            "window_attention: heads must divide channels");
    const int d = C / heads;
    const int N = win * win;
    const int wy_n = H / win, wx_n = W / win;
    const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

    const Tensor<T>& k = tp.val(ka);
    const Tensor<T>& v = tp.val(va);
    Tensor<T> out = Tensor<T>::zeros(q.shape);
    auto probs = std::make_shared<std::vector<T>>(
        static_cast<size_t>(wy_n) * wx_n * heads * N * N);

    std::vector<T> scores(static_cast<size_t>(N) * N);
    for (int wy = 0; wy < wy_n; ++wy)
        for (int wx = 0; wx < wx_n; ++wx)
            for (int h = 0; h < heads; ++h) {
                const int y0 = wy * win, x0 = wx * win, c0 = h * d;
                auto tok = [&](const Tensor<T>& t, int n, int j) {
                    return t.at3(c0 + j, y0 + n / win, x0 + n % win);
                };
                // S = Q K^T * scale, then row softmax
                for (int i = 0; i < N; ++i)
                    for (int j = 0; j < N; ++j) {
                        T s = T(0);
                        for (int f = 0; f < d; ++f) s += tok(q, i, f) * tok(k, j, f);
                        scores[static_cast<size_t>(i) * N + j] = s * att_scale;
                    }
                T* P = probs->data() +
                       ((static_cast<size_t>(wy) * wx_n + wx) * heads + h) * N * N;
                for (int i = 0; i < N; ++i) {
                    T* row = P + static_cast<size_t>(i) * N;
                    const T* srow = scores.data() + static_cast<size_t>(i) * N;
                    T mx = srow[0];
                    for (int j = 1; j < N; ++j) mx = std::max(mx, srow[j]);
                    T sum = T(0);
                    for (int j = 0; j < N; ++j) {
                        row[j] = std::exp(srow[j] - mx);
                        sum += row[j];
                    }
                    for (int j = 0; j < N; ++j) row[j] /= sum;
                }
                // O = P V
                for (int i = 0; i < N; ++i)
                    for (int f = 0; f < d; ++f) {
                        T acc = T(0);
                        const T* row = P + static_cast<size_t>(i) * N;
                        for (int j = 0; j < N; ++j) acc += row[j] * tok(v, j, f);
                        out.at3(c0 + f, y0 + i / win, x0 + i % win) = acc;
                    }
            }
    if (probs_out) *probs_out = *probs;

    const bool track = tp.requires_grad(qa) || tp.requires_grad(ka) || tp.requires_grad(va);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, qa, ka, va, id, win, heads, d, N, wy_n, wx_n, att_scale, probs] {
            const Tensor<T>& g = tp.grad(id);
            const Tensor<T>& q = tp.val(qa);
            const Tensor<T>& k = tp.val(ka);
            const Tensor<T>& v = tp.val(va);
            Tensor<T>& gq = tp.grad(qa);
            Tensor<T>& gk = tp.grad(ka);
            Tensor<T>& gv = tp.grad(va);
            std::vector<T> dP(static_cast<size_t>(N) * N), dS(static_cast<size_t>(N) * N);
            for (int wy = 0; wy < wy_n; ++wy)
                for (int wx = 0; wx < wx_n; ++wx)
                    for (int h = 0; h < heads; ++h) {
                        const int y0 = wy * win, x0 = wx * win, c0 = h * d;
                        auto tok = [&](const Tensor<T>& t, int n, int j) {
                            return t.at3(c0 + j, y0 + n / win, x0 + n % win);
                        };
                        auto gtok = [&](Tensor<T>& t, int n, int j) -> T& {
                            return t.at3(c0 + j, y0 + n / win, x0 + n % win);
                        };
                        const T* P = probs->data() +
                                     ((static_cast<size_t>(wy) * wx_n + wx) * heads + h) * N * N;
                        // dV = P^T dO ; dP = dO V^T
                        for (int j = 0; j < N; ++j)
                            for (int f = 0; f < d; ++f) {
                                T acc = T(0);
                                for (int i = 0; i < N; ++i)
                                    acc += P[static_cast<size_t>(i) * N + j] * tok(g, i, f);
                                gtok(gv, j, f) += acc;
                            }
                        for (int i = 0; i < N; ++i)
                            for (int j = 0; j < N; ++j) {
                                T acc = T(0);
                                for (int f = 0; f < d; ++f) acc += tok(g, i, f) * tok(v, j, f);
                                dP[static_cast<size_t>(i) * N + j] = acc;
                            }
                        // softmax backward per row
                        for (int i = 0; i < N; ++i) {
                            const T* prow = P + static_cast<size_t>(i) * N;
                            const T* dprow = dP.data() + static_cast<size_t>(i) * N;
                            T dot = T(0);
                            for (int j = 0; j < N; ++j) dot += prow[j] * dprow[j];
                            T* dsrow = dS.data() + static_cast<size_t>(i) * N;
                            for (int j = 0; j < N; ++j) dsrow[j] = prow[j] * (dprow[j] - dot);
                        }
                        // dQ = scale * dS K ; dK = scale * dS^T Q
                        for (int i = 0; i < N; ++i)
                            for (int f = 0; f < d; ++f) {
                                T accq = T(0);
                                for (int j = 0; j < N; ++j)
                                    accq += dS[static_cast<size_t>(i) * N + j] * tok(k, j, f);
                                gtok(gq, i, f) += att_scale * accq;
                            }
                        for (int j = 0; j < N; ++j)
                            for (int f = 0; f < d; ++f) {
                                T acck = T(0);
                                for (int i = 0; i < N; ++i)
                                    acck += dS[static_cast<size_t>(i) * N + j] * tok(q, i, f);
                                gtok(gk, j, f) += att_scale * acck;
                            }
                    }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Nearest-neighbor 2x upsampling.
template <typename T>
tapeops::Id<T> upsample_nearest2(Tape<T>& tp, tapeops::Id<T> a) {
    const Tensor<T>& x = tp.val(a);
    require(x.ndim() == 3, Errc::dimension_mismatch, "upsample: expected (C,H,W)");
    const int C = x.chans(), H = x.height(), W = x.width();
    Tensor<T> out = Tensor<T>::zeros({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
            for (int x2 = 0; x2 < 2 * W; ++x2) out.at3(c, y, x2) = x.at3(c, y / 2, x2 / 2);

    const bool track = tp.requires_grad(a);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, id, C, H, W] {
            const Tensor<T>& g = tp.grad(id);
            Tensor<T>& ga = tp.grad(a);
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < 2 * H; ++y)
                    for (int x2 = 0; x2 < 2 * W; ++x2) ga.at3(c, y / 2, x2 / 2) += g.at3(c, y, x2);
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Depthwise 1-d convolution along one axis with reflected borders; the
/// kernel is a fixed (non-learned) operator. Kernel length must be odd
/// and fit in the image.
template <typename T>
tapeops::Id<T> blur_axis(Tape<T>& tp, tapeops::Id<T> a, std::vector<T> kernel, bool horizontal) {
    const Tensor<T>& x = tp.val(a);
    require(x.ndim() == 3, Errc::dimension_mismatch, "blur_axis: expected (C,H,W)");
    require(kernel.size() % 2 == 1, Errc::invalid_argument, "blur_axis: kernel length must be odd");
    const int C = x.chans(), H = x.height(), W = x.width();
    const int r = static_cast<int>(kernel.size()) / 2;
    require(static_cast<int>(kernel.size()) <= (horizontal ? W : H), Errc::dimension_mismatch,
            "blur_axis: kernel larger than image");

    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x2 = 0; x2 < W; ++x2) {
                T acc = T(0);
                for (int t = -r; t <= r; ++t) {
                    const int sy = horizontal ? y : tapeops::reflect_index(y + t, H);
                    const int sx = horizontal ? tapeops::reflect_index(x2 + t, W) : x2;
                    acc += kernel[static_cast<size_t>(t + r)] * x.at3(c, sy, sx);
                }
                out.at3(c, y, x2) = acc;
            }

    const bool track = tp.requires_grad(a);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, id, kernel = std::move(kernel), horizontal, C, H, W, r] {
            const Tensor<T>& g = tp.grad(id);
            Tensor<T>& ga = tp.grad(a);
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x2 = 0; x2 < W; ++x2) {
                        const T go = g.at3(c, y, x2);
                        for (int t = -r; t <= r; ++t) {
                            const int sy = horizontal ? y : tapeops::reflect_index(y + t, H);
                            const int sx = horizontal ? tapeops::reflect_index(x2 + t, W) : x2;
                            ga.at3(c, sy, sx) += kernel[static_cast<size_t>(t + r)] * go;
                        }
                    }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Separable blur: the 1-d kernel applied horizontally then vertically.
template <typename T>
tapeops::Id<T> blur_separable(Tape<T>& tp, tapeops::Id<T> a, const std::vector<T>& kernel) {
    return blur_axis(tp, blur_axis(tp, a, kernel, true), kernel, false);
}

// ---------------------------------------------------------------------------
// Vector ops (fusion gate path) and reductions
// ---------------------------------------------------------------------------

/// Global average pooling (C,H,W) -> (C).
template <typename T>
tapeops::Id<T> global_avg_pool(Tape<T>& tp, tapeops::Id<T> a) {
    const Tensor<T>& x = tp.val(a);
    require(x.ndim() == 3, Errc::dimension_mismatch, "global_avg_pool: expected (C,H,W)");
    const int C = x.chans();
    const size_t n = static_cast<size_t>(x.height()) * x.width();
    Tensor<T> out = Tensor<T>::zeros({C});
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        const T* p = x.data.data() + c * n;
        for (size_t i = 0; i < n; ++i) acc += p[i];
        out.data[c] = static_cast<T>(acc / static_cast<double>(n));
    }

    const bool track = tp.requires_grad(a);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, id, C, n] {
            const Tensor<T>& g = tp.grad(id);
            Tensor<T>& ga = tp.grad(a);
            for (int c = 0; c < C; ++c) {
                const T k = g.data[c] / static_cast<T>(n);
                T* p = ga.data.data() + c * n;
                for (size_t i = 0; i < n; ++i) p[i] += k;
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Dense layer on a vector: y = W x + b, W is (Out,In).
template <typename T>
tapeops::Id<T> linear(Tape<T>& tp, tapeops::Id<T> xa, tapeops::Id<T> wa, tapeops::Id<T> ba) {
    const Tensor<T>& x = tp.val(xa);
    const Tensor<T>& w = tp.val(wa);
    const Tensor<T>& b = tp.val(ba);
    require(x.ndim() == 1 && w.ndim() == 2 && b.ndim() == 1, Errc::dimension_mismatch,
            "linear: rank mismatch");
    const int In = x.dim(0), Out = w.dim(0);
    require(w.dim(1) == In && b.dim(0) == Out, Errc::dimension_mismatch, "linear: size mismatch");

    Tensor<T> out = Tensor<T>::zeros({Out});
    for (int o = 0; o < Out; ++o) {
        T acc = b.data[o];
        const T* wr = w.data.data() + static_cast<size_t>(o) * In;
        for (int i = 0; i < In; ++i) acc += wr[i] * x.data[i];
        out.data[o] = acc;
    }

    const bool track = tp.requires_grad(xa) || tp.requires_grad(wa) || tp.requires_grad(ba);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, xa, wa, ba, id, In, Out] {
            const Tensor<T>& g = tp.grad(id);
            const Tensor<T>& x = tp.val(xa);
            const Tensor<T>& w = tp.val(wa);
            Tensor<T>& gx = tp.grad(xa);
            Tensor<T>& gw = tp.grad(wa);
            Tensor<T>& gb = tp.grad(ba);
            for (int o = 0; o < Out; ++o) {
                const T go = g.data[o];
                gb.data[o] += go;
                const T* wr = w.data.data() + static_cast<size_t>(o) * In;
                T* gwr = gw.data.data() + static_cast<size_t>(o) * In;
                for (int i = 0; i < In; ++i) {
                    gwr[i] += go * x.data[i];
                    gx.data[i] += go * wr[i];
                }
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Softmax over channel pairs: input (2C) holds logits (l1_c at index c,
/// l2_c at index C+c); output the matching normalized weights, so
/// out[c] + out[C+c] = 1.
template <typename T>
tapeops::Id<T> pair_softmax(Tape<T>& tp, tapeops::Id<T> a) {
    const Tensor<T>& x = tp.val(a);
    require(x.ndim() == 1 && x.dim(0) % 2 == 0, Errc::dimension_mismatch,
            "pair_softmax: expected a (2C) vector");
    const int C = x.dim(0) / 2;
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (int c = 0; c < C; ++c) {
        const T m = std::max(x.data[c], x.data[C + c]);
        const T e1 = std::exp(x.data[c] - m);
        const T e2 = std::exp(x.data[C + c] - m);
        out.data[c] = e1 / (e1 + e2);
        out.data[C + c] = e2 / (e1 + e2);
    }

    const bool track = tp.requires_grad(a);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, a, id, C] {
            const Tensor<T>& g = tp.grad(id);
            const Tensor<T>& w = tp.val(id);
            Tensor<T>& ga = tp.grad(a);
            for (int c = 0; c < C; ++c) {
                const T ww = w.data[c] * w.data[C + c];
                ga.data[c] += ww * (g.data[c] - g.data[C + c]);
                ga.data[C + c] += ww * (g.data[C + c] - g.data[c]);
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Per-channel scaling of a feature map by a (C) vector.
template <typename T>
tapeops::Id<T> scale_channels(Tape<T>& tp, tapeops::Id<T> xa, tapeops::Id<T> sa) {
    const Tensor<T>& x = tp.val(xa);
    const Tensor<T>& s = tp.val(sa);
    require(x.ndim() == 3 && s.ndim() == 1 && s.dim(0) == x.chans(), Errc::dimension_mismatch,
            "scale_channels: shape mismatch");
    const int C = x.chans();
    const size_t n = static_cast<size_t>(x.height()) * x.width();
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (int c = 0; c < C; ++c)
        for (size_t i = 0; i < n; ++i) out.data[c * n + i] = s.data[c] * x.data[c * n + i];

    const bool track = tp.requires_grad(xa) || tp.requires_grad(sa);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, xa, sa, id, C, n] {
            const Tensor<T>& g = tp.grad(id);
            const Tensor<T>& x = tp.val(xa);
            const Tensor<T>& s = tp.val(sa);
            Tensor<T>& gx = tp.grad(xa);
            Tensor<T>& gs = tp.grad(sa);
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    gx.data[c * n + i] += s.data[c] * g.data[c * n + i];
                    acc += static_cast<double>(g.data[c * n + i]) * x.data[c * n + i];
                }
                gs.data[c] += static_cast<T>(acc);
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Mean (or sum) of squared differences, as a scalar node.
template <typename T>
tapeops::Id<T> sq_diff_mean(Tape<T>& tp, tapeops::Id<T> aa, tapeops::Id<T> ba, bool sum_form = false) {
    const Tensor<T>& a = tp.val(aa);
    const Tensor<T>& b = tp.val(ba);
    require(a.same_shape(b), Errc::dimension_mismatch, "sq_diff_mean: shape mismatch");
    const size_t n = a.data.size();
    const T norm = sum_form ? T(1) : static_cast<T>(1.0 / static_cast<double>(n));
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    Tensor<T> out({1}, {static_cast<T>(acc) * norm});

    const bool track = tp.requires_grad(aa) || tp.requires_grad(ba);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, aa, ba, id, n, norm] {
            const T g0 = tp.grad(id).data[0];
            const Tensor<T>& a = tp.val(aa);
            const Tensor<T>& b = tp.val(ba);
            Tensor<T>& ga = tp.grad(aa);
            Tensor<T>& gb = tp.grad(ba);
            for (size_t i = 0; i < n; ++i) {
                const T d = T(2) * (a.data[i] - b.data[i]) * norm * g0;
                ga.data[i] += d;
                gb.data[i] -= d;
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Mean absolute difference against a fixed target; subgradient 0 at ties.
template <typename T>
tapeops::Id<T> l1_mean(Tape<T>& tp, tapeops::Id<T> pa, const Tensor<T>& target) {
    const Tensor<T>& p = tp.val(pa);
    require(p.same_shape(target), Errc::dimension_mismatch, "l1_mean: shape mismatch");
    const size_t n = p.data.size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(p.data[i]) - target.data[i]);
    Tensor<T> out({1}, {static_cast<T>(acc / static_cast<double>(n))});

    const bool track = tp.requires_grad(pa);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, pa, id, target, n] {
            const T g0 = tp.grad(id).data[0];
            const Tensor<T>& p = tp.val(pa);
            Tensor<T>& gp = tp.grad(pa);
            const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));
            for (size_t i = 0; i < n; ++i) {
                const T d = p.data[i] - target.data[i];
                const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                gp.data[i] += s * inv_n * g0;
            }
        };
    return tp.push(std::move(out), track, std::move(bw));
}

/// Fixed-weight inner product, as a scalar node.
template <typename T>
tapeops::Id<T> weighted_sum(Tape<T>& tp, tapeops::Id<T> xa, const Tensor<T>& weights) {
    const Tensor<T>& x = tp.val(xa);
    require(x.same_shape(weights), Errc::dimension_mismatch, "weighted_sum: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) acc += static_cast<double>(weights.data[i]) * x.data[i];
    Tensor<T> out({1}, {static_cast<T>(acc)});

    const bool track = tp.requires_grad(xa);
    const auto id = static_cast<tapeops::Id<T>>(tp.node_count());
    std::function<void()> bw;
    if (track)
        bw = [&tp, xa, id, weights] {
            const T g0 = tp.grad(id).data[0];
            Tensor<T>& gx = tp.grad(xa);
            for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += weights.data[i] * g0;
        };
    return tp.push(std::move(out), track, std::move(bw));
}

}  // namespace crossdehaze
