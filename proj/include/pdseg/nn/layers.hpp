#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "pdseg/nn/tensor.hpp"

namespace pdseg::nn {

// Stateless building blocks. Parameters are passed in, intermediate values
// needed for backprop go into caller-owned cache structs, so a forward pass
// without a cache is a pure const operation.

template <class S>
S sigmoid(S v) {
    return S(1) / (S(1) + std::exp(-v));
}

template <class S>
S silu(S v) {
    return v * sigmoid(v);
}

template <class S>
S silu_grad(S v) {
    const S s = sigmoid(v);
    return s * (S(1) + v * (S(1) - s));
}

// The vectorized SiLU runs on an aligned scratch block. Eigen evaluates the
// unaligned head of a mapped buffer with scalar exp and the rest with packet
// exp, which round differently, so working in place would make results
// depend on where the allocator put the buffer.
inline constexpr std::size_t kSiluBlock = 1024;

/// Elementwise SiLU over a buffer.
template <class S>
void silu_inplace(std::vector<S>& v) {
    using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
    Arr buf(static_cast<Eigen::Index>(std::min(v.size(), kSiluBlock)));
    for (std::size_t off = 0; off < v.size(); off += kSiluBlock) {
        const auto m = static_cast<Eigen::Index>(std::min(kSiluBlock, v.size() - off));
        auto a = buf.head(m);
        a = Eigen::Map<const Arr>(v.data() + off, m);
        a = a / (S(1) + (-a).exp());
        Eigen::Map<Arr>(v.data() + off, m) = a;
    }
}

/// dy *= silu'(pre), elementwise.
template <class S>
void silu_backward_inplace(std::vector<S>& dy, const std::vector<S>& pre) {
    using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
    Arr x(static_cast<Eigen::Index>(std::min(dy.size(), kSiluBlock)));
    Arr sig(x.size());
    for (std::size_t off = 0; off < dy.size(); off += kSiluBlock) {
        const auto m = static_cast<Eigen::Index>(std::min(kSiluBlock, dy.size() - off));
        auto xa = x.head(m);
        auto sa = sig.head(m);
        xa = Eigen::Map<const Arr>(pre.data() + off, m);
        sa = S(1) / (S(1) + (-xa).exp());
        Eigen::Map<Arr>(dy.data() + off, m) *= sa * (S(1) + xa * (S(1) - sa));
    }
}

/// Square convolution with "same" zero padding, stride 1; kernel is 1 or 3.
/// Weights are laid out (out, ky, kx, in).
template <class S>
struct Conv2d {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    std::size_t weight = 0;  ///< index into the parameter list
    std::size_t bias = 0;

    int patch() const { return in_channels * kernel * kernel; }

    // Short per-pixel channel runs go through Eigen maps rather than
    // std::copy_n, which lowers to a memmove call per pixel.
    using Vec = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using ConstVec = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

    struct Cache {
        Tensor<S> x;  ///< layer input, re-expanded chunkwise in backward
    };

    /// Pixel rows expanded per GEMM; keeps the im2col block cache-resident.
    static constexpr std::size_t kChunkRows = 1024;

    /// im2col of samples [first, first + count): one row per pixel, columns
    /// ordered (ky, kx, in).
    void im2col(const Tensor<S>& x, int first, int count, RowMatrix<S>& col) const {
        const int pad = kernel / 2;
        const int cin = in_channels;
        col.resize(static_cast<Eigen::Index>(count) * x.h * x.w, patch());
        S* dst = col.data();
        const int run = kernel * cin;  // one kernel row of a patch
        for (int ni = first; ni < first + count; ++ni) {
            for (int y = 0; y < x.h; ++y) {
                for (int xx = 0; xx < x.w; ++xx) {
                    const bool inner = xx - pad >= 0 && xx - pad + kernel <= x.w;
                    for (int ky = 0; ky < kernel; ++ky, dst += run) {
                        const int sy = y + ky - pad;
                        if (sy < 0 || sy >= x.h) {
                            Vec(dst, run).setZero();
                        } else if (inner) {
                            Vec(dst, run) = ConstVec(x.pixel(ni, sy, xx - pad), run);
                        } else {
                            for (int kx = 0; kx < kernel; ++kx) {
                                const int sx = xx + kx - pad;
                                Vec d(dst + kx * cin, cin);
                                if (sx < 0 || sx >= x.w) {
                                    d.setZero();
                                } else {
                                    d = ConstVec(x.pixel(ni, sy, sx), cin);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    void col2im(const RowMatrix<S>& dcol, int first, int count, Tensor<S>& dx) const {
        const int pad = kernel / 2;
        const int cin = in_channels;
        const S* src = dcol.data();
        for (int ni = first; ni < first + count; ++ni) {
            for (int y = 0; y < dx.h; ++y) {
                for (int xx = 0; xx < dx.w; ++xx) {
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int sy = y + ky - pad;
                        for (int kx = 0; kx < kernel; ++kx, src += cin) {
                            const int sx = xx + kx - pad;
                            if (sy < 0 || sy >= dx.h || sx < 0 || sx >= dx.w) continue;
                            Vec(dx.pixel(ni, sy, sx), cin) += ConstVec(src, cin);
                        }
                    }
                }
            }
        }
    }

    Tensor<S> forward(const std::vector<Param<S>>& params, const Tensor<S>& x, Cache* cache) const {
        Tensor<S> y(x.n, x.h, x.w, out_channels);
        ConstMatrixMap<S> W(params[weight].value.data(), out_channels, patch());
        Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> b(params[bias].value.data(), out_channels);
        const auto per_sample = static_cast<Eigen::Index>(x.h) * x.w;
        if (kernel == 1) {
            const auto rows = static_cast<Eigen::Index>(x.pixels());
            MatrixMap<S> Y(y.data.data(), rows, out_channels);
            Y.noalias() = ConstMatrixMap<S>(x.data.data(), rows, in_channels) * W.transpose();
            Y.rowwise() += b;
        } else {
            const int step = std::max<int>(1, static_cast<int>(kChunkRows / per_sample));
            RowMatrix<S> col;
            for (int first = 0; first < x.n; first += step) {
                const int count = std::min(step, x.n - first);
                im2col(x, first, count, col);
                MatrixMap<S> Y(y.pixel(first, 0, 0), count * per_sample, out_channels);
                Y.noalias() = col * W.transpose();
                Y.rowwise() += b;
            }
        }
        if (cache) cache->x = x;
        return y;
    }

    Tensor<S> backward(const std::vector<Param<S>>& params, const Cache& cache, const Tensor<S>& dy,
                       Grads<S>& grads) const {
        const Tensor<S>& x = cache.x;
        MatrixMap<S> dW(grads[weight].data(), out_channels, patch());
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> db(grads[bias].data(), out_channels);
        ConstMatrixMap<S> W(params[weight].value.data(), out_channels, patch());
        Tensor<S> dx(x.n, x.h, x.w, in_channels);
        const auto per_sample = static_cast<Eigen::Index>(x.h) * x.w;
        if (kernel == 1) {
            const auto rows = static_cast<Eigen::Index>(x.pixels());
            ConstMatrixMap<S> dY(dy.data.data(), rows, out_channels);
            dW.noalias() += dY.transpose() * ConstMatrixMap<S>(x.data.data(), rows, in_channels);
            db += dY.colwise().sum();
            MatrixMap<S>(dx.data.data(), rows, in_channels).noalias() = dY * W;
            return dx;
        }
        const int step = std::max<int>(1, static_cast<int>(kChunkRows / per_sample));
        RowMatrix<S> col, dcol;
        for (int first = 0; first < x.n; first += step) {
            const int count = std::min(step, x.n - first);
            ConstMatrixMap<S> dY(dy.pixel(first, 0, 0), count * per_sample, out_channels);
            im2col(x, first, count, col);
            dW.noalias() += dY.transpose() * col;
            db += dY.colwise().sum();
            dcol.noalias() = dY * W;
            col2im(dcol, first, count, dx);
        }
        return dx;
    }
};

/// Dense layer on row vectors: y (N x out) = x (N x in) * W^T + b.
template <class S>
struct Linear {
    int in_features = 0;
    int out_features = 0;
    std::size_t weight = 0;
    std::size_t bias = 0;

    RowMatrix<S> forward(const std::vector<Param<S>>& params, const RowMatrix<S>& x) const {
        ConstMatrixMap<S> W(params[weight].value.data(), out_features, in_features);
        Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> b(params[bias].value.data(), out_features);
        RowMatrix<S> y = x * W.transpose();
        y.rowwise() += b;
        return y;
    }

    RowMatrix<S> backward(const std::vector<Param<S>>& params, const RowMatrix<S>& x,
                          const RowMatrix<S>& dy, Grads<S>& grads) const {
        MatrixMap<S> dW(grads[weight].data(), out_features, in_features);
        dW.noalias() += dy.transpose() * x;
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> db(grads[bias].data(), out_features);
        db += dy.colwise().sum();
        ConstMatrixMap<S> W(params[weight].value.data(), out_features, in_features);
        return dy * W;
    }
};

template <class S>
Tensor<S> avg_pool2(const Tensor<S>& x) {
    Tensor<S> y(x.n, x.h / 2, x.w / 2, x.c);
    for (int n = 0; n < x.n; ++n)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx) {
                S* d = y.pixel(n, yy, xx);
                const S* a = x.pixel(n, 2 * yy, 2 * xx);
                const S* b = x.pixel(n, 2 * yy, 2 * xx + 1);
                const S* c = x.pixel(n, 2 * yy + 1, 2 * xx);
                const S* e = x.pixel(n, 2 * yy + 1, 2 * xx + 1);
                for (int ch = 0; ch < x.c; ++ch) d[ch] = S(0.25) * (a[ch] + b[ch] + c[ch] + e[ch]);
            }
    return y;
}

template <class S>
Tensor<S> avg_pool2_backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.n, dy.h * 2, dy.w * 2, dy.c);
    for (int n = 0; n < dx.n; ++n)
        for (int yy = 0; yy < dx.h; ++yy)
            for (int xx = 0; xx < dx.w; ++xx) {
                S* d = dx.pixel(n, yy, xx);
                const S* s = dy.pixel(n, yy / 2, xx / 2);
                for (int ch = 0; ch < dx.c; ++ch) d[ch] = S(0.25) * s[ch];
            }
    return dx;
}

template <class S>
Tensor<S> upsample2(const Tensor<S>& x) {
    Tensor<S> y(x.n, x.h * 2, x.w * 2, x.c);
    for (int n = 0; n < y.n; ++n)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx) std::copy_n(x.pixel(n, yy / 2, xx / 2), x.c, y.pixel(n, yy, xx));
    return y;
}

template <class S>
Tensor<S> upsample2_backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.n, dy.h / 2, dy.w / 2, dy.c);
    for (int n = 0; n < dy.n; ++n)
        for (int yy = 0; yy < dy.h; ++yy)
            for (int xx = 0; xx < dy.w; ++xx) {
                S* d = dx.pixel(n, yy / 2, xx / 2);
                const S* s = dy.pixel(n, yy, xx);
                for (int ch = 0; ch < dy.c; ++ch) d[ch] += s[ch];
            }
    return dx;
}

/// Channel concatenation [a, b] per pixel.
template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    Tensor<S> y(a.n, a.h, a.w, a.c + b.c);
    S* d = y.data.data();
    const S* pa = a.data.data();
    const S* pb = b.data.data();
    for (std::size_t p = 0; p < a.pixels(); ++p) {
        d = std::copy_n(pa, a.c, d);
        d = std::copy_n(pb, b.c, d);
        pa += a.c;
        pb += b.c;
    }
    return y;
}

template <class S>
void split_channels(const Tensor<S>& dy, int first_channels, Tensor<S>& da, Tensor<S>& db) {
    da = Tensor<S>(dy.n, dy.h, dy.w, first_channels);
    db = Tensor<S>(dy.n, dy.h, dy.w, dy.c - first_channels);
    const S* s = dy.data.data();
    S* pa = da.data.data();
    S* pb = db.data.data();
    for (std::size_t p = 0; p < dy.pixels(); ++p) {
        pa = std::copy_n(s, da.c, pa);
        pb = std::copy_n(s + da.c, db.c, pb);
        s += dy.c;
    }
}

/// Sinusoidal step embedding, one row per batch entry.
template <class S>
RowMatrix<S> step_embedding(const std::vector<int>& steps, int dim) {
    RowMatrix<S> e = RowMatrix<S>::Zero(static_cast<Eigen::Index>(steps.size()), dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        for (std::size_t n = 0; n < steps.size(); ++n) {
            const double a = steps[n] * freq;
            e(static_cast<Eigen::Index>(n), i) = static_cast<S>(std::sin(a));
            e(static_cast<Eigen::Index>(n), half + i) = static_cast<S>(std::cos(a));
        }
    }
    return e;
}

}  // namespace pdseg::nn
