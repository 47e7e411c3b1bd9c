#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "opn/rng.hpp"
#include "opn/tensor.hpp"

// Explicit forward/backward kernels for the fixed layer taxonomy. No autodiff
// tape; every summation runs in a fixed order so same-seed runs are
// bit-identical on one platform.

namespace opn {

template <class T>
inline void check_finite(const TensorT<T>& t, const char* where) {
    if (!t.all_finite()) throw NumericError(std::string(where) + ": non-finite values");
}

// ---------------------------------------------------------------------------
// Raw matrix kernels. c must be preinitialized (they accumulate).

template <class T>
inline void mm_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    // c[m,n] += a[m,k] * b[k,n]
    for (int i = 0; i < m; ++i) {
        T* ci = c + size_t(i) * n;
        const T* ai = a + size_t(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            T aik = ai[kk];
            const T* bk = b + size_t(kk) * n;
            for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

template <class T>
inline void mm_at_b_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    // c[m,n] += a^T * b where a is [k,m], b is [k,n]
    for (int kk = 0; kk < k; ++kk) {
        const T* ak = a + size_t(kk) * m;
        const T* bk = b + size_t(kk) * n;
        for (int i = 0; i < m; ++i) {
            T aik = ak[i];
            T* ci = c + size_t(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

template <class T>
inline void mm_a_bt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    // c[m,n] += a * b^T where a is [m,k], b is [n,k]
    for (int i = 0; i < m; ++i) {
        const T* ai = a + size_t(i) * k;
        T* ci = c + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* bj = b + size_t(j) * k;
            T acc = 0;
            for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            ci[j] += acc;
        }
    }
}

template <class T>
inline TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
    TensorT<T> c({a.dim(0), b.dim(1)});
    mm_acc(a.ptr(), b.ptr(), c.ptr(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation) via im2col.

struct ConvDims {
    int n, c, h, w;      // input
    int f, kh, kw;       // filters
    int stride, pad;
    int ho, wo;
};

inline ConvDims conv_dims(const std::vector<int>& xs, const std::vector<int>& ws, int stride,
                          int pad) {
    if (xs.size() != 4) throw ShapeError("conv2d: input must be NCHW");
    if (ws.size() != 4) throw ShapeError("conv2d: weights must be FCKK");
    if (xs[1] != ws[1]) throw ShapeError("conv2d: channel mismatch");
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/pad");
    ConvDims d;
    d.n = xs[0]; d.c = xs[1]; d.h = xs[2]; d.w = xs[3];
    d.f = ws[0]; d.kh = ws[2]; d.kw = ws[3];
    d.stride = stride; d.pad = pad;
    // Floor output extents (trailing rows that cannot fill a stride step are
    // dropped, the usual framework convention).
    int eh = d.h + 2 * pad - d.kh;
    int ew = d.w + 2 * pad - d.kw;
    if (eh < 0 || ew < 0)
        throw ShapeError("conv2d: kernel exceeds padded input " + std::to_string(d.h) + "x" +
                         std::to_string(d.w));
    d.ho = eh / stride + 1;
    d.wo = ew / stride + 1;
    return d;
}

template <class T>
inline ConvDims conv_dims(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad) {
    return conv_dims(x.shape, w.shape, stride, pad);
}

template <class T>
inline void im2col(const T* x, const ConvDims& d, T* cols) {
    // cols is [C*kh*kw, ho*wo] for one sample
    const int hw = d.ho * d.wo;
    for (int cc = 0; cc < d.c; ++cc) {
        const T* xc = x + size_t(cc) * d.h * d.w;
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                T* row = cols + size_t((cc * d.kh + ki) * d.kw + kj) * hw;
                for (int oy = 0; oy < d.ho; ++oy) {
                    int iy = oy * d.stride - d.pad + ki;
                    if (iy < 0 || iy >= d.h) {
                        std::fill(row + size_t(oy) * d.wo, row + size_t(oy + 1) * d.wo, T(0));
                        continue;
                    }
                    const T* xr = xc + size_t(iy) * d.w;
                    T* rr = row + size_t(oy) * d.wo;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        int ix = ox * d.stride - d.pad + kj;
                        rr[ox] = (ix >= 0 && ix < d.w) ? xr[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
inline void col2im_acc(const T* cols, const ConvDims& d, T* x) {
    const int hw = d.ho * d.wo;
    for (int cc = 0; cc < d.c; ++cc) {
        T* xc = x + size_t(cc) * d.h * d.w;
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                const T* row = cols + size_t((cc * d.kh + ki) * d.kw + kj) * hw;
                for (int oy = 0; oy < d.ho; ++oy) {
                    int iy = oy * d.stride - d.pad + ki;
                    if (iy < 0 || iy >= d.h) continue;
                    T* xr = xc + size_t(iy) * d.w;
                    const T* rr = row + size_t(oy) * d.wo;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        int ix = ox * d.stride - d.pad + kj;
                        if (ix >= 0 && ix < d.w) xr[ix] += rr[ox];
                    }
                }
            }
        }
    }
}

// Forward; optionally keeps the im2col buffers for the backward pass.
template <class T>
inline TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                                 int stride, int pad, TensorT<T>* cols_cache = nullptr) {
    ConvDims d = conv_dims(x, w, stride, pad);
    if (b.ndim() != 1 || b.dim(0) != d.f)
        throw ShapeError("conv2d: bias must be [F], got " + b.shape_str());
    const int ckk = d.c * d.kh * d.kw;
    const int hw = d.ho * d.wo;
    TensorT<T> y({d.n, d.f, d.ho, d.wo});
    TensorT<T> local_cols;
    TensorT<T>& cols = cols_cache ? *cols_cache : local_cols;
    cols = TensorT<T>({d.n, ckk, hw});
    for (int n = 0; n < d.n; ++n) {
        T* cn = cols.ptr() + size_t(n) * ckk * hw;
        im2col(x.ptr() + size_t(n) * d.c * d.h * d.w, d, cn);
        T* yn = y.ptr() + size_t(n) * d.f * hw;
        for (int f = 0; f < d.f; ++f)
            std::fill(yn + size_t(f) * hw, yn + size_t(f + 1) * hw, b[size_t(f)]);
        mm_acc(w.ptr(), cn, yn, d.f, ckk, hw);
    }
    return y;
}

template <class T>
struct ConvGrads {
    TensorT<T> dx, dw, db;
};

// cols: the buffers cached by conv2d_forward for the same x.
template <class T>
inline ConvGrads<T> conv2d_backward(const std::vector<int>& x_shape, const TensorT<T>& w,
                                    const TensorT<T>& dy, int stride, int pad,
                                    const TensorT<T>& cols, bool need_dx = true) {
    ConvDims d = conv_dims(x_shape, w.shape, stride, pad);
    if (dy.shape != std::vector<int>({d.n, d.f, d.ho, d.wo}))
        throw ShapeError("conv2d_backward: dy shape " + dy.shape_str());
    if (cols.shape != std::vector<int>({d.n, d.c * d.kh * d.kw, d.ho * d.wo}))
        throw ShapeError("conv2d_backward: missing or stale forward cache");
    const int ckk = d.c * d.kh * d.kw;
    const int hw = d.ho * d.wo;
    ConvGrads<T> g;
    g.dw = TensorT<T>(w.shape);
    g.db = TensorT<T>({d.f});
    if (need_dx) g.dx = TensorT<T>(x_shape);
    std::vector<T> dcols(size_t(ckk) * hw);
    for (int n = 0; n < d.n; ++n) {
        const T* dyn = dy.ptr() + size_t(n) * d.f * hw;
        const T* cn = cols.ptr() + size_t(n) * ckk * hw;
        for (int f = 0; f < d.f; ++f) {
            T acc = 0;
            const T* dyf = dyn + size_t(f) * hw;
            for (int i = 0; i < hw; ++i) acc += dyf[i];
            g.db[size_t(f)] += acc;
        }
        mm_a_bt_acc(dyn, cn, g.dw.ptr(), d.f, hw, ckk);
        if (need_dx) {
            std::fill(dcols.begin(), dcols.end(), T(0));
            mm_at_b_acc(w.ptr(), dyn, dcols.data(), ckk, d.f, hw);
            col2im_acc(dcols.data(), d, g.dx.ptr() + size_t(n) * d.c * d.h * d.w);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Max pooling. Ties route the gradient to the lowest flat index.

template <class T>
struct PoolOut {
    TensorT<T> y;
    std::vector<int> argmax;  // flat index within each input H*W plane
};

template <class T>
inline PoolOut<T> maxpool_forward(const TensorT<T>& x, int k, int s) {
    if (x.ndim() != 4) throw ShapeError("maxpool: input must be NCHW");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < k || w < k) throw ShapeError("maxpool: window larger than input");
    const int ho = (h - k) / s + 1, wo = (w - k) / s + 1;
    PoolOut<T> out;
    out.y = TensorT<T>({n, c, ho, wo});
    out.argmax.assign(size_t(n) * c * ho * wo, 0);
    size_t oi = 0;
    for (int nn = 0; nn < n; ++nn) {
        for (int cc = 0; cc < c; ++cc) {
            const T* xp = x.ptr() + (size_t(nn) * c + cc) * h * w;
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox, ++oi) {
                    int y0 = oy * s, x0 = ox * s;
                    T best = xp[size_t(y0) * w + x0];
                    int bi = y0 * w + x0;
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            int idx = (y0 + ky) * w + (x0 + kx);
                            if (xp[size_t(idx)] > best) {  // strict: first max wins
                                best = xp[size_t(idx)];
                                bi = idx;
                            }
                        }
                    }
                    out.y[oi] = best;
                    out.argmax[oi] = bi;
                }
            }
        }
    }
    return out;
}

template <class T>
inline TensorT<T> maxpool_backward(const TensorT<T>& dy, const std::vector<int>& argmax,
                                   const std::vector<int>& x_shape) {
    TensorT<T> dx(x_shape);
    const int c = x_shape[1], h = x_shape[2], w = x_shape[3];
    const int planes = dy.dim(0) * dy.dim(1);
    const int hw_out = dy.dim(2) * dy.dim(3);
    for (int p = 0; p < planes; ++p) {
        T* dxp = dx.ptr() + size_t(p) * h * w;
        const T* dyp = dy.ptr() + size_t(p) * hw_out;
        const int* am = argmax.data() + size_t(p) * hw_out;
        for (int i = 0; i < hw_out; ++i) dxp[am[i]] += dyp[i];
    }
    (void)c;
    return dx;
}

// ---------------------------------------------------------------------------
// ReLU.

template <class T>
inline TensorT<T> relu_forward(const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

template <class T>
inline TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    check_same_shape(x, dy, "relu_backward");
    TensorT<T> dx(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
    return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization. Works on [N,D] (per feature) and [N,C,H,W]
// (per channel over N*H*W). eps 1e-5, running-stat momentum 0.9.

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

template <class T>
struct BnCache {
    TensorT<T> x;
    std::vector<T> mean, invstd;  // per channel; batch stats in train, running in eval
    bool train = true;
    long long m = 0;  // reduce count per channel
};

namespace detail {

template <class T>
struct BnView {
    int n, c, sp;  // sp = spatial elements per (sample, channel)
};

template <class T>
inline BnView<T> bn_view(const TensorT<T>& x) {
    if (x.ndim() == 2) return {x.dim(0), x.dim(1), 1};
    if (x.ndim() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
    throw ShapeError("batchnorm: input must be [N,D] or [N,C,H,W], got " + x.shape_str());
}

}  // namespace detail

template <class T>
inline TensorT<T> batchnorm_forward(const TensorT<T>& x, const TensorT<T>& gamma,
                                    const TensorT<T>& beta, TensorT<T>& running_mean,
                                    TensorT<T>& running_var, bool train, BnCache<T>* cache,
                                    bool update_running = true) {
    auto v = detail::bn_view(x);
    if (gamma.numel() != v.c || beta.numel() != v.c || running_mean.numel() != v.c ||
        running_var.numel() != v.c)
        throw ShapeError("batchnorm: parameter size mismatch");
    if (train && v.n < 2) throw ShapeError("batchnorm: train mode requires batch size >= 2");
    const long long m = (long long)v.n * v.sp;
    std::vector<T> mean(size_t(v.c)), var(size_t(v.c)), invstd(size_t(v.c));
    if (train) {
        for (int c = 0; c < v.c; ++c) {
            T acc = 0;
            for (int n = 0; n < v.n; ++n) {
                const T* p = x.ptr() + (size_t(n) * v.c + c) * v.sp;
                for (int i = 0; i < v.sp; ++i) acc += p[i];
            }
            mean[size_t(c)] = acc / T(m);
            T acc2 = 0;
            for (int n = 0; n < v.n; ++n) {
                const T* p = x.ptr() + (size_t(n) * v.c + c) * v.sp;
                for (int i = 0; i < v.sp; ++i) {
                    T d = p[i] - mean[size_t(c)];
                    acc2 += d * d;
                }
            }
            var[size_t(c)] = acc2 / T(m);
        }
        if (update_running) {
            for (int c = 0; c < v.c; ++c) {
                running_mean[size_t(c)] =
                    T(kBnMomentum) * running_mean[size_t(c)] + T(1 - kBnMomentum) * mean[size_t(c)];
                running_var[size_t(c)] =
                    T(kBnMomentum) * running_var[size_t(c)] + T(1 - kBnMomentum) * var[size_t(c)];
            }
        }
    } else {
        for (int c = 0; c < v.c; ++c) {
            mean[size_t(c)] = running_mean[size_t(c)];
            var[size_t(c)] = running_var[size_t(c)];
        }
    }
    for (int c = 0; c < v.c; ++c) invstd[size_t(c)] = T(1) / std::sqrt(var[size_t(c)] + T(kBnEps));

    TensorT<T> y(x.shape);
    for (int n = 0; n < v.n; ++n) {
        for (int c = 0; c < v.c; ++c) {
            const T* p = x.ptr() + (size_t(n) * v.c + c) * v.sp;
            T* q = y.ptr() + (size_t(n) * v.c + c) * v.sp;
            T g = gamma[size_t(c)], bb = beta[size_t(c)];
            T mu = mean[size_t(c)], is = invstd[size_t(c)];
            for (int i = 0; i < v.sp; ++i) q[i] = g * (p[i] - mu) * is + bb;
        }
    }
    if (cache) {
        cache->x = x;
        cache->mean = std::move(mean);
        cache->invstd = std::move(invstd);
        cache->train = train;
        cache->m = m;
    }
    return y;
}

template <class T>
inline TensorT<T> batchnorm_forward(const TensorT<T>& x, const TensorT<T>& gamma,
                                    const TensorT<T>& beta, TensorT<T>& running_mean,
                                    TensorT<T>& running_var, bool train, std::nullptr_t,
                                    bool update_running = true) {
    return batchnorm_forward(x, gamma, beta, running_mean, running_var, train,
                             static_cast<BnCache<T>*>(nullptr), update_running);
}

template <class T>
struct BnGrads {
    TensorT<T> dx, dgamma, dbeta;
};

template <class T>
inline BnGrads<T> batchnorm_backward(const BnCache<T>& cache, const TensorT<T>& gamma,
                                     const TensorT<T>& dy) {
    if (cache.m == 0) throw ShapeError("batchnorm_backward: no cached forward");
    const TensorT<T>& x = cache.x;
    check_same_shape(x, dy, "batchnorm_backward");
    auto v = detail::bn_view(x);
    BnGrads<T> g;
    g.dx = TensorT<T>(x.shape);
    g.dgamma = TensorT<T>({v.c});
    g.dbeta = TensorT<T>({v.c});
    const T m = T(cache.m);
    for (int c = 0; c < v.c; ++c) {
        T mu = cache.mean[size_t(c)], is = cache.invstd[size_t(c)];
        T sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < v.n; ++n) {
            const T* xp = x.ptr() + (size_t(n) * v.c + c) * v.sp;
            const T* dp = dy.ptr() + (size_t(n) * v.c + c) * v.sp;
            for (int i = 0; i < v.sp; ++i) {
                sum_dy += dp[i];
                sum_dy_xhat += dp[i] * (xp[i] - mu) * is;
            }
        }
        g.dbeta[size_t(c)] = sum_dy;
        g.dgamma[size_t(c)] = sum_dy_xhat;
        T gc = gamma[size_t(c)];
        if (cache.train) {
            for (int n = 0; n < v.n; ++n) {
                const T* xp = x.ptr() + (size_t(n) * v.c + c) * v.sp;
                const T* dp = dy.ptr() + (size_t(n) * v.c + c) * v.sp;
                T* op = g.dx.ptr() + (size_t(n) * v.c + c) * v.sp;
                for (int i = 0; i < v.sp; ++i) {
                    T xhat = (xp[i] - mu) * is;
                    op[i] = gc * is / m * (m * dp[i] - sum_dy - xhat * sum_dy_xhat);
                }
            }
        } else {
            for (int n = 0; n < v.n; ++n) {
                const T* dp = dy.ptr() + (size_t(n) * v.c + c) * v.sp;
                T* op = g.dx.ptr() + (size_t(n) * v.c + c) * v.sp;
                for (int i = 0; i < v.sp; ++i) op[i] = gc * is * dp[i];
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Fully connected: y = x * W^T + b with W stored [out, in].

template <class T>
inline TensorT<T> linear_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
        throw ShapeError("linear: shapes " + x.shape_str() + " vs W " + w.shape_str());
    if (b.numel() != w.dim(0)) throw ShapeError("linear: bias size mismatch");
    const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
    TensorT<T> y({n, out});
    for (int i = 0; i < n; ++i)
        std::memcpy(y.ptr() + size_t(i) * out, b.ptr(), sizeof(T) * size_t(out));
    mm_a_bt_acc(x.ptr(), w.ptr(), y.ptr(), n, in, out);
    return y;
}

template <class T>
struct LinearGrads {
    TensorT<T> dx, dw, db;
};

template <class T>
inline LinearGrads<T> linear_backward(const TensorT<T>& x, const TensorT<T>& w,
                                      const TensorT<T>& dy, bool need_dx = true) {
    const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
    if (dy.ndim() != 2 || dy.dim(0) != n || dy.dim(1) != out)
        throw ShapeError("linear_backward: dy shape " + dy.shape_str());
    LinearGrads<T> g;
    g.dw = TensorT<T>(w.shape);
    g.db = TensorT<T>({out});
    mm_at_b_acc(dy.ptr(), x.ptr(), g.dw.ptr(), out, n, in);
    for (int i = 0; i < n; ++i) {
        const T* r = dy.ptr() + size_t(i) * out;
        for (int o = 0; o < out; ++o) g.db[size_t(o)] += r[o];
    }
    if (need_dx) {
        g.dx = TensorT<T>({n, in});
        mm_acc(dy.ptr(), w.ptr(), g.dx.ptr(), n, out, in);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout. The mask holds 0 or 1/(1-rate) so eval needs no scaling.

template <class T>
inline TensorT<T> dropout_mask(const std::vector<int>& shape, T rate, Rng& rng) {
    TensorT<T> mask(shape);
    const T keep_scale = T(1) / (T(1) - rate);
    for (size_t i = 0; i < mask.data.size(); ++i)
        mask[i] = (T(rng.unitf()) < rate) ? T(0) : keep_scale;
    return mask;
}

template <class T>
inline TensorT<T> dropout_apply(const TensorT<T>& x, const TensorT<T>& mask) {
    check_same_shape(x, mask, "dropout");
    TensorT<T> y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) y[i] = x[i] * mask[i];
    return y;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy: mean NLL over the batch, max-subtracted.

template <class T>
struct SoftmaxCeOut {
    T loss = 0;
    TensorT<T> dlogits;  // d(mean loss)/d logits
};

template <class T>
inline SoftmaxCeOut<T> softmax_cross_entropy(const TensorT<T>& logits,
                                             const std::vector<int>& labels) {
    if (logits.ndim() != 2) throw ShapeError("softmax_ce: logits must be [N,K]");
    const int n = logits.dim(0), k = logits.dim(1);
    if (int(labels.size()) != n) throw ShapeError("softmax_ce: label count mismatch");
    SoftmaxCeOut<T> out;
    out.dlogits = TensorT<T>({n, k});
    T total = 0;
    for (int i = 0; i < n; ++i) {
        int y = labels[size_t(i)];
        if (y < 0 || y >= k)
            throw ShapeError("softmax_ce: label " + std::to_string(y) + " out of range [0," +
                             std::to_string(k) + ")");
        const T* row = logits.ptr() + size_t(i) * k;
        T mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        T* drow = out.dlogits.ptr() + size_t(i) * k;
        for (int j = 0; j < k; ++j) {
            drow[j] = std::exp(row[j] - mx);
            sum += drow[j];
        }
        total += std::log(sum) - (row[y] - mx);
        const T inv = T(1) / (sum * T(n));
        for (int j = 0; j < k; ++j) drow[j] *= inv;
        drow[y] -= T(1) / T(n);
    }
    out.loss = total / T(n);
    return out;
}

}  // namespace opn
