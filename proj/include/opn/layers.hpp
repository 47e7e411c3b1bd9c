#pragma once

#include <string>
#include <vector>

#include "opn/kernels.hpp"
#include "opn/rng.hpp"
#include "opn/tensor.hpp"

// Parameter-and-cache bundles around the kernels. Each layer caches what its
// backward pass needs; the graph is static so there is no tape.

namespace opn {

template <class T>
struct ParamRef {
    std::string name;
    TensorT<T>* value = nullptr;
    TensorT<T>* grad = nullptr;  // null for state (batch-norm running stats)
    bool trainable = true;
};

struct ForwardCtx {
    bool train = false;
    bool update_bn_stats = true;  // EMA update of running stats in train mode
    Rng* rng = nullptr;           // dropout masks; required when train and rate > 0
};

template <class T>
struct Conv2dT {
    TensorT<T> w, b, gw, gb;
    int stride = 1, pad = 0;
    std::vector<int> x_shape;
    TensorT<T> cols;

    void init(int in_c, int out_c, int k, int stride_, int pad_, Rng& rng) {
        stride = stride_;
        pad = pad_;
        w = TensorT<T>({out_c, in_c, k, k});
        b = TensorT<T>({out_c});
        gw = TensorT<T>(w.shape);
        gb = TensorT<T>(b.shape);
        const T s = T(std::sqrt(2.0 / (double(in_c) * k * k)));
        for (T& v : w.data) v = T(rng.normal()) * s;
    }

    TensorT<T> forward(const TensorT<T>& x) {
        x_shape = x.shape;
        return conv2d_forward(x, w, b, stride, pad, &cols);
    }

    TensorT<T> backward(const TensorT<T>& dy, bool need_dx = true) {
        ConvGrads<T> g = conv2d_backward(x_shape, w, dy, stride, pad, cols, need_dx);
        for (size_t i = 0; i < gw.data.size(); ++i) gw[i] += g.dw[i];
        for (size_t i = 0; i < gb.data.size(); ++i) gb[i] += g.db[i];
        return need_dx ? std::move(g.dx) : TensorT<T>();
    }

    void collect(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + ".w", &w, &gw, true});
        out.push_back({prefix + ".b", &b, &gb, true});
    }
};

template <class T>
struct BatchNormT {
    TensorT<T> gamma, beta, dgamma, dbeta;
    TensorT<T> running_mean, running_var;
    BnCache<T> cache;

    void init(int channels) {
        gamma = TensorT<T>::full({channels}, T(1));
        beta = TensorT<T>({channels});
        dgamma = TensorT<T>({channels});
        dbeta = TensorT<T>({channels});
        running_mean = TensorT<T>({channels});
        running_var = TensorT<T>::full({channels}, T(1));
    }

    TensorT<T> forward(const TensorT<T>& x, const ForwardCtx& ctx) {
        return batchnorm_forward(x, gamma, beta, running_mean, running_var, ctx.train, &cache,
                                 ctx.update_bn_stats);
    }

    TensorT<T> backward(const TensorT<T>& dy) {
        BnGrads<T> g = batchnorm_backward(cache, gamma, dy);
        for (size_t i = 0; i < dgamma.data.size(); ++i) dgamma[i] += g.dgamma[i];
        for (size_t i = 0; i < dbeta.data.size(); ++i) dbeta[i] += g.dbeta[i];
        return std::move(g.dx);
    }

    void collect(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + ".gamma", &gamma, &dgamma, true});
        out.push_back({prefix + ".beta", &beta, &dbeta, true});
        out.push_back({prefix + ".running_mean", &running_mean, nullptr, false});
        out.push_back({prefix + ".running_var", &running_var, nullptr, false});
    }
};

template <class T>
struct ReluT {
    TensorT<T> x_cache;

    TensorT<T> forward(const TensorT<T>& x) {
        x_cache = x;
        return relu_forward(x);
    }
    TensorT<T> backward(const TensorT<T>& dy) { return relu_backward(x_cache, dy); }
};

template <class T>
struct MaxPoolT {
    int k = 2, s = 2;
    std::vector<int> x_shape;
    std::vector<int> argmax;

    TensorT<T> forward(const TensorT<T>& x) {
        x_shape = x.shape;
        PoolOut<T> out = maxpool_forward(x, k, s);
        argmax = std::move(out.argmax);
        return std::move(out.y);
    }
    TensorT<T> backward(const TensorT<T>& dy) { return maxpool_backward(dy, argmax, x_shape); }
};

template <class T>
struct LinearT {
    TensorT<T> w, b, gw, gb;
    TensorT<T> x_cache;

    void init(int in, int out, Rng& rng, double weight_std = -1.0) {
        w = TensorT<T>({out, in});
        b = TensorT<T>({out});
        gw = TensorT<T>(w.shape);
        gb = TensorT<T>(b.shape);
        const T s = T(weight_std >= 0 ? weight_std : std::sqrt(2.0 / double(in)));
        for (T& v : w.data) v = T(rng.normal()) * s;
    }

    TensorT<T> forward(const TensorT<T>& x) {
        x_cache = x;
        return linear_forward(x, w, b);
    }

    TensorT<T> backward(const TensorT<T>& dy, bool need_dx = true) {
        LinearGrads<T> g = linear_backward(x_cache, w, dy, need_dx);
        for (size_t i = 0; i < gw.data.size(); ++i) gw[i] += g.dw[i];
        for (size_t i = 0; i < gb.data.size(); ++i) gb[i] += g.db[i];
        return need_dx ? std::move(g.dx) : TensorT<T>();
    }

    void collect(std::vector<ParamRef<T>>& out, const std::string& prefix) {
        out.push_back({prefix + ".w", &w, &gw, true});
        out.push_back({prefix + ".b", &b, &gb, true});
    }
};

template <class T>
struct DropoutT {
    T rate = T(0.5);
    TensorT<T> mask;
    bool active = false;

    TensorT<T> forward(const TensorT<T>& x, const ForwardCtx& ctx) {
        active = ctx.train && rate > T(0);
        if (!active) return x;
        if (!ctx.rng) throw ShapeError("dropout: train-mode forward needs an rng");
        mask = dropout_mask<T>(x.shape, rate, *ctx.rng);
        return dropout_apply(x, mask);
    }

    TensorT<T> backward(const TensorT<T>& dy) {
        if (!active) return dy;
        return dropout_apply(dy, mask);
    }
};

}  // namespace opn
