#pragma once

#include <string>
#include <utility>
#include <vector>

#include "opn/layers.hpp"
#include "opn/permutations.hpp"

namespace opn {

enum class HeadKind : uint8_t { kOpn = 0, kConcat = 1, kLinear = 2 };

const char* head_kind_name(HeadKind h);
HeadKind head_kind_from_name(const std::string& s);

// "tiny" trunk preset: conv(3->16,5x5,s2) BN ReLU pool2, conv(16->32,3x3) BN
// ReLU pool2, fc6(128). The Concat head is sized to at least match the OPN
// head's parameter count.
struct ModelConfig {
    int tuple_len = 4;
    int patch = 32;
    int in_channels = 3;
    int conv1_out = 16, conv1_k = 5, conv1_stride = 2;
    int conv2_out = 32, conv2_k = 3;
    int feat_dim = 128;   // fc6 width D
    int pair_dim = 64;    // per-pair unit width D2
    int concat_h1 = 160, concat_h2 = 128;
    HeadKind head = HeadKind::kOpn;
    bool shared_pair_units = false;
    float dropout = 0.5f;
    int classes_override = 0;  // 0: n!/2 (pretext); otherwise a downstream class count

    int num_classes() const {
        return classes_override > 0 ? classes_override : opn::num_classes(tuple_len);
    }
    int num_pairs() const { return tuple_len * (tuple_len - 1) / 2; }
};

template <class T>
struct ModelGraphT {
    ModelConfig cfg;

    // Shared trunk (single storage; every branch runs through these layers).
    Conv2dT<T> conv1;
    BatchNormT<T> bn1;
    ReluT<T> relu1;
    MaxPoolT<T> pool1;
    Conv2dT<T> conv2;
    BatchNormT<T> bn2;
    ReluT<T> relu2;
    MaxPoolT<T> pool2;
    LinearT<T> fc6;
    BatchNormT<T> bn6;
    ReluT<T> relu6;
    DropoutT<T> do6;

    struct PairUnit {
        LinearT<T> fc;
        BatchNormT<T> bn;
        ReluT<T> relu;
        DropoutT<T> dropout;
    };
    std::vector<PairUnit> pair_units;               // C(n,2), or 1 when shared
    std::vector<std::pair<int, int>> pair_index;    // (i,j), i<j, branch order

    LinearT<T> fc7a;
    BatchNormT<T> bn7a;
    ReluT<T> relu7a;
    DropoutT<T> do7a;
    LinearT<T> fc7b;
    BatchNormT<T> bn7b;
    ReluT<T> relu7b;
    DropoutT<T> do7b;

    LinearT<T> classifier;

    int batch_n = 0;       // last forward's N
    int conv_out_dim = 0;  // flattened trunk conv output size

    static ModelGraphT build(const ModelConfig& cfg, Rng& rng);

    // batch: [N, n, 3, P, P]. Returns logits [N, num_classes].
    TensorT<T> forward(const TensorT<T>& batch, const ForwardCtx& ctx);
    void backward(const TensorT<T>& dlogits);

    std::vector<ParamRef<T>> params();
    void zero_grad();

  private:
    TensorT<T> trunk_forward(const TensorT<T>& stacked, const ForwardCtx& ctx);
    std::vector<int> pool2_out_shape() const {
        const auto& xs = pool2.x_shape;
        return {xs[0], xs[1], (xs[2] - pool2.k) / pool2.s + 1, (xs[3] - pool2.k) / pool2.s + 1};
    }
};

using ModelGraph = ModelGraphT<float>;

// The flattened conv-stage output size for a given patch size (shape algebra
// check happens at build time).
int trunk_conv_out_dim(const ModelConfig& cfg);

// --- implementation ---------------------------------------------------------

inline const char* head_kind_name(HeadKind h) {
    switch (h) {
        case HeadKind::kOpn: return "opn";
        case HeadKind::kConcat: return "concat";
        case HeadKind::kLinear: return "linear";
    }
    return "?";
}

inline HeadKind head_kind_from_name(const std::string& s) {
    if (s == "opn") return HeadKind::kOpn;
    if (s == "concat") return HeadKind::kConcat;
    if (s == "linear") return HeadKind::kLinear;
    throw ConfigError("unknown head kind: " + s);
}

inline int trunk_conv_out_dim(const ModelConfig& cfg) {
    auto d1 = conv_dims({1, cfg.in_channels, cfg.patch, cfg.patch},
                        {cfg.conv1_out, cfg.in_channels, cfg.conv1_k, cfg.conv1_k},
                        cfg.conv1_stride, cfg.conv1_k / 2);
    if (d1.ho < 2 || d1.wo < 2) throw ShapeError("patch too small for the trunk");
    int h = d1.ho / 2, w = d1.wo / 2;  // pool1
    auto d2 = conv_dims({1, cfg.conv1_out, h, w},
                        {cfg.conv2_out, cfg.conv1_out, cfg.conv2_k, cfg.conv2_k}, 1,
                        cfg.conv2_k / 2);
    if (d2.ho < 2 || d2.wo < 2) throw ShapeError("patch too small for the trunk");
    return cfg.conv2_out * (d2.ho / 2) * (d2.wo / 2);
}

template <class T>
ModelGraphT<T> ModelGraphT<T>::build(const ModelConfig& cfg, Rng& rng) {
    if (cfg.tuple_len < 2 || cfg.tuple_len > 5) throw ConfigError("tuple_len must be in [2,5]");
    ModelGraphT<T> m;
    m.cfg = cfg;
    m.conv_out_dim = trunk_conv_out_dim(cfg);

    m.conv1.init(cfg.in_channels, cfg.conv1_out, cfg.conv1_k, cfg.conv1_stride, cfg.conv1_k / 2, rng);
    m.bn1.init(cfg.conv1_out);
    m.conv2.init(cfg.conv1_out, cfg.conv2_out, cfg.conv2_k, 1, cfg.conv2_k / 2, rng);
    m.bn2.init(cfg.conv2_out);
    m.fc6.init(m.conv_out_dim, cfg.feat_dim, rng);
    m.bn6.init(cfg.feat_dim);
    m.do6.rate = T(cfg.dropout);

    const int n = cfg.tuple_len;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m.pair_index.emplace_back(i, j);

    const int k = cfg.num_classes();
    // Small-std classifier init keeps the untrained loss at ln(num_classes).
    constexpr double kClassifierStd = 0.01;
    switch (cfg.head) {
        case HeadKind::kOpn: {
            const int units = cfg.shared_pair_units ? 1 : m.cfg.num_pairs();
            m.pair_units.resize(size_t(units));
            for (auto& u : m.pair_units) {
                u.fc.init(2 * cfg.feat_dim, cfg.pair_dim, rng);
                u.bn.init(cfg.pair_dim);
                u.dropout.rate = T(cfg.dropout);
            }
            m.classifier.init(m.cfg.num_pairs() * cfg.pair_dim, k, rng, kClassifierStd);
            break;
        }
        case HeadKind::kConcat: {
            m.fc7a.init(n * cfg.feat_dim, cfg.concat_h1, rng);
            m.bn7a.init(cfg.concat_h1);
            m.do7a.rate = T(cfg.dropout);
            m.fc7b.init(cfg.concat_h1, cfg.concat_h2, rng);
            m.bn7b.init(cfg.concat_h2);
            m.do7b.rate = T(cfg.dropout);
            m.classifier.init(cfg.concat_h2, k, rng, kClassifierStd);
            break;
        }
        case HeadKind::kLinear: {
            m.classifier.init(n * cfg.feat_dim, k, rng, kClassifierStd);
            break;
        }
    }
    return m;
}

template <class T>
TensorT<T> ModelGraphT<T>::trunk_forward(const TensorT<T>& stacked, const ForwardCtx& ctx) {
    TensorT<T> h = conv1.forward(stacked);
    h = bn1.forward(h, ctx);
    h = relu1.forward(h);
    h = pool1.forward(h);
    h = conv2.forward(h);
    h = bn2.forward(h, ctx);
    h = relu2.forward(h);
    h = pool2.forward(h);
    h = h.reshaped({h.dim(0), conv_out_dim});
    h = fc6.forward(h);
    h = bn6.forward(h, ctx);
    h = relu6.forward(h);
    h = do6.forward(h, ctx);
    return h;
}

template <class T>
TensorT<T> ModelGraphT<T>::forward(const TensorT<T>& batch, const ForwardCtx& ctx) {
    const int n = cfg.tuple_len;
    if (batch.ndim() != 5 || batch.dim(1) != n || batch.dim(2) != cfg.in_channels ||
        batch.dim(3) != cfg.patch || batch.dim(4) != cfg.patch)
        throw ShapeError("model forward: batch must be [N," + std::to_string(n) + ",3,P,P], got " +
                         batch.shape_str());
    const int N = batch.dim(0);
    if (ctx.train && N < 2) throw ShapeError("model forward: train mode needs batch >= 2");
    batch_n = N;

    // Stack branch-major: row b*N+s is branch b of sample s. One trunk pass
    // serves all branches (weight sharing is by construction).
    const size_t chw = size_t(cfg.in_channels) * cfg.patch * cfg.patch;
    TensorT<T> stacked({n * N, cfg.in_channels, cfg.patch, cfg.patch});
    for (int s = 0; s < N; ++s)
        for (int b = 0; b < n; ++b)
            std::copy_n(batch.ptr() + (size_t(s) * n + b) * chw, chw,
                        stacked.ptr() + (size_t(b) * N + s) * chw);

    TensorT<T> feats = trunk_forward(stacked, ctx);  // [n*N, D]
    const int D = cfg.feat_dim;

    switch (cfg.head) {
        case HeadKind::kOpn: {
            const int P = cfg.num_pairs();
            const int D2 = cfg.pair_dim;
            // Pair inputs, stacked [P*N, 2D] in pair order (shared units run
            // all pairs through one stack; per-pair units slice it).
            TensorT<T> pair_in({P * N, 2 * D});
            for (int p = 0; p < P; ++p) {
                auto [i, j] = pair_index[size_t(p)];
                for (int s = 0; s < N; ++s) {
                    T* row = pair_in.ptr() + (size_t(p) * N + s) * (2 * D);
                    std::copy_n(feats.ptr() + (size_t(i) * N + s) * D, D, row);
                    std::copy_n(feats.ptr() + (size_t(j) * N + s) * D, D, row + D);
                }
            }
            TensorT<T> pair_out({P * N, D2});
            if (cfg.shared_pair_units) {
                TensorT<T> h = pair_units[0].fc.forward(pair_in);
                h = pair_units[0].bn.forward(h, ctx);
                h = pair_units[0].relu.forward(h);
                h = pair_units[0].dropout.forward(h, ctx);
                pair_out = std::move(h);
            } else {
                for (int p = 0; p < P; ++p) {
                    TensorT<T> slice({N, 2 * D});
                    std::copy_n(pair_in.ptr() + size_t(p) * N * (2 * D), size_t(N) * 2 * D,
                                slice.ptr());
                    TensorT<T> h = pair_units[size_t(p)].fc.forward(slice);
                    h = pair_units[size_t(p)].bn.forward(h, ctx);
                    h = pair_units[size_t(p)].relu.forward(h);
                    h = pair_units[size_t(p)].dropout.forward(h, ctx);
                    std::copy_n(h.ptr(), size_t(N) * D2, pair_out.ptr() + size_t(p) * N * D2);
                }
            }
            // Concatenate pair outputs per sample: [N, P*D2].
            TensorT<T> cat({N, P * D2});
            for (int p = 0; p < P; ++p)
                for (int s = 0; s < N; ++s)
                    std::copy_n(pair_out.ptr() + (size_t(p) * N + s) * D2, D2,
                                cat.ptr() + size_t(s) * (P * D2) + size_t(p) * D2);
            return classifier.forward(cat);
        }
        case HeadKind::kConcat:
        case HeadKind::kLinear: {
            TensorT<T> cat({N, n * D});
            for (int b = 0; b < n; ++b)
                for (int s = 0; s < N; ++s)
                    std::copy_n(feats.ptr() + (size_t(b) * N + s) * D, D,
                                cat.ptr() + size_t(s) * (n * D) + size_t(b) * D);
            if (cfg.head == HeadKind::kLinear) return classifier.forward(cat);
            TensorT<T> h = fc7a.forward(cat);
            h = bn7a.forward(h, ctx);
            h = relu7a.forward(h);
            h = do7a.forward(h, ctx);
            h = fc7b.forward(h);
            h = bn7b.forward(h, ctx);
            h = relu7b.forward(h);
            h = do7b.forward(h, ctx);
            return classifier.forward(h);
        }
    }
    throw ShapeError("model forward: unknown head");
}

template <class T>
void ModelGraphT<T>::backward(const TensorT<T>& dlogits) {
    const int n = cfg.tuple_len;
    const int N = batch_n;
    const int D = cfg.feat_dim;
    if (N == 0) throw ShapeError("model backward: no cached forward");

    TensorT<T> dfeats({n * N, D});
    switch (cfg.head) {
        case HeadKind::kOpn: {
            const int P = cfg.num_pairs();
            const int D2 = cfg.pair_dim;
            TensorT<T> dcat = classifier.backward(dlogits);  // [N, P*D2]
            TensorT<T> dpair_out({P * N, D2});
            for (int p = 0; p < P; ++p)
                for (int s = 0; s < N; ++s)
                    std::copy_n(dcat.ptr() + size_t(s) * (P * D2) + size_t(p) * D2, D2,
                                dpair_out.ptr() + (size_t(p) * N + s) * D2);
            TensorT<T> dpair_in({P * N, 2 * D});
            if (cfg.shared_pair_units) {
                TensorT<T> d = pair_units[0].dropout.backward(dpair_out);
                d = pair_units[0].relu.backward(d);
                d = pair_units[0].bn.backward(d);
                dpair_in = pair_units[0].fc.backward(d);
            } else {
                for (int p = 0; p < P; ++p) {
                    TensorT<T> slice({N, D2});
                    std::copy_n(dpair_out.ptr() + size_t(p) * N * D2, size_t(N) * D2, slice.ptr());
                    TensorT<T> d = pair_units[size_t(p)].dropout.backward(slice);
                    d = pair_units[size_t(p)].relu.backward(d);
                    d = pair_units[size_t(p)].bn.backward(d);
                    d = pair_units[size_t(p)].fc.backward(d);
                    std::copy_n(d.ptr(), size_t(N) * 2 * D, dpair_in.ptr() + size_t(p) * N * 2 * D);
                }
            }
            for (int p = 0; p < int(pair_index.size()); ++p) {
                auto [i, j] = pair_index[size_t(p)];
                for (int s = 0; s < N; ++s) {
                    const T* row = dpair_in.ptr() + (size_t(p) * N + s) * (2 * D);
                    T* fi = dfeats.ptr() + (size_t(i) * N + s) * D;
                    T* fj = dfeats.ptr() + (size_t(j) * N + s) * D;
                    for (int d = 0; d < D; ++d) fi[d] += row[d];
                    for (int d = 0; d < D; ++d) fj[d] += row[D + d];
                }
            }
            break;
        }
        case HeadKind::kConcat:
        case HeadKind::kLinear: {
            TensorT<T> dcat;
            if (cfg.head == HeadKind::kLinear) {
                dcat = classifier.backward(dlogits);
            } else {
                TensorT<T> d = classifier.backward(dlogits);
                d = do7b.backward(d);
                d = relu7b.backward(d);
                d = bn7b.backward(d);
                d = fc7b.backward(d);
                d = do7a.backward(d);
                d = relu7a.backward(d);
                d = bn7a.backward(d);
                dcat = fc7a.backward(d);
            }
            for (int b = 0; b < n; ++b)
                for (int s = 0; s < N; ++s)
                    std::copy_n(dcat.ptr() + size_t(s) * (n * D) + size_t(b) * D, D,
                                dfeats.ptr() + (size_t(b) * N + s) * D);
            break;
        }
    }

    // Trunk backward; branch contributions sum into the shared parameters.
    TensorT<T> d = do6.backward(dfeats);
    d = relu6.backward(d);
    d = bn6.backward(d);
    d = fc6.backward(d);
    d = d.reshaped(pool2_out_shape());
    d = pool2.backward(d);
    d = relu2.backward(d);
    d = bn2.backward(d);
    d = conv2.backward(d);
    d = pool1.backward(d);
    d = relu1.backward(d);
    d = bn1.backward(d);
    conv1.backward(d, /*need_dx=*/false);
}

template <class T>
std::vector<ParamRef<T>> ModelGraphT<T>::params() {
    std::vector<ParamRef<T>> out;
    conv1.collect(out, "trunk.conv1");
    bn1.collect(out, "trunk.bn1");
    conv2.collect(out, "trunk.conv2");
    bn2.collect(out, "trunk.bn2");
    fc6.collect(out, "trunk.fc6");
    bn6.collect(out, "trunk.bn6");
    switch (cfg.head) {
        case HeadKind::kOpn:
            for (size_t p = 0; p < pair_units.size(); ++p) {
                std::string name = cfg.shared_pair_units
                                       ? std::string("head.pair_shared")
                                       : "head.pair_" + std::to_string(pair_index[p].first) + "_" +
                                             std::to_string(pair_index[p].second);
                pair_units[p].fc.collect(out, name + ".fc");
                pair_units[p].bn.collect(out, name + ".bn");
            }
            break;
        case HeadKind::kConcat:
            fc7a.collect(out, "head.fc7a");
            bn7a.collect(out, "head.bn7a");
            fc7b.collect(out, "head.fc7b");
            bn7b.collect(out, "head.bn7b");
            break;
        case HeadKind::kLinear:
            break;
    }
    classifier.collect(out, "head.classifier");
    return out;
}

template <class T>
void ModelGraphT<T>::zero_grad() {
    for (auto& p : params())
        if (p.grad) p.grad->fill(T(0));
}

}  // namespace opn
