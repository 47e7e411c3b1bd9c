#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "opn/kernels.hpp"
#include "opn/model.hpp"

using namespace opn;
using gradcheck::DTensor;
using gradcheck::check_tensor;
using gradcheck::kTol;
using gradcheck::weighted_sum;

namespace {

DTensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    DTensor t(std::move(shape));
    for (auto& v : t.data) v = lo + (hi - lo) * rng.unit();
    return t;
}

// Values with pairwise gaps > 2h inside each tensor, so max-pool argmaxes
// and relu signs cannot flip under the probe.
DTensor well_separated(std::vector<int> shape, Rng& rng) {
    DTensor t(std::move(shape));
    std::vector<int> slots(t.data.size());
    for (size_t i = 0; i < slots.size(); ++i) slots[i] = int(i);
    rng.shuffle(slots);
    for (size_t i = 0; i < t.data.size(); ++i)
        t[i] = -1.0 + 0.01 * double(slots[i]) + 0.002 * rng.unit();
    return t;
}

}  // namespace

TEST_CASE("conv2d gradients vs central differences") {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(1000 + uint64_t(trial));
        const int n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 3);
        const int f = rng.uniform_int(1, 4), k = rng.uniform_int(1, 3);
        const int stride = rng.uniform_int(1, 2), pad = rng.uniform_int(0, 1);
        const int ho = rng.uniform_int(1, 3), wo = rng.uniform_int(1, 3);
        const int h = (ho - 1) * stride + k - 2 * pad, w = (wo - 1) * stride + k - 2 * pad;
        if (h < 1 || w < 1 || h < k - pad || w < k - pad) continue;
        DTensor x = random_tensor({n, c, h, w}, rng);
        DTensor wt = random_tensor({f, c, k, k}, rng);
        DTensor b = random_tensor({f}, rng);
        DTensor lw = random_tensor({n, f, ho, wo}, rng);

        auto loss = [&] { return weighted_sum(conv2d_forward(x, wt, b, stride, pad), lw); };
        DTensor cols;
        conv2d_forward(x, wt, b, stride, pad, &cols);
        ConvGrads<double> g = conv2d_backward(x.shape, wt, lw, stride, pad, cols);

        CHECK(check_tensor(loss, x, g.dx) < kTol);
        CHECK(check_tensor(loss, wt, g.dw) < kTol);
        CHECK(check_tensor(loss, b, g.db) < kTol);
    }
}

TEST_CASE("linear gradients vs central differences") {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(2000 + uint64_t(trial));
        const int n = rng.uniform_int(1, 5), in = rng.uniform_int(1, 7), out = rng.uniform_int(1, 6);
        DTensor x = random_tensor({n, in}, rng);
        DTensor w = random_tensor({out, in}, rng);
        DTensor b = random_tensor({out}, rng);
        DTensor lw = random_tensor({n, out}, rng);
        auto loss = [&] { return weighted_sum(linear_forward(x, w, b), lw); };
        LinearGrads<double> g = linear_backward(x, w, lw);
        CHECK(check_tensor(loss, x, g.dx) < kTol);
        CHECK(check_tensor(loss, w, g.dw) < kTol);
        CHECK(check_tensor(loss, b, g.db) < kTol);
    }
}

TEST_CASE("relu gradients vs central differences") {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(3000 + uint64_t(trial));
        DTensor x({2, rng.uniform_int(3, 9)});
        for (auto& v : x.data) {
            double mag = 0.05 + 0.95 * rng.unit();  // keep away from the kink
            v = rng.unit() < 0.5 ? -mag : mag;
        }
        DTensor lw = random_tensor(x.shape, rng);
        auto loss = [&] { return weighted_sum(relu_forward(x), lw); };
        DTensor dx = relu_backward(x, lw);
        CHECK(check_tensor(loss, x, dx) < kTol);
    }
}

TEST_CASE("maxpool gradients vs central differences") {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(4000 + uint64_t(trial));
        const int n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 3);
        const int k = 2, s = 2;
        const int h = 2 * rng.uniform_int(1, 3), w = 2 * rng.uniform_int(1, 3);
        DTensor x = well_separated({n, c, h, w}, rng);
        PoolOut<double> fwd = maxpool_forward(x, k, s);
        DTensor lw = random_tensor(fwd.y.shape, rng);
        auto loss = [&] { return weighted_sum(maxpool_forward(x, k, s).y, lw); };
        DTensor dx = maxpool_backward(lw, fwd.argmax, x.shape);
        CHECK(check_tensor(loss, x, dx) < kTol);
    }
}

TEST_CASE("batchnorm gradients vs central differences (train and eval)") {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(5000 + uint64_t(trial));
        const bool spatial = trial % 2 == 0;
        const int n = rng.uniform_int(2, 4), c = rng.uniform_int(1, 3);
        std::vector<int> shape =
            spatial ? std::vector<int>{n, c, rng.uniform_int(2, 3), rng.uniform_int(2, 3)}
                    : std::vector<int>{n, c};
        DTensor x = random_tensor(shape, rng, -2.0, 2.0);
        DTensor gamma = random_tensor({c}, rng, 0.5, 1.5);
        DTensor beta = random_tensor({c}, rng, -0.5, 0.5);
        DTensor rm = random_tensor({c}, rng, -0.2, 0.2);
        DTensor rv = random_tensor({c}, rng, 0.5, 1.5);
        DTensor lw = random_tensor(shape, rng);
        const bool train = trial % 3 != 2;

        auto loss = [&] {
            DTensor rmc = rm, rvc = rv;  // keep the EMA state fixed across probes
            return weighted_sum(
                batchnorm_forward(x, gamma, beta, rmc, rvc, train, nullptr, false), lw);
        };
        BnCache<double> cache;
        DTensor rmc = rm, rvc = rv;
        batchnorm_forward(x, gamma, beta, rmc, rvc, train, &cache, false);
        BnGrads<double> g = batchnorm_backward(cache, gamma, lw);
        CHECK(check_tensor(loss, x, g.dx) < kTol);
        CHECK(check_tensor(loss, gamma, g.dgamma) < kTol);
        CHECK(check_tensor(loss, beta, g.dbeta) < kTol);
    }
}

TEST_CASE("dropout gradients vs central differences (fixed mask)") {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(6000 + uint64_t(trial));
        DTensor x = random_tensor({3, rng.uniform_int(2, 8)}, rng);
        Rng mask_rng(rng.next());
        DTensor mask = dropout_mask<double>(x.shape, 0.5, mask_rng);
        DTensor lw = random_tensor(x.shape, rng);
        auto loss = [&] { return weighted_sum(dropout_apply(x, mask), lw); };
        DTensor dx = dropout_apply(lw, mask);
        CHECK(check_tensor(loss, x, dx) < kTol);
    }
}

TEST_CASE("softmax cross-entropy gradient vs central differences") {
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(7000 + uint64_t(trial));
        const int n = rng.uniform_int(2, 4), k = rng.uniform_int(2, 12);
        DTensor logits = random_tensor({n, k}, rng, -2.0, 2.0);
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) labels.push_back(rng.uniform_int(0, k - 1));
        auto loss = [&] { return double(softmax_cross_entropy(logits, labels).loss); };
        SoftmaxCeOut<double> out = softmax_cross_entropy(logits, labels);
        CHECK(check_tensor(loss, logits, out.dlogits) < kTol);
    }
}

TEST_CASE("full OPN finite-difference check (tiny preset, batch 2)") {
    // 20 randomized trials; each samples a handful of coordinates from every
    // named parameter plus the input batch.
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(9000 + uint64_t(trial));
        ModelConfig cfg;
        cfg.patch = 16;           // tiny preset trunk; smaller spatial extent
        cfg.dropout = 0.0f;       // FD needs a deterministic forward
        cfg.head = trial % 4 == 3 ? HeadKind::kConcat : HeadKind::kOpn;
        cfg.tuple_len = trial % 2 == 0 ? 4 : 3;
        Rng init(rng.next());
        ModelGraphT<double> model = ModelGraphT<double>::build(cfg, init);

        const int N = 2;
        DTensor batch = random_tensor({N, cfg.tuple_len, 3, cfg.patch, cfg.patch}, rng, 0.0, 1.0);
        std::vector<int> labels;
        for (int i = 0; i < N; ++i) labels.push_back(rng.uniform_int(0, cfg.num_classes() - 1));

        ForwardCtx ctx;
        ctx.train = true;
        ctx.update_bn_stats = false;
        auto loss = [&] {
            return double(softmax_cross_entropy(model.forward(batch, ctx), labels).loss);
        };

        SoftmaxCeOut<double> ce = softmax_cross_entropy(model.forward(batch, ctx), labels);
        model.zero_grad();
        model.backward(ce.dlogits);

        double worst = 0;
        for (auto& p : model.params()) {
            if (!p.grad) continue;
            std::vector<size_t> coords;
            const size_t total = p.value->data.size();
            for (int i = 0; i < 4; ++i)
                coords.push_back(size_t(rng.uniform_int(0, int(total) - 1)));
            worst = std::max(worst, check_tensor(loss, *p.value, *p.grad, coords));
        }
        CHECK(worst < kTol);
    }
}
