#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "opn/kernels.hpp"
#include "opn/rng.hpp"
#include "opn/tensor.hpp"

using namespace opn;

TEST_CASE("tensor shape/data invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0f, 2.0f}), ShapeError);
    CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.all_finite());
    t[0] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("rng determinism and ranges") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
        int v = r.uniform_int(-3, 3);
        CHECK(v >= -3);
        CHECK(v <= 3);
        float u = r.unitf();
        CHECK(u >= 0.0f);
        CHECK(u < 1.0f);
    }
    // Irwin-Hall normal: mean 0, variance 1
    double acc = 0, acc2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double v = r.normal();
        acc += v;
        acc2 += v * v;
    }
    CHECK(std::abs(acc / n) < 0.03);
    CHECK(std::abs(acc2 / n - 1.0) < 0.05);
}

TEST_CASE("matmul identity and annihilator") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor zero({2, 2}, {0, 0, 0, 0});
    Tensor r1 = matmul(a, eye);
    for (int i = 0; i < 4; ++i) CHECK(r1[size_t(i)] == a[size_t(i)]);
    Tensor r2 = matmul(a, zero);
    for (int i = 0; i < 4; ++i) CHECK(r2[size_t(i)] == 0.0f);
    CHECK_THROWS_AS(matmul(a, Tensor({3, 2})), ShapeError);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(1);
    Tensor a({3, 4}), b({4, 2});
    for (auto& v : a.data) v = rng.uniform(-1, 1);
    for (auto& v : b.data) v = rng.uniform(-1, 1);
    Tensor c = matmul(a, b);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            float acc = 0;
            for (int k = 0; k < 4; ++k) acc += a.at2(i, k) * b.at2(k, j);
            CHECK(std::abs(c.at2(i, j) - acc) < 1e-6f);
        }
    }
}

TEST_CASE("conv2d ones kernel sums the window") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor b({1});
    Tensor y = conv2d_forward(x, w, b, 1, 0);
    CHECK(y.shape == std::vector<int>({1, 1, 1, 1}));
    CHECK(y[0] == doctest::Approx(9.0f));

    Tensor wz({1, 1, 3, 3});
    Tensor yz = conv2d_forward(x, wz, b, 1, 0);
    CHECK(yz[0] == 0.0f);
}

TEST_CASE("conv2d matches direct six-loop oracle") {
    Rng rng(3);
    Tensor x({2, 3, 8, 8}), w({4, 3, 3, 3}), b({4});
    for (auto& v : x.data) v = rng.uniform(-1, 1);
    for (auto& v : w.data) v = rng.uniform(-1, 1);
    for (auto& v : b.data) v = rng.uniform(-1, 1);
    const int stride = 2, pad = 1;
    Tensor y = conv2d_forward(x, w, b, stride, pad);
    CHECK(y.shape == std::vector<int>({2, 4, 4, 4}));
    for (int n = 0; n < 2; ++n)
        for (int f = 0; f < 4; ++f)
            for (int oy = 0; oy < 4; ++oy)
                for (int ox = 0; ox < 4; ++ox) {
                    double acc = b[size_t(f)];
                    for (int c = 0; c < 3; ++c)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                int iy = oy * stride - pad + ky;
                                int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= 8 || ix < 0 || ix >= 8) continue;
                                acc += double(x.at4(n, c, iy, ix)) * double(w.at4(f, c, ky, kx));
                            }
                    CHECK(std::abs(double(y.at4(n, f, oy, ox)) - acc) < 1e-5);
                }
}

TEST_CASE("conv2d output shape: floor extents, oversized kernels rejected") {
    Tensor x({1, 1, 7, 7}), w({1, 1, 2, 2}), b({1});
    Tensor y = conv2d_forward(x, w, b, 2, 0);  // (7-2)/2+1 -> 3 (floor)
    CHECK(y.shape == std::vector<int>({1, 1, 3, 3}));
    Tensor wbig({1, 1, 9, 9});
    Tensor bbig({1});
    CHECK_THROWS_AS(conv2d_forward(x, wbig, bbig, 1, 0), ShapeError);
    CHECK_THROWS_AS(conv2d_forward(Tensor({1, 2, 7, 7}), w, b, 1, 0), ShapeError);  // channels
}

TEST_CASE("conv2d forward is deterministic") {
    Rng rng(9);
    Tensor x({2, 3, 8, 8}), w({4, 3, 3, 3}), b({4});
    for (auto& v : x.data) v = rng.uniform(-1, 1);
    for (auto& v : w.data) v = rng.uniform(-1, 1);
    Tensor y1 = conv2d_forward(x, w, b, 1, 1);
    Tensor y2 = conv2d_forward(x, w, b, 1, 1);
    CHECK(y1.data == y2.data);
}

TEST_CASE("maxpool ties route to the lowest flat index") {
    Tensor x = Tensor::full({1, 1, 4, 4}, 0.5f);
    PoolOut<float> out = maxpool_forward(x, 2, 2);
    CHECK(out.y.shape == std::vector<int>({1, 1, 2, 2}));
    CHECK(out.argmax[0] == 0);       // top-left window: flat 0
    CHECK(out.argmax[1] == 2);       // top-right window: flat 2
    CHECK(out.argmax[2] == 8);
    CHECK(out.argmax[3] == 10);
    Tensor dy = Tensor::full({1, 1, 2, 2}, 1.0f);
    Tensor dx = maxpool_backward(dy, out.argmax, x.shape);
    CHECK(dx[0] == 1.0f);
    CHECK(dx[1] == 0.0f);  // nothing routed to the tied neighbors
    CHECK(dx[2] == 1.0f);
}

TEST_CASE("relu backward is zero for negative inputs") {
    Tensor x({1, 4}, {-1.0f, -0.1f, 0.0f, 2.0f});
    Tensor dy = Tensor::full({1, 4}, 1.0f);
    Tensor dx = relu_backward(x, dy);
    CHECK(dx[0] == 0.0f);
    CHECK(dx[1] == 0.0f);
    CHECK(dx[2] == 0.0f);
    CHECK(dx[3] == 1.0f);
}

TEST_CASE("batchnorm normalizes and applies affine") {
    Rng rng(11);
    Tensor x({8, 4});
    for (auto& v : x.data) v = rng.uniform(1.0f, 3.0f);
    Tensor gamma = Tensor::full({4}, 1.0f), beta({4});
    Tensor rm({4}), rv = Tensor::full({4}, 1.0f);
    BnCache<float> cache;
    Tensor y = batchnorm_forward(x, gamma, beta, rm, rv, true, &cache);
    for (int c = 0; c < 4; ++c) {
        double mean = 0, var = 0;
        for (int n = 0; n < 8; ++n) mean += y.at2(n, c);
        mean /= 8;
        for (int n = 0; n < 8; ++n) var += (y.at2(n, c) - mean) * (y.at2(n, c) - mean);
        var /= 8;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-3);
    }

    // gamma=2, beta=3 on the already-normalized input
    Tensor gamma2 = Tensor::full({4}, 2.0f), beta2 = Tensor::full({4}, 3.0f);
    Tensor rm2({4}), rv2 = Tensor::full({4}, 1.0f);
    Tensor y2 = batchnorm_forward(y, gamma2, beta2, rm2, rv2, true, nullptr);
    for (int c = 0; c < 4; ++c) {
        double mean = 0, var = 0;
        for (int n = 0; n < 8; ++n) mean += y2.at2(n, c);
        mean /= 8;
        for (int n = 0; n < 8; ++n) var += (y2.at2(n, c) - mean) * (y2.at2(n, c) - mean);
        var /= 8;
        CHECK(mean == doctest::Approx(3.0).epsilon(1e-3));
        CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(1e-2));
    }
}

TEST_CASE("batchnorm eval mode uses running stats (EMA oracle)") {
    Rng rng(13);
    Tensor gamma = Tensor::full({3}, 1.0f), beta({3});
    Tensor rm({3}), rv = Tensor::full({3}, 1.0f);
    // Hand-rolled EMA oracle alongside the implementation.
    std::vector<double> oracle_mean(3, 0.0), oracle_var(3, 1.0);
    for (int step = 0; step < 5; ++step) {
        Tensor x({6, 3});
        for (auto& v : x.data) v = rng.uniform(-2, 2) + float(step);
        batchnorm_forward(x, gamma, beta, rm, rv, true, nullptr);
        for (int c = 0; c < 3; ++c) {
            double mean = 0;
            for (int n = 0; n < 6; ++n) mean += x.at2(n, c);
            mean /= 6;
            double var = 0;
            for (int n = 0; n < 6; ++n) var += (x.at2(n, c) - mean) * (x.at2(n, c) - mean);
            var /= 6;
            oracle_mean[size_t(c)] = 0.9 * oracle_mean[size_t(c)] + 0.1 * mean;
            oracle_var[size_t(c)] = 0.9 * oracle_var[size_t(c)] + 0.1 * var;
        }
    }
    for (int c = 0; c < 3; ++c) {
        CHECK(rm[size_t(c)] == doctest::Approx(oracle_mean[size_t(c)]).epsilon(1e-4));
        CHECK(rv[size_t(c)] == doctest::Approx(oracle_var[size_t(c)]).epsilon(1e-4));
    }
    // Eval on a shifted batch differs from train-mode output.
    Tensor x({6, 3});
    for (auto& v : x.data) v = rng.uniform(3, 5);
    Tensor rm_copy = rm, rv_copy = rv;
    Tensor y_eval = batchnorm_forward(x, gamma, beta, rm_copy, rv_copy, false, nullptr);
    Tensor y_train = batchnorm_forward(x, gamma, beta, rm_copy, rv_copy, true, nullptr, false);
    double diff = 0;
    for (size_t i = 0; i < y_eval.data.size(); ++i)
        diff = std::max(diff, double(std::abs(y_eval[i] - y_train[i])));
    CHECK(diff > 0.1);
}

TEST_CASE("batchnorm rejects train-mode batches of one") {
    Tensor x({1, 4});
    Tensor gamma = Tensor::full({4}, 1.0f), beta({4}), rm({4}), rv = Tensor::full({4}, 1.0f);
    CHECK_THROWS_AS(batchnorm_forward(x, gamma, beta, rm, rv, true, nullptr), ShapeError);
    CHECK_NOTHROW(batchnorm_forward(x, gamma, beta, rm, rv, false, nullptr));
}

TEST_CASE("softmax cross-entropy reference values") {
    const int K = 12;
    Tensor logits({2, K});
    std::vector<int> labels{3, 7};
    SoftmaxCeOut<float> out = softmax_cross_entropy(logits, labels);
    CHECK(out.loss == doctest::Approx(std::log(12.0)).epsilon(1e-4));  // ln 12 ~ 2.4849

    Tensor sat({1, K});
    sat.at2(0, 5) = 1e4f;
    SoftmaxCeOut<float> out2 = softmax_cross_entropy(sat, {5});
    CHECK(out2.loss == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(std::isfinite(out2.loss));

    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 12}), ShapeError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1, 0}), ShapeError);
}

TEST_CASE("backward kernels require cached forward state") {
    Tensor w({4, 3, 3, 3}), dy({2, 4, 8, 8});
    Tensor stale_cols;  // never produced by a forward
    CHECK_THROWS_AS(conv2d_backward({2, 3, 8, 8}, w, dy, 1, 1, stale_cols), ShapeError);
    BnCache<float> empty;
    Tensor gamma = Tensor::full({3}, 1.0f);
    CHECK_THROWS_AS(batchnorm_backward(empty, gamma, dy), ShapeError);
}
