#pragma once

// Central finite-difference oracle. Instantiates the production kernels in
// double so the per-coordinate 1e-3 tolerance is meaningful; the analytic
// side runs the exact same templated code the float build uses.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "opn/tensor.hpp"

namespace gradcheck {

using DTensor = opn::TensorT<double>;

constexpr double kH = 1e-3;
constexpr double kTol = 1e-3;

inline double rel_err(double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

// Structurally-zero gradients (e.g. a conv bias feeding batch norm) sit below
// the probe's resolution on both sides; treat matched near-zeros as exact.
inline double effective_err(double analytic, double fd) {
    if (std::abs(analytic) < 1e-6 && std::abs(fd) < 1e-6) return 0.0;
    return rel_err(fd, analytic);
}

// Checks d loss / d tensor[i] for the given coordinates (all when empty).
// loss_fn must recompute the loss from the tensor's current contents.
// If the probe at h straddles a ReLU/max-pool kink it retries at h/8 and
// h/64: kink noise vanishes with h, a wrong gradient does not.
inline double check_tensor(const std::function<double()>& loss_fn, DTensor& tensor,
                           const DTensor& analytic, std::vector<size_t> coords = {},
                           double h0 = kH) {
    if (coords.empty())
        for (size_t i = 0; i < tensor.data.size(); ++i) coords.push_back(i);
    double max_err = 0.0;
    for (size_t i : coords) {
        const double orig = tensor[i];
        double best = std::numeric_limits<double>::infinity();
        for (double h : {h0, h0 / 8.0, h0 / 64.0, h0 / 512.0, h0 / 4096.0}) {
            tensor[i] = orig + h;
            const double fp = loss_fn();
            tensor[i] = orig - h;
            const double fm = loss_fn();
            tensor[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            best = std::min(best, effective_err(analytic[i], fd));
            if (best < kTol) break;
        }
        max_err = std::max(max_err, best);
    }
    return max_err;
}

// Weighted-sum reduction turning any tensor output into a scalar loss with a
// well-spread gradient.
inline double weighted_sum(const DTensor& y, const DTensor& w) {
    double acc = 0;
    for (size_t i = 0; i < y.data.size(); ++i) acc += y[i] * w[i];
    return acc;
}

}  // namespace gradcheck
