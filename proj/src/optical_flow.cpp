#include "opn/optical_flow.hpp"

#include <algorithm>
#include <cmath>

#include "opn/errors.hpp"

namespace opn {

namespace {

// Gaussian 5-tap blur then 2x downsample (anti-aliased pyramid level).
Tensor downsample2(const Tensor& img) {
    const int h = img.dim(0), w = img.dim(1);
    static const float k[5] = {1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16, 1.0f / 16};
    Tensor tmp({h, w});
    for (int y = 0; y < h; ++y) {
        const float* r = img.ptr() + size_t(y) * w;
        float* o = tmp.ptr() + size_t(y) * w;
        for (int x = 0; x < w; ++x) {
            float acc = 0;
            for (int i = -2; i <= 2; ++i) acc += k[i + 2] * r[std::clamp(x + i, 0, w - 1)];
            o[x] = acc;
        }
    }
    Tensor blurred({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0;
            for (int i = -2; i <= 2; ++i)
                acc += k[i + 2] * tmp[size_t(std::clamp(y + i, 0, h - 1)) * w + x];
            blurred[size_t(y) * w + x] = acc;
        }
    }
    const int oh = h / 2, ow = w / 2;
    Tensor out({oh, ow});
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) out[size_t(y) * ow + x] = blurred[size_t(2 * y) * w + 2 * x];
    return out;
}

float sample_bilinear(const Tensor& img, float x, float y) {
    const int h = img.dim(0), w = img.dim(1);
    x = std::clamp(x, 0.0f, float(w - 1));
    y = std::clamp(y, 0.0f, float(h - 1));
    int x0 = std::min(int(x), w - 2 >= 0 ? w - 2 : 0);
    int y0 = std::min(int(y), h - 2 >= 0 ? h - 2 : 0);
    int x1 = std::min(x0 + 1, w - 1);
    int y1 = std::min(y0 + 1, h - 1);
    float fx = x - float(x0), fy = y - float(y0);
    const float* p = img.ptr();
    float a = p[size_t(y0) * w + x0], b = p[size_t(y0) * w + x1];
    float c = p[size_t(y1) * w + x0], d = p[size_t(y1) * w + x1];
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
}

// Central-difference gradients with clamped borders.
void gradients(const Tensor& img, Tensor& gx, Tensor& gy) {
    const int h = img.dim(0), w = img.dim(1);
    gx = Tensor({h, w});
    gy = Tensor({h, w});
    const float* p = img.ptr();
    for (int y = 0; y < h; ++y) {
        int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
        for (int x = 0; x < w; ++x) {
            int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
            gx[size_t(y) * w + x] = 0.5f * (p[size_t(y) * w + xp] - p[size_t(y) * w + xm]);
            gy[size_t(y) * w + x] = 0.5f * (p[size_t(yp) * w + x] - p[size_t(ym) * w + x]);
        }
    }
}

// Box-window sum via separable moving sums (clamped borders -> shrinking
// window at the edges).
Tensor window_sum(const Tensor& img, int radius) {
    const int h = img.dim(0), w = img.dim(1);
    Tensor tmp({h, w}), out({h, w});
    for (int y = 0; y < h; ++y) {
        const float* r = img.ptr() + size_t(y) * w;
        float* o = tmp.ptr() + size_t(y) * w;
        for (int x = 0; x < w; ++x) {
            int lo = std::max(0, x - radius), hi = std::min(w - 1, x + radius);
            float acc = 0;
            for (int i = lo; i <= hi; ++i) acc += r[i];
            o[x] = acc;
        }
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            int lo = std::max(0, y - radius), hi = std::min(h - 1, y + radius);
            float acc = 0;
            for (int i = lo; i <= hi; ++i) acc += tmp[size_t(i) * w + x];
            out[size_t(y) * w + x] = acc;
        }
    }
    return out;
}

Tensor upsample2_scaled(const Tensor& src, int oh, int ow) {
    Tensor out({oh, ow});
    const int h = src.dim(0), w = src.dim(1);
    for (int y = 0; y < oh; ++y) {
        float sy = (float(y) + 0.5f) * float(h) / float(oh) - 0.5f;
        for (int x = 0; x < ow; ++x) {
            float sx = (float(x) + 0.5f) * float(w) / float(ow) - 0.5f;
            out[size_t(y) * ow + x] = 2.0f * sample_bilinear(src, sx, sy);
        }
    }
    return out;
}

}  // namespace

Tensor FlowField::magnitude() const {
    Tensor m(u.shape);
    for (size_t i = 0; i < u.data.size(); ++i)
        m[i] = std::sqrt(u[i] * u[i] + v[i] * v[i]);
    return m;
}

FlowField estimate_flow(const Tensor& f0, const Tensor& f1, const LkParams& params) {
    if (f0.ndim() != 2 || f1.ndim() != 2) throw ShapeError("estimate_flow: frames must be [H,W]");
    check_same_shape(f0, f1, "estimate_flow");

    // Build pyramids, dropping levels that would be smaller than the window.
    std::vector<Tensor> p0{f0}, p1{f1};
    for (int l = 1; l < params.levels; ++l) {
        const Tensor& prev = p0.back();
        if (prev.dim(0) / 2 < params.window || prev.dim(1) / 2 < params.window) break;
        p0.push_back(downsample2(p0.back()));
        p1.push_back(downsample2(p1.back()));
    }

    const int radius = params.window / 2;
    FlowField flow;
    for (int l = int(p0.size()) - 1; l >= 0; --l) {
        const Tensor& a = p0[size_t(l)];
        const Tensor& b = p1[size_t(l)];
        const int h = a.dim(0), w = a.dim(1);
        if (l == int(p0.size()) - 1) {
            flow.u = Tensor({h, w});
            flow.v = Tensor({h, w});
        } else {
            flow.u = upsample2_scaled(flow.u, h, w);
            flow.v = upsample2_scaled(flow.v, h, w);
        }

        Tensor gx, gy;
        gradients(a, gx, gy);
        Tensor gxx({h, w}), gxy({h, w}), gyy({h, w});
        for (size_t i = 0; i < gx.data.size(); ++i) {
            gxx[i] = gx[i] * gx[i];
            gxy[i] = gx[i] * gy[i];
            gyy[i] = gy[i] * gy[i];
        }
        Tensor sxx = window_sum(gxx, radius);
        Tensor sxy = window_sum(gxy, radius);
        Tensor syy = window_sum(gyy, radius);

        for (int it = 0; it < params.iterations; ++it) {
            Tensor gxt({h, w}), gyt({h, w});
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    size_t i = size_t(y) * w + x;
                    float warped = sample_bilinear(b, float(x) + flow.u[i], float(y) + flow.v[i]);
                    float dt = warped - a[i];
                    gxt[i] = gx[i] * dt;
                    gyt[i] = gy[i] * dt;
                }
            }
            Tensor sxt = window_sum(gxt, radius);
            Tensor syt = window_sum(gyt, radius);
            const float max_step = float(params.window);
            for (size_t i = 0; i < flow.u.data.size(); ++i) {
                float det = sxx[i] * syy[i] - sxy[i] * sxy[i];
                float trace = sxx[i] + syy[i];
                if (det <= 1e-9f || trace <= 1e-6f) continue;  // untextured / degenerate
                float du = (-sxt[i] * syy[i] + syt[i] * sxy[i]) / det;
                float dv = (-syt[i] * sxx[i] + sxt[i] * sxy[i]) / det;
                du = std::clamp(du, -max_step, max_step);
                dv = std::clamp(dv, -max_step, max_step);
                flow.u[i] += du;
                flow.v[i] += dv;
            }
        }
    }
    return flow;
}

int flow_stat_margin(const LkParams& params) {
    return params.window << (params.levels - 1);
}

float mean_endpoint_error(const FlowField& flow, float dx, float dy, const LkParams& params) {
    const int m = flow_stat_margin(params);
    const int h = flow.height(), w = flow.width();
    if (h <= 2 * m || w <= 2 * m) throw ShapeError("frame too small for flow statistics margin");
    double acc = 0;
    long long n = 0;
    for (int y = m; y < h - m; ++y) {
        for (int x = m; x < w - m; ++x) {
            size_t i = size_t(y) * w + x;
            double eu = double(flow.u[i]) - dx, ev = double(flow.v[i]) - dy;
            acc += std::sqrt(eu * eu + ev * ev);
            ++n;
        }
    }
    return float(acc / double(n));
}

float mean_magnitude_interior(const FlowField& flow, const LkParams& params) {
    return mean_endpoint_error(flow, 0.0f, 0.0f, params);
}

float patch_motion_score(const std::vector<FlowField>& flows, const Rect& region) {
    if (region.w <= 0 || region.h <= 0) throw ShapeError("patch_motion_score: empty region");
    float score = 0;
    for (const FlowField& f : flows) {
        if (!region.inside(f.width(), f.height()))
            throw ShapeError("patch_motion_score: region outside frame");
        const int w = f.width();
        float acc = 0;
        for (int y = region.y; y < region.y + region.h; ++y) {
            for (int x = region.x; x < region.x + region.w; ++x) {
                size_t i = size_t(y) * w + x;
                acc += std::sqrt(f.u[i] * f.u[i] + f.v[i] * f.v[i]);
            }
        }
        score += acc / float(region.w * region.h);
    }
    return score;
}

bool direction_consistency(const std::vector<FlowField>& flows, const Rect& region,
                           float cone_deg, float min_mean_flow) {
    if (region.w <= 0 || region.h <= 0) throw ShapeError("direction_consistency: empty region");
    std::vector<std::pair<float, float>> means;
    for (const FlowField& f : flows) {
        if (!region.inside(f.width(), f.height()))
            throw ShapeError("direction_consistency: region outside frame");
        const int w = f.width();
        float su = 0, sv = 0;
        for (int y = region.y; y < region.y + region.h; ++y) {
            for (int x = region.x; x < region.x + region.w; ++x) {
                size_t i = size_t(y) * w + x;
                su += f.u[i];
                sv += f.v[i];
            }
        }
        float inv = 1.0f / float(region.w * region.h);
        su *= inv;
        sv *= inv;
        if (std::hypot(su, sv) < min_mean_flow) return false;  // direction undefined
        means.emplace_back(su, sv);
    }
    const float cos_cone = std::cos(cone_deg * 3.14159265358979323846f / 180.0f);
    for (size_t i = 0; i < means.size(); ++i) {
        for (size_t j = i + 1; j < means.size(); ++j) {
            float dot = means[i].first * means[j].first + means[i].second * means[j].second;
            float na = std::hypot(means[i].first, means[i].second);
            float nb = std::hypot(means[j].first, means[j].second);
            if (dot < cos_cone * na * nb) return false;
        }
    }
    return true;
}

}  // namespace opn
