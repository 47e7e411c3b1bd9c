#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "opn/optical_flow.hpp"
#include "opn/video_synth.hpp"

using namespace opn;

namespace {

// Textured frame via the scene generator's background machinery.
Tensor textured_gray(int h, int w, uint64_t seed) {
    SceneConfig cfg;
    cfg.width = w;
    cfg.height = h;
    cfg.num_frames = 8;
    cfg.min_objects = 0;
    cfg.max_objects = 0;
    return to_gray(generate(cfg, seed).frames[0]);
}

Tensor translate(const Tensor& img, int dx, int dy) {
    const int h = img.dim(0), w = img.dim(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int sy = std::clamp(y - dy, 0, h - 1);
            int sx = std::clamp(x - dx, 0, w - 1);
            out.at2(y, x) = img.at2(sy, sx);
        }
    return out;
}

}  // namespace

TEST_CASE("zero motion gives near-zero flow") {
    Tensor f = textured_gray(64, 64, 1);
    FlowField flow = estimate_flow(f, f);
    CHECK(mean_magnitude_interior(flow) < 0.05f);
}

TEST_CASE("known translations are recovered under 0.5 px") {
    int checked = 0;
    for (uint64_t seed : {2ull, 3ull}) {
        Tensor f = textured_gray(64, 64, seed);
        for (int dx = -3; dx <= 3; dx += 3) {
            for (int dy : {-2, 0, 3}) {
                if (dx == 0 && dy == 0) continue;
                Tensor g = translate(f, dx, dy);
                FlowField flow = estimate_flow(f, g);
                float mee = mean_endpoint_error(flow, float(dx), float(dy));
                CAPTURE(dx);
                CAPTURE(dy);
                CHECK(mee < 0.5f);
                ++checked;
            }
        }
    }
    CHECK(checked >= 10);
}

TEST_CASE("translate(2,0) has mean u ~ 2 and mean v ~ 0") {
    Tensor f = textured_gray(64, 64, 5);
    Tensor g = translate(f, 2, 0);
    FlowField flow = estimate_flow(f, g);
    const int m = flow_stat_margin();
    double su = 0, sv = 0;
    long long n = 0;
    for (int y = m; y < 64 - m; ++y)
        for (int x = m; x < 64 - m; ++x) {
            su += flow.u[size_t(y) * 64 + x];
            sv += flow.v[size_t(y) * 64 + x];
            ++n;
        }
    CHECK(su / double(n) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(std::abs(sv / double(n)) < 0.2);
}

TEST_CASE("swap antisymmetry within twice the translation tolerance") {
    Tensor f = textured_gray(64, 64, 8);
    Tensor g = translate(f, 2, 1);
    FlowField fwd = estimate_flow(f, g);
    FlowField bwd = estimate_flow(g, f);
    const int m = flow_stat_margin();
    double acc = 0;
    long long n = 0;
    for (int y = m; y < 64 - m; ++y)
        for (int x = m; x < 64 - m; ++x) {
            size_t i = size_t(y) * 64 + x;
            double eu = double(fwd.u[i]) + double(bwd.u[i]);
            double ev = double(fwd.v[i]) + double(bwd.v[i]);
            acc += std::sqrt(eu * eu + ev * ev);
            ++n;
        }
    CHECK(acc / double(n) < 1.0);  // 2x the 0.5 px translation tolerance
}

TEST_CASE("object motion dominates background in magnitude") {
    SceneConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.num_frames = 10;
    cfg.min_objects = cfg.max_objects = 1;
    cfg.min_obj_size = cfg.max_obj_size = 14;
    cfg.min_speed = cfg.max_speed = 2.5f;
    cfg.allowed_kinds = {Trajectory::kLinear};
    FrameSequence clip = generate(cfg, 17);

    const ObjectSpec& o = clip.script.objects[0];
    auto [cx, cy] = clip.script.positions[0][4];
    FlowField flow = estimate_flow(to_gray(clip.frames[4]), to_gray(clip.frames[5]));
    Tensor mag = flow.magnitude();
    int x0 = int(std::lround(cx - float(o.size - 1) / 2));
    int y0 = int(std::lround(cy - float(o.size - 1) / 2));
    double obj = 0, bg = 0;
    long long no = 0, nb = 0;
    for (int y = 2; y < 62; ++y)
        for (int x = 2; x < 62; ++x) {
            bool in_box = x >= x0 && x < x0 + o.size && y >= y0 && y < y0 + o.size;
            // pad the box by 4 px when counting background
            bool near_box =
                x >= x0 - 4 && x < x0 + o.size + 4 && y >= y0 - 4 && y < y0 + o.size + 4;
            if (in_box) {
                obj += mag.at2(y, x);
                ++no;
            } else if (!near_box) {
                bg += mag.at2(y, x);
                ++nb;
            }
        }
    CHECK(obj / double(no) >= 5.0 * (bg / double(nb)));
}

TEST_CASE("patch motion score: static, analytic value, monotone in speed") {
    SceneConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.num_frames = 8;
    cfg.min_objects = cfg.max_objects = 1;
    cfg.min_obj_size = cfg.max_obj_size = 16;
    cfg.allowed_kinds = {Trajectory::kLinear};

    MotionScript script;
    ObjectSpec o;
    o.texture_seed = 4;
    o.size = 16;
    o.kind = Trajectory::kLinear;
    o.vx = 2.0f;
    o.vy = 0.0f;
    o.start_x = 20.0f;
    o.start_y = 32.0f;
    script.objects.push_back(o);
    FrameSequence clip = render_script(cfg, script, 3);

    std::vector<Tensor> grays;
    for (const Tensor& f : clip.frames) grays.push_back(to_gray(f));
    std::vector<FlowField> flows;
    for (int t = 0; t < 4; ++t) flows.push_back(estimate_flow(grays[size_t(t)], grays[size_t(t + 1)]));

    // Static interior region away from the object's path: essentially no
    // motion (borders are excluded; LK is not valid there).
    CHECK(patch_motion_score(flows, {40, 6, 12, 12}) < 0.1f);

    // Union of the object's positions over frames 0..4: x in [12, 44).
    // The analytic envelope: at least the object's own motion content
    // (intervals * v * area ratio), at most the whole rect moving at v.
    Rect covering{12, 24, 32, 16};
    float score = patch_motion_score(flows, covering);
    float area_ratio = (16.0f * 16.0f) / float(covering.w * covering.h);
    CHECK(score >= 4.0f * 2.0f * area_ratio * 0.8f);
    CHECK(score <= 4.0f * 2.0f * 1.1f);

    // Doubling the speed does not decrease the score.
    MotionScript fast = script;
    fast.objects[0].vx = 4.0f;  // fits: start 20, ends at 48
    fast.objects[0].start_x = 14.0f;
    FrameSequence clip2 = render_script(cfg, fast, 3);
    std::vector<FlowField> flows2;
    for (int t = 0; t < 4; ++t)
        flows2.push_back(estimate_flow(to_gray(clip2.frames[size_t(t)]),
                                       to_gray(clip2.frames[size_t(t + 1)])));
    Rect covering2{6, 24, 42, 16};
    float slow_in_2 = patch_motion_score(flows, covering2);
    float fast_in_2 = patch_motion_score(flows2, covering2);
    CHECK(fast_in_2 >= slow_in_2);

    CHECK_THROWS_AS(patch_motion_score(flows, {0, 0, 0, 0}), ShapeError);
    CHECK_THROWS_AS(patch_motion_score(flows, {60, 60, 10, 10}), ShapeError);
}

TEST_CASE("direction consistency across trajectory kinds") {
    SceneConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.num_frames = 12;
    cfg.osc_period = 4;

    auto flows_for = [&](Trajectory kind, float vx) {
        MotionScript script;
        ObjectSpec o;
        o.texture_seed = 6;
        o.size = 14;
        o.kind = kind;
        o.vx = vx;
        o.vy = 0.0f;
        o.start_x = kind == Trajectory::kLinear ? 14.0f : 28.0f;
        o.start_y = 32.0f;
        script.objects.push_back(o);
        FrameSequence clip = render_script(cfg, script, 9);
        std::vector<FlowField> flows;
        for (int t = 0; t < int(clip.frames.size()) - 1; ++t)
            flows.push_back(estimate_flow(to_gray(clip.frames[size_t(t)]),
                                          to_gray(clip.frames[size_t(t + 1)])));
        return std::pair{clip, flows};
    };

    {
        auto [clip, flows] = flows_for(Trajectory::kLinear, 2.5f);
        std::vector<FlowField> span(flows.begin(), flows.begin() + 4);
        Rect r{12, 24, 28, 16};
        CHECK(direction_consistency(span, r));
    }
    {
        auto [clip, flows] = flows_for(Trajectory::kReversing, 2.5f);
        // span crossing the turnaround at t = (T-1)/2
        std::vector<FlowField> span(flows.begin() + 3, flows.begin() + 8);
        Rect r{20, 24, 30, 16};
        CHECK_FALSE(direction_consistency(span, r));
    }
    {
        auto [clip, flows] = flows_for(Trajectory::kOscillating, 2.5f);
        // tuple span longer than the oscillation period
        std::vector<FlowField> span(flows.begin(), flows.begin() + 6);
        Rect r{16, 22, 26, 20};
        CHECK_FALSE(direction_consistency(span, r));
    }
    {
        // near-zero flow: direction undefined, reported inconsistent
        Tensor f = textured_gray(64, 64, 12);
        std::vector<FlowField> still{estimate_flow(f, f)};
        CHECK_FALSE(direction_consistency(still, {20, 20, 16, 16}));
    }
}

TEST_CASE("shape mismatches are rejected") {
    Tensor a({32, 32}), b({32, 16});
    CHECK_THROWS_AS(estimate_flow(a, b), ShapeError);
}
