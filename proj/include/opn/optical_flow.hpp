#pragma once

#include <vector>

#include "opn/tensor.hpp"

namespace opn {

struct FlowField {
    Tensor u, v;  // [H,W] displacement in pixels (f0 -> f1)

    Tensor magnitude() const;
    int height() const { return u.dim(0); }
    int width() const { return u.dim(1); }
};

struct LkParams {
    int levels = 3;       // pyramid levels, 2x downscale each
    int window = 5;       // odd square window
    int iterations = 3;   // warp iterations per level
};

struct Rect {
    int x = 0, y = 0, w = 0, h = 0;

    bool inside(int fw, int fh) const {
        return w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= fw && y + h <= fh;
    }
};

// Dense pyramidal Lucas-Kanade between two grayscale frames in [0,1].
FlowField estimate_flow(const Tensor& f0, const Tensor& f1, const LkParams& params = {});

// Border margin excluded from flow accuracy statistics: the window footprint
// at the coarsest pyramid level, expressed in full-resolution pixels.
int flow_stat_margin(const LkParams& params = {});

// Mean endpoint error vs a constant ground-truth translation over the
// interior (margin excluded).
float mean_endpoint_error(const FlowField& flow, float dx, float dy, const LkParams& params = {});

// Mean flow magnitude over the interior.
float mean_magnitude_interior(const FlowField& flow, const LkParams& params = {});

// Sum over fields of the mean flow magnitude within the region.
float patch_motion_score(const std::vector<FlowField>& flows, const Rect& region);

// True iff the mean flow direction within the region stays inside an angular
// cone across all fields. Near-zero mean flow counts as inconsistent.
bool direction_consistency(const std::vector<FlowField>& flows, const Rect& region,
                           float cone_deg = 45.0f, float min_mean_flow = 0.15f);

}  // namespace opn
