#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opn/rng.hpp"
#include "opn/tensor.hpp"

namespace opn {

enum class Trajectory : uint8_t { kStatic = 0, kLinear = 1, kReversing = 2, kOscillating = 3 };

const char* trajectory_name(Trajectory t);
Trajectory trajectory_from_name(const std::string& name);

struct ObjectSpec {
    uint64_t texture_seed = 0;
    int size = 12;                      // square side, px
    Trajectory kind = Trajectory::kLinear;
    float vx = 0, vy = 0;               // px/frame (amplitude direction for oscillating)
    float start_x = 0, start_y = 0;     // center at frame 0
    float tint_theta = 0;               // angle in the isoluminant color plane
    float tint_radius = 0;
};

struct MotionScript {
    std::vector<ObjectSpec> objects;
    // Object center per frame, exact ground truth for the rendered content.
    std::vector<std::vector<std::pair<float, float>>> positions;
};

struct FrameSequence {
    std::vector<Tensor> frames;  // each [3,H,W], values in [0,1] on the 1/255 grid
    float fps = 8.0f;
    MotionScript script;
    uint32_t clip_id = 0;
    uint64_t seed = 0;

    int height() const { return frames.empty() ? 0 : frames[0].dim(1); }
    int width() const { return frames.empty() ? 0 : frames[0].dim(2); }
};

struct SceneConfig {
    int width = 64, height = 64;
    int num_frames = 16;
    float fps = 8.0f;
    int min_objects = 1, max_objects = 3;
    int min_obj_size = 10, max_obj_size = 16;
    float min_speed = 1.5f, max_speed = 3.0f;
    float min_contrast = 0.2f;          // luminance gap between object and background
    int osc_period = 6;                 // frames per oscillation cycle
    // Color-shortcut variant: the whole frame's tint angle advances by
    // shortcut_delta radians per frame, so color alone reveals order.
    bool color_shortcut = false;
    float shortcut_delta = 0.3f;
    bool shortcut_luma_locked = true;   // false adds a per-frame brightness drift
    float shortcut_brightness_step = 0.015f;
    // Restrict trajectory kinds; empty means {linear, reversing, oscillating, static}
    // weighted by the generator defaults.
    std::vector<Trajectory> allowed_kinds;
};

// Deterministic given (config, seed). Throws ConfigError on infeasible
// geometry (object larger than frame / frame too small).
FrameSequence generate(const SceneConfig& cfg, uint64_t seed);

// Renders a handcrafted script: positions are derived from the object specs,
// textures from their seeds. Lets tests pin exact trajectories.
FrameSequence render_script(const SceneConfig& cfg, MotionScript script, uint64_t seed);

// Same scene machinery with the monotone color drift enabled.
FrameSequence color_shortcut_variant(SceneConfig cfg, uint64_t seed);

// Angle of an RGB color in the isoluminant tint plane (used to verify the
// shortcut's monotone drift).
float shortcut_hue_angle(float r, float g, float b);

// Fraction of frame area not covered by any object in any frame.
float static_area_fraction(const FrameSequence& clip);

// Grayscale luminance 0.299 R + 0.587 G + 0.114 B -> [H,W].
Tensor to_gray(const Tensor& rgb);

// Clip persistence: a directory of raw 8-bit planar RGB frames plus a
// key=value metadata sidecar. See docs/FORMATS.md.
void save_clip(const FrameSequence& clip, const std::string& dir);
FrameSequence load_clip(const std::string& dir);

void save_clips(const std::vector<FrameSequence>& clips, const std::string& dir);
std::vector<FrameSequence> load_clips(const std::string& dir);

}  // namespace opn
