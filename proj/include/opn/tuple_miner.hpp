#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opn/optical_flow.hpp"
#include "opn/rng.hpp"
#include "opn/tensor.hpp"
#include "opn/video_synth.hpp"

namespace opn {

enum class ChannelMode : uint8_t { kSplit = 0, kSwap = 1, kDrop = 2, kGray = 3, kRgb = 4 };
enum class InputMode : uint8_t { kRgbFrames = 0, kDiff = 1 };
enum class SamplingStrategy : uint8_t { kMotion = 0, kMotionDirection = 1, kRandom = 2 };

const char* channel_mode_name(ChannelMode m);
ChannelMode channel_mode_from_name(const std::string& s);
const char* input_mode_name(InputMode m);
InputMode input_mode_from_name(const std::string& s);
const char* strategy_name(SamplingStrategy s);
SamplingStrategy strategy_from_name(const std::string& s);

struct MiningConfig {
    int tuple_len = 4;
    int patch = 32;
    int t_min = 0;
    int t_max = -1;              // -1: last frame of the clip
    int gap_min = 1, gap_max = 3;
    SamplingStrategy strategy = SamplingStrategy::kMotion;
    float motion_threshold = -1.0f;  // >= 0 switches from top-k to threshold mode
    int top_k = 4;                   // tuples per clip in top-k mode
    int jitter = 2;                  // J: per-frame shift uniform in [-J, J]^2
    ChannelMode channel = ChannelMode::kSplit;
    InputMode input = InputMode::kRgbFrames;
    int spatial_stride = 8;

    int frames_needed() const { return tuple_len + (input == InputMode::kDiff ? 1 : 0); }
};

// Where a sample came from, enough to rebuild its patches from the clip.
struct Provenance {
    uint32_t clip_id = 0;
    std::vector<uint16_t> frame_indices;        // chronological, strictly increasing
    uint16_t rect_x = 0, rect_y = 0, rect_w = 0, rect_h = 0;
    std::vector<std::pair<int8_t, int8_t>> jitter_offsets;  // per source frame
    std::vector<uint8_t> aug_codes;             // per patch (channel choice)
    std::vector<uint8_t> shuffle_order;         // shuffled[i] = chrono[order[i]]
};

struct TupleSample {
    std::vector<Tensor> patches;  // n x [3,P,P], shuffled order, values on the 1/255 grid
    int label = 0;                // class id of the restoring permutation
    Provenance prov;
};

struct DatasetMeta {
    int tuple_len = 4;
    ChannelMode channel = ChannelMode::kSplit;
    InputMode input = InputMode::kRgbFrames;
    int patch = 32;
};

// Fig-3-style mining: slide windows over the flow magnitude, keep the
// top-k (or above-threshold) tuples, jitter, channel-transform, shuffle.
// Returns an empty list when nothing qualifies.
std::vector<TupleSample> mine_tuples(const FrameSequence& clip, const MiningConfig& cfg, Rng& rng);

// Per-frame jittered copies of a base rectangle, clamped to the frame.
std::vector<Rect> spatial_jitter(const Rect& base, int jitter, int count, int frame_w, int frame_h,
                                 Rng& rng, std::vector<std::pair<int8_t, int8_t>>* offsets = nullptr);

Tensor channel_transform(const Tensor& patch, ChannelMode mode, Rng& rng,
                         uint8_t* aug_code = nullptr);
// Re-applies a recorded choice (for provenance reconstruction).
Tensor channel_transform_coded(const Tensor& patch, ChannelMode mode, uint8_t aug_code);

// Diff(t) = patch(t+1) - patch(t), rescaled from [-1,1] to [0,1].
std::vector<Tensor> diff_transform(const std::vector<Tensor>& chrono_patches);

Tensor crop_patch(const Tensor& frame, const Rect& r);

// Rebuilds the chronological (pre-shuffle) patches of a sample from its clip.
std::vector<Tensor> reconstruct_chronological(const FrameSequence& clip, const Provenance& prov,
                                              const MiningConfig& cfg);

// Dataset file ("OPNT"): see docs/FORMATS.md for the byte-exact layout.
void write_dataset(const std::string& path, const std::vector<TupleSample>& samples,
                   const DatasetMeta& meta);
std::vector<TupleSample> read_dataset(const std::string& path, DatasetMeta* meta = nullptr);

}  // namespace opn
