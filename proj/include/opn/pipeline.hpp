#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "opn/model.hpp"
#include "opn/trainer.hpp"
#include "opn/tuple_miner.hpp"
#include "opn/video_synth.hpp"

namespace opn {

// End-to-end recipe: synth -> mine -> split -> train -> evaluate. Shared by
// the CLI, the ablation runner and the acceptance suite.
struct PipelineConfig {
    SceneConfig scene;
    int clips = 64;
    MiningConfig mining;
    ModelConfig model;
    TrainConfig train;
    float heldout_fraction = 0.15f;
    int threads = 1;
};

// Per-clip seeds derive from (seed, index): identical output for any thread
// count.
std::vector<FrameSequence> synth_clips(const SceneConfig& cfg, int count, uint64_t seed,
                                       int threads = 1);

std::vector<TupleSample> mine_clips(const std::vector<FrameSequence>& clips,
                                    const MiningConfig& cfg, uint64_t seed, int threads = 1);

// Splits at clip granularity so held-out tuples come from unseen clips.
void split_by_clip(const std::vector<TupleSample>& samples, float heldout_fraction, uint64_t seed,
                   std::vector<TupleSample>* train_out, std::vector<TupleSample>* heldout_out);

// Chronologically reordered copy of a mined sample (for downstream tasks).
TupleSample unshuffled(const TupleSample& s);

struct PretextResult {
    ModelGraph model;
    TrainLog log;
    float heldout_accuracy = 0;
    size_t train_tuples = 0, heldout_tuples = 0;
};

// Runs the whole pretext recipe with every stage seeded from `seed`.
PretextResult run_pretext(const PipelineConfig& cfg, uint64_t seed);

// Mines pretext tuples from already-generated clips (shared by run_pretext
// and callers that reuse clip sets).
PretextResult run_pretext_on_clips(const PipelineConfig& cfg,
                                   const std::vector<FrameSequence>& clips, uint64_t seed);

int default_thread_count();

// Runs fn(i) for i in [0, count), over `threads` workers.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace opn
