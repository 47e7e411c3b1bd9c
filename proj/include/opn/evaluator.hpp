#pragma once

#include <string>
#include <vector>

#include "opn/checkpoint.hpp"
#include "opn/pipeline.hpp"

namespace opn {

// Argmax accuracy on a held-out set (eval mode).
float order_accuracy(ModelGraph& model, const std::vector<TupleSample>& heldout,
                     int eval_batch = 256);

// Labeled surrogate for the paper's downstream problem: classify the
// trajectory kind of a single-object clip from an ordered patch tuple.
struct TransferTask {
    std::vector<TupleSample> train_set, test_set;
    int num_classes = 3;
    int tuple_len = 4;
    int patch = 32;
};

TransferTask make_trajectory_task(SceneConfig scene, int train_clips_per_kind,
                                  int test_clips_per_kind, const MiningConfig& mining,
                                  uint64_t seed, int threads = 1);

struct TransferOptions {
    TrainConfig train;        // schedule for the fine-tune
    bool freeze_trunk = false;
    bool include_fc6 = false; // also copy fc6/bn6 from the source
    ModelConfig model;        // trunk dims (overridden by the source cfg when given)
};

// Fine-tunes a fresh classifier (head init Gaussian 0/0.005) on the task;
// trunk copied from `trunk` or randomly initialized when null. Returns test
// accuracy.
float downstream_transfer(const TrunkExport* trunk, const TransferTask& task,
                          const TransferOptions& opts, uint64_t seed);

// --- ablation runner ---------------------------------------------------------

struct AblationLevel {
    std::string name;
    PipelineConfig cfg;
};

struct TransferSettings {
    int train_clips_per_kind = 24;
    int test_clips_per_kind = 10;
    TransferOptions options;
};

struct AblationSpec {
    std::string axis;
    std::vector<AblationLevel> levels;   // >= 2
    std::vector<uint64_t> seeds;         // >= 3 for ordering verdicts
    std::string metric = "order_acc";    // "order_acc" | "downstream_acc"
    TransferSettings transfer;
};

struct LevelResult {
    std::string name;
    std::vector<double> per_seed;
    double mean = 0, stddev = 0;
    std::vector<std::string> failures;   // explicit entries; never dropped silently
    uint32_t config_fingerprint = 0;
};

struct OrderingVerdict {
    std::string better, worse;
    double gap = 0, pooled_std = 0;
    bool significant = false;  // gap > 1 pooled stddev over >= 3 seeds
};

struct EvalReport {
    std::string axis, metric;
    std::vector<LevelResult> levels;
    std::vector<OrderingVerdict> verdicts;
};

EvalReport run_ablation(const AblationSpec& spec);

// Default level sets for the paper's ablation axes.
AblationSpec make_axis_spec(const std::string& axis, const PipelineConfig& base,
                            const std::vector<uint64_t>& seeds);

std::string report_text(const EvalReport& report);
void write_report_csv(const EvalReport& report, const std::string& path);

// --- color-shortcut robustness ------------------------------------------------

// Trains on color-shortcut scenes with the given channel strategy, then
// evaluates on held-out shortcut clips vs shortcut-free clips.
struct ShortcutRobustness {
    float acc_shortcut = 0;  // held-out clips with the color drift
    float acc_clean = 0;     // same scenes, drift removed
    float drop() const { return acc_shortcut - acc_clean; }
};

ShortcutRobustness shortcut_robustness(const PipelineConfig& base, ChannelMode strategy,
                                       uint64_t seed);

// --- filter export -------------------------------------------------------------

// First-layer filters, each min-max normalized to [0,255] (zero range maps to
// mid gray), tiled with 1-px separators.
void export_conv1_filters(ModelGraph& model, const std::string& path);

}  // namespace opn
