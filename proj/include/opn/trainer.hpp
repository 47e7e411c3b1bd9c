#pragma once

#include <map>
#include <string>
#include <vector>

#include "opn/model.hpp"
#include "opn/tuple_miner.hpp"

namespace opn {

struct TrainConfig {
    int batch_size = 128;
    float lr0 = 1e-2f;
    float momentum = 0.9f;
    float lr_decay_factor = 10.0f;
    std::vector<long long> decay_steps;  // empty: 60% and 85% of total_steps
    long long total_steps = 400;
    uint64_t seed = 0;
    long long eval_every = 0;       // 0: evaluate only at the end (if heldout given)
    long long checkpoint_every = 0; // 0: no periodic checkpoints
    float weight_decay = 0.0f;      // hook; off by default
    std::string checkpoint_dir;
    int eval_batch = 256;
    std::vector<std::string> frozen_prefixes;  // parameters excluded from updates
    bool verbose = false;
};

struct TrainStepRow {
    long long step = 0;
    float lr = 0, loss = 0, train_acc = 0;
};

struct EvalRow {
    long long step = 0;
    float eval_acc = 0;
};

struct TrainLog {
    std::vector<TrainStepRow> steps;
    std::vector<EvalRow> evals;
    double wall_seconds = 0;
};

// Momentum buffers + step counter; survives checkpoint save/resume so a
// resumed run is bit-identical to an uninterrupted one.
struct TrainerState {
    std::map<std::string, Tensor> velocity;
    long long step = 0;
};

// lr0 / decay_factor^(#decay steps reached).
float lr_at(long long step, const TrainConfig& cfg);

// v <- momentum*v - lr*g; p <- p + v.
void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, float lr,
                       float momentum);

// [N, n, 3, P, P] batch plus labels from dataset rows.
std::pair<Tensor, std::vector<int>> assemble_batch(const std::vector<TupleSample>& samples,
                                                   const std::vector<int>& indices);

// Argmax accuracy in eval mode (dropout off, running batch-norm stats).
float eval_order_accuracy(ModelGraph& model, const std::vector<TupleSample>& samples,
                          int eval_batch = 256);

// Seeded, deterministic SGD loop. Data order, dropout masks and epoch
// shuffles all derive from (cfg.seed, step), so resuming from `state`
// continues the exact same trajectory.
TrainLog train(ModelGraph& model, const std::vector<TupleSample>& train_set,
               const std::vector<TupleSample>* heldout, const TrainConfig& cfg,
               TrainerState* state = nullptr);

void write_train_log_csv(const TrainLog& log, const std::string& path);

// Checkpoint with optimizer state attached ("opt.v.<param>" tensors).
void save_training_checkpoint(const std::string& path, ModelGraph& model,
                              const TrainerState& state, uint64_t seed);
ModelGraph load_training_checkpoint(const std::string& path, TrainerState& state, uint64_t* seed);

}  // namespace opn
