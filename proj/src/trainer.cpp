#include "opn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "opn/checkpoint.hpp"
#include "opn/errors.hpp"

namespace opn {

namespace {

std::vector<long long> effective_decay_steps(const TrainConfig& cfg) {
    if (!cfg.decay_steps.empty()) {
        for (size_t i = 1; i < cfg.decay_steps.size(); ++i)
            if (cfg.decay_steps[i] <= cfg.decay_steps[i - 1])
                throw ConfigError("decay_steps must be strictly increasing");
        return cfg.decay_steps;
    }
    return {(cfg.total_steps * 6) / 10, (cfg.total_steps * 17) / 20};
}

int argmax_row(const float* row, int k) {
    int best = 0;
    for (int j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

}  // namespace

float lr_at(long long step, const TrainConfig& cfg) {
    if (step < 0) throw ConfigError("lr_at: negative step");
    int count = 0;
    for (long long d : effective_decay_steps(cfg))
        if (step >= d) ++count;
    float lr = cfg.lr0;
    for (int i = 0; i < count; ++i) lr /= cfg.lr_decay_factor;
    return lr;
}

void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, float lr,
                       float momentum) {
    check_same_shape(param, grad, "sgd_momentum_step");
    check_same_shape(param, velocity, "sgd_momentum_step");
    for (size_t i = 0; i < param.data.size(); ++i) {
        velocity[i] = momentum * velocity[i] - lr * grad[i];
        param[i] += velocity[i];
    }
}

std::pair<Tensor, std::vector<int>> assemble_batch(const std::vector<TupleSample>& samples,
                                                   const std::vector<int>& indices) {
    if (indices.empty()) throw ShapeError("assemble_batch: empty index list");
    const TupleSample& first = samples[size_t(indices[0])];
    const int n = int(first.patches.size());
    const int P = first.patches[0].dim(1);
    Tensor batch({int(indices.size()), n, 3, P, P});
    std::vector<int> labels;
    labels.reserve(indices.size());
    const size_t chw = 3u * size_t(P) * P;
    for (size_t s = 0; s < indices.size(); ++s) {
        const TupleSample& sample = samples[size_t(indices[s])];
        if (int(sample.patches.size()) != n)
            throw ShapeError("assemble_batch: inconsistent tuple length");
        for (int b = 0; b < n; ++b)
            std::copy_n(sample.patches[size_t(b)].ptr(), chw,
                        batch.ptr() + (s * size_t(n) + size_t(b)) * chw);
        labels.push_back(sample.label);
    }
    return {std::move(batch), std::move(labels)};
}

float eval_order_accuracy(ModelGraph& model, const std::vector<TupleSample>& samples,
                          int eval_batch) {
    if (samples.empty()) throw ShapeError("eval: empty dataset");
    ForwardCtx ctx;  // eval mode
    const int k = model.cfg.num_classes();
    long long correct = 0;
    for (size_t start = 0; start < samples.size(); start += size_t(eval_batch)) {
        size_t end = std::min(samples.size(), start + size_t(eval_batch));
        std::vector<int> idx;
        for (size_t i = start; i < end; ++i) idx.push_back(int(i));
        auto [batch, labels] = assemble_batch(samples, idx);
        Tensor logits = model.forward(batch, ctx);
        if (labels[0] >= k || *std::max_element(labels.begin(), labels.end()) >= k)
            throw ShapeError("eval: label outside model class count");
        for (size_t i = 0; i < labels.size(); ++i)
            if (argmax_row(logits.ptr() + i * size_t(k), k) == labels[i]) ++correct;
    }
    return float(double(correct) / double(samples.size()));
}

TrainLog train(ModelGraph& model, const std::vector<TupleSample>& train_set,
               const std::vector<TupleSample>* heldout, const TrainConfig& cfg,
               TrainerState* state) {
    if (cfg.batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch norm)");
    if (train_set.size() < 2) throw ConfigError("training set too small");
    if (int(train_set[0].patches.size()) != model.cfg.tuple_len)
        throw ConfigError("dataset tuple length does not match the model");
    for (const TupleSample& s : train_set)
        if (s.label < 0 || s.label >= model.cfg.num_classes())
            throw ConfigError("dataset label outside the model's class count");

    TrainerState local_state;
    TrainerState& st = state ? *state : local_state;
    auto params = model.params();
    for (auto& p : params) {
        if (!p.grad) continue;
        auto it = st.velocity.find(p.name);
        if (it == st.velocity.end()) st.velocity[p.name] = Tensor(p.value->shape);
    }

    const int B = std::min<int>(cfg.batch_size, int(train_set.size()));
    const long long steps_per_epoch =
        std::max<long long>(1, static_cast<long long>(train_set.size()) / B);
    std::vector<int> order;
    long long order_epoch = -1;

    TrainLog log;
    const auto t0 = std::chrono::steady_clock::now();
    for (long long step = st.step; step < cfg.total_steps; ++step) {
        const long long epoch = step / steps_per_epoch;
        if (epoch != order_epoch) {
            order.resize(train_set.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
            Rng shuffle_rng(hash_combine(hash_combine(cfg.seed, 0x6F726472 /*ordr*/), uint64_t(epoch)));
            shuffle_rng.shuffle(order);
            order_epoch = epoch;
        }
        const long long pos = (step % steps_per_epoch) * B;
        std::vector<int> idx(order.begin() + pos, order.begin() + pos + B);
        auto [batch, labels] = assemble_batch(train_set, idx);

        Rng step_rng(hash_combine(hash_combine(cfg.seed, 0x64726F70 /*drop*/), uint64_t(step)));
        ForwardCtx ctx;
        ctx.train = true;
        ctx.rng = &step_rng;
        Tensor logits = model.forward(batch, ctx);
        SoftmaxCeOut<float> ce = softmax_cross_entropy(logits, labels);
        if (!std::isfinite(ce.loss)) {
            std::ostringstream os;
            os << "non-finite loss at step " << step << " (lr " << lr_at(step, cfg)
               << "), batch clips:";
            for (int i : idx) os << " " << train_set[size_t(i)].prov.clip_id;
            throw NumericError(os.str());
        }
        int correct = 0;
        const int k = model.cfg.num_classes();
        for (size_t i = 0; i < labels.size(); ++i)
            if (argmax_row(logits.ptr() + i * size_t(k), k) == labels[i]) ++correct;

        model.zero_grad();
        model.backward(ce.dlogits);

        const float lr = lr_at(step, cfg);
        for (auto& p : params) {
            if (!p.grad) continue;
            bool frozen = false;
            for (const std::string& prefix : cfg.frozen_prefixes)
                if (p.name.rfind(prefix, 0) == 0) frozen = true;
            if (frozen) continue;
            if (cfg.weight_decay > 0.0f) {
                Tensor& g = *p.grad;
                const Tensor& w = *p.value;
                for (size_t i = 0; i < g.data.size(); ++i) g[i] += cfg.weight_decay * w[i];
            }
            sgd_momentum_step(*p.value, *p.grad, st.velocity[p.name], lr, cfg.momentum);
        }

        log.steps.push_back({step, lr, ce.loss, float(correct) / float(B)});
        st.step = step + 1;

        if (heldout && cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0)
            log.evals.push_back({step + 1, eval_order_accuracy(model, *heldout, cfg.eval_batch)});
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
            (step + 1) % cfg.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "/ckpt_%06lld.opnc", step + 1);
            save_training_checkpoint(cfg.checkpoint_dir + name, model, st, cfg.seed);
        }
        if (cfg.verbose && (step % 25 == 0 || step + 1 == cfg.total_steps))
            std::fprintf(stderr, "step %lld lr %.4g loss %.4f acc %.3f\n", step, double(lr),
                         double(ce.loss), double(correct) / double(B));
    }
    if (heldout && (cfg.eval_every == 0 || cfg.total_steps % cfg.eval_every != 0))
        log.evals.push_back({st.step, eval_order_accuracy(model, *heldout, cfg.eval_batch)});
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "step,lr,loss,train_acc,eval_acc\n";
    size_t ei = 0;
    for (const auto& row : log.steps) {
        f << row.step << "," << row.lr << "," << row.loss << "," << row.train_acc << ",";
        if (ei < log.evals.size() && log.evals[ei].step == row.step + 1) {
            f << log.evals[ei].eval_acc;
            ++ei;
        }
        f << "\n";
    }
    for (; ei < log.evals.size(); ++ei)
        f << log.evals[ei].step << ",,,," << log.evals[ei].eval_acc << "\n";
}

void save_training_checkpoint(const std::string& path, ModelGraph& model,
                              const TrainerState& state, uint64_t seed) {
    CheckpointExtra extra;
    extra.step = state.step;
    extra.rng_state = seed;
    std::vector<std::pair<std::string, const Tensor*>> opt;
    for (const auto& [name, t] : state.velocity) opt.emplace_back("opt.v." + name, &t);
    save_checkpoint(path, model, extra, opt);
}

ModelGraph load_training_checkpoint(const std::string& path, TrainerState& state, uint64_t* seed) {
    CheckpointExtra extra;
    std::map<std::string, Tensor> extras;
    ModelGraph model = load_checkpoint(path, &extra, &extras);
    state.step = extra.step;
    state.velocity.clear();
    for (auto& [name, t] : extras)
        if (name.rfind("opt.v.", 0) == 0) state.velocity[name.substr(6)] = std::move(t);
    if (seed) *seed = extra.rng_state;
    return model;
}

}  // namespace opn
