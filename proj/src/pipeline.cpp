#include "opn/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>

#include "opn/errors.hpp"
#include "opn/permutations.hpp"

namespace opn {

int default_thread_count() {
    if (const char* env = std::getenv("OPN_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? int(hc) : 1;
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors{size_t(threads)};
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[size_t(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<FrameSequence> synth_clips(const SceneConfig& cfg, int count, uint64_t seed,
                                       int threads) {
    std::vector<FrameSequence> clips{size_t(count)};
    parallel_for(count, threads, [&](int i) {
        clips[size_t(i)] = generate(cfg, hash_combine(hash_combine(seed, 0x636C6970 /*clip*/),
                                                      uint64_t(i)));
        clips[size_t(i)].clip_id = uint32_t(i);
    });
    return clips;
}

std::vector<TupleSample> mine_clips(const std::vector<FrameSequence>& clips,
                                    const MiningConfig& cfg, uint64_t seed, int threads) {
    std::vector<std::vector<TupleSample>> per_clip(clips.size());
    parallel_for(int(clips.size()), threads, [&](int i) {
        Rng rng(hash_combine(hash_combine(seed, 0x6D696E65 /*mine*/),
                             uint64_t(clips[size_t(i)].clip_id)));
        per_clip[size_t(i)] = mine_tuples(clips[size_t(i)], cfg, rng);
    });
    std::vector<TupleSample> all;
    for (auto& v : per_clip)
        for (auto& s : v) all.push_back(std::move(s));
    return all;
}

void split_by_clip(const std::vector<TupleSample>& samples, float heldout_fraction, uint64_t seed,
                   std::vector<TupleSample>* train_out, std::vector<TupleSample>* heldout_out) {
    std::vector<uint32_t> clip_ids;
    for (const TupleSample& s : samples) clip_ids.push_back(s.prov.clip_id);
    std::sort(clip_ids.begin(), clip_ids.end());
    clip_ids.erase(std::unique(clip_ids.begin(), clip_ids.end()), clip_ids.end());
    Rng rng(hash_combine(seed, 0x73706C74 /*splt*/));
    std::vector<uint32_t> shuffled = clip_ids;
    rng.shuffle(shuffled);
    size_t heldout_clips = size_t(std::max(1.0f, heldout_fraction * float(clip_ids.size())));
    std::vector<bool> is_heldout_of(clip_ids.empty() ? 0 : clip_ids.back() + 1, false);
    for (size_t i = 0; i < heldout_clips && i < shuffled.size(); ++i)
        is_heldout_of[shuffled[i]] = true;
    train_out->clear();
    heldout_out->clear();
    for (const TupleSample& s : samples)
        (is_heldout_of[s.prov.clip_id] ? *heldout_out : *train_out).push_back(s);
}

TupleSample unshuffled(const TupleSample& s) {
    Perm order;
    for (uint8_t o : s.prov.shuffle_order) order.push_back(int(o));
    Perm inv = inverse_perm(order);
    TupleSample out = s;
    out.patches = apply_perm(s.patches, inv);
    for (size_t i = 0; i < inv.size(); ++i) out.prov.shuffle_order[i] = uint8_t(i);
    out.label = 0;
    return out;
}

PretextResult run_pretext_on_clips(const PipelineConfig& cfg,
                                   const std::vector<FrameSequence>& clips, uint64_t seed) {
    std::vector<TupleSample> samples =
        mine_clips(clips, cfg.mining, hash_combine(seed, 0x6D696E65), cfg.threads);
    if (samples.size() < 8) throw ConfigError("pipeline: mined too few tuples to train");
    std::vector<TupleSample> train_set, heldout;
    split_by_clip(samples, cfg.heldout_fraction, seed, &train_set, &heldout);

    ModelConfig mc = cfg.model;
    mc.tuple_len = cfg.mining.tuple_len;
    mc.patch = cfg.mining.patch;
    Rng init_rng(hash_combine(seed, 0x696E6974 /*init*/));
    PretextResult res;
    res.model = ModelGraph::build(mc, init_rng);
    TrainConfig tc = cfg.train;
    tc.seed = hash_combine(seed, 0x7472616E /*tran*/);
    res.log = train(res.model, train_set, &heldout, tc);
    res.heldout_accuracy =
        res.log.evals.empty() ? 0.0f : res.log.evals.back().eval_acc;
    res.train_tuples = train_set.size();
    res.heldout_tuples = heldout.size();
    return res;
}

PretextResult run_pretext(const PipelineConfig& cfg, uint64_t seed) {
    std::vector<FrameSequence> clips =
        synth_clips(cfg.scene, cfg.clips, hash_combine(seed, 0x73796E74 /*synt*/), cfg.threads);
    return run_pretext_on_clips(cfg, clips, seed);
}

}  // namespace opn
