#include "opn/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "opn/bytes.hpp"
#include "opn/errors.hpp"
#include "opn/image_io.hpp"

namespace opn {

float order_accuracy(ModelGraph& model, const std::vector<TupleSample>& heldout, int eval_batch) {
    return eval_order_accuracy(model, heldout, eval_batch);
}

TransferTask make_trajectory_task(SceneConfig scene, int train_clips_per_kind,
                                  int test_clips_per_kind, const MiningConfig& mining,
                                  uint64_t seed, int threads) {
    const Trajectory kinds[] = {Trajectory::kLinear, Trajectory::kReversing,
                                Trajectory::kOscillating};
    TransferTask task;
    task.num_classes = 3;
    task.tuple_len = mining.tuple_len;
    task.patch = mining.patch;
    scene.min_objects = 1;
    scene.max_objects = 1;

    MiningConfig mcfg = mining;
    mcfg.strategy = SamplingStrategy::kMotion;  // the object must be in the patch

    uint32_t next_clip_id = 0;
    for (int ki = 0; ki < 3; ++ki) {
        SceneConfig sc = scene;
        sc.allowed_kinds = {kinds[ki]};
        const int total = train_clips_per_kind + test_clips_per_kind;
        std::vector<FrameSequence> clips =
            synth_clips(sc, total, hash_combine(hash_combine(seed, 0x7461736B /*task*/),
                                                uint64_t(ki)),
                        threads);
        for (int c = 0; c < total; ++c) {
            clips[size_t(c)].clip_id = next_clip_id++;
            Rng rng(hash_combine(hash_combine(seed, 0x746D696E), clips[size_t(c)].clip_id));
            std::vector<TupleSample> mined = mine_tuples(clips[size_t(c)], mcfg, rng);
            for (TupleSample& s : mined) {
                TupleSample ordered = unshuffled(s);
                ordered.label = ki;
                (c < train_clips_per_kind ? task.train_set : task.test_set)
                    .push_back(std::move(ordered));
            }
        }
    }
    if (task.train_set.empty() || task.test_set.empty())
        throw ConfigError("trajectory task mined no tuples");
    return task;
}

float downstream_transfer(const TrunkExport* trunk, const TransferTask& task,
                          const TransferOptions& opts, uint64_t seed) {
    ModelConfig mc = trunk ? trunk->source_cfg : opts.model;
    mc.head = HeadKind::kLinear;
    mc.tuple_len = task.tuple_len;
    mc.patch = task.patch;
    mc.classes_override = task.num_classes;
    Rng rng(hash_combine(seed, 0x78666572 /*xfer*/));
    ModelGraph model = ModelGraph::build(mc, rng);
    if (trunk) load_trunk_into(model, *trunk);
    reinit_fc_layers_for_transfer(model, rng, trunk && opts.include_fc6);

    TrainConfig tc = opts.train;
    tc.seed = hash_combine(seed, 0x78747261);
    if (opts.freeze_trunk)
        tc.frozen_prefixes = {"trunk.conv1", "trunk.bn1", "trunk.conv2", "trunk.bn2"};
    train(model, task.train_set, nullptr, tc);
    return eval_order_accuracy(model, task.test_set, opts.train.eval_batch);
}

// --- ablation runner ----------------------------------------------------------

namespace {

uint32_t fingerprint_config(const PipelineConfig& cfg) {
    std::ostringstream os;
    os << cfg.clips << "|" << cfg.scene.width << "x" << cfg.scene.height << "x"
       << cfg.scene.num_frames << "|obj" << cfg.scene.min_objects << "-" << cfg.scene.max_objects
       << "|shortcut" << cfg.scene.color_shortcut << "|n" << cfg.mining.tuple_len << "|p"
       << cfg.mining.patch << "|" << strategy_name(cfg.mining.strategy) << "|"
       << channel_mode_name(cfg.mining.channel) << "|" << input_mode_name(cfg.mining.input) << "|j"
       << cfg.mining.jitter << "|k" << cfg.mining.top_k << "|" << head_kind_name(cfg.model.head)
       << "|b" << cfg.train.batch_size << "|s" << cfg.train.total_steps << "|lr" << cfg.train.lr0;
    std::string s = os.str();
    return crc32(s.data(), s.size());
}

double mean_of(const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / double(v.size());
}

double stddev_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / double(v.size() - 1));
}

}  // namespace

EvalReport run_ablation(const AblationSpec& spec) {
    if (spec.levels.size() < 2) throw ConfigError("ablation needs >= 2 levels");
    if (spec.seeds.empty()) throw ConfigError("ablation needs >= 1 seed");
    if (spec.metric != "order_acc" && spec.metric != "downstream_acc")
        throw ConfigError("unknown ablation metric: " + spec.metric);

    EvalReport report;
    report.axis = spec.axis;
    report.metric = spec.metric;
    for (const AblationLevel& level : spec.levels) {
        LevelResult res;
        res.name = level.name;
        res.config_fingerprint = fingerprint_config(level.cfg);
        for (uint64_t seed : spec.seeds) {
            try {
                PretextResult pre = run_pretext(level.cfg, seed);
                if (spec.metric == "order_acc") {
                    res.per_seed.push_back(double(pre.heldout_accuracy));
                } else {
                    TrunkExport trunk;
                    trunk.source_cfg = pre.model.cfg;
                    for (auto& p : pre.model.params()) {
                        bool conv = p.name.rfind("trunk.conv", 0) == 0 ||
                                    p.name.rfind("trunk.bn1", 0) == 0 ||
                                    p.name.rfind("trunk.bn2", 0) == 0;
                        if (conv) trunk.tensors.emplace_back(p.name, *p.value);
                    }
                    TransferTask task = make_trajectory_task(
                        level.cfg.scene, spec.transfer.train_clips_per_kind,
                        spec.transfer.test_clips_per_kind, level.cfg.mining,
                        hash_combine(seed, 0x61626C74), level.cfg.threads);
                    res.per_seed.push_back(
                        double(downstream_transfer(&trunk, task, spec.transfer.options, seed)));
                }
            } catch (const std::exception& e) {
                res.failures.push_back(level.name + "/seed" + std::to_string(seed) + ": " +
                                       e.what());
            }
        }
        res.mean = mean_of(res.per_seed);
        res.stddev = stddev_of(res.per_seed, res.mean);
        report.levels.push_back(std::move(res));
    }

    const bool enough_seeds = spec.seeds.size() >= 3;
    for (size_t i = 0; i < report.levels.size(); ++i) {
        for (size_t j = i + 1; j < report.levels.size(); ++j) {
            const LevelResult& a = report.levels[i];
            const LevelResult& b = report.levels[j];
            if (!a.failures.empty() || !b.failures.empty()) continue;
            const LevelResult& hi = a.mean >= b.mean ? a : b;
            const LevelResult& lo = a.mean >= b.mean ? b : a;
            OrderingVerdict v;
            v.better = hi.name;
            v.worse = lo.name;
            v.gap = hi.mean - lo.mean;
            v.pooled_std = std::sqrt((hi.stddev * hi.stddev + lo.stddev * lo.stddev) / 2.0);
            v.significant = enough_seeds && v.gap > v.pooled_std;
            report.verdicts.push_back(v);
        }
    }
    return report;
}

AblationSpec make_axis_spec(const std::string& axis, const PipelineConfig& base,
                            const std::vector<uint64_t>& seeds) {
    AblationSpec spec;
    spec.axis = axis;
    spec.seeds = seeds;
    auto add = [&](const std::string& name, PipelineConfig cfg) {
        spec.levels.push_back({name, std::move(cfg)});
    };
    if (axis == "sampling_strategy") {
        spec.metric = "downstream_acc";
        for (auto s : {SamplingStrategy::kMotion, SamplingStrategy::kRandom,
                       SamplingStrategy::kMotionDirection}) {
            PipelineConfig cfg = base;
            cfg.mining.strategy = s;
            add(strategy_name(s), cfg);
        }
    } else if (axis == "channel_strategy") {
        for (auto c : {ChannelMode::kSplit, ChannelMode::kSwap, ChannelMode::kDrop,
                       ChannelMode::kGray, ChannelMode::kRgb}) {
            PipelineConfig cfg = base;
            cfg.mining.channel = c;
            add(channel_mode_name(c), cfg);
        }
    } else if (axis == "jitter") {
        for (int j : {0, base.mining.jitter > 0 ? base.mining.jitter : 2}) {
            PipelineConfig cfg = base;
            cfg.mining.jitter = j;
            add("jitter" + std::to_string(j), cfg);
        }
    } else if (axis == "head_type") {
        for (auto h : {HeadKind::kOpn, HeadKind::kConcat}) {
            PipelineConfig cfg = base;
            cfg.model.head = h;
            add(head_kind_name(h), cfg);
        }
    } else if (axis == "tuple_length") {
        for (int n : {3, 4}) {
            PipelineConfig cfg = base;
            cfg.mining.tuple_len = n;
            add(std::to_string(n) + "-tuple", cfg);
        }
    } else if (axis == "patch_size") {
        for (int p : {24, 32}) {
            PipelineConfig cfg = base;
            cfg.mining.patch = p;
            add(std::to_string(p) + "px", cfg);
        }
    } else if (axis == "dataset_size") {
        for (int frac : {25, 50, 100}) {
            PipelineConfig cfg = base;
            cfg.clips = std::max(8, base.clips * frac / 100);
            add(std::to_string(frac) + "pct", cfg);
        }
    } else {
        throw ConfigError("unknown ablation axis: " + axis);
    }
    return spec;
}

std::string report_text(const EvalReport& report) {
    std::ostringstream os;
    os << "ablation axis: " << report.axis << " (metric: " << report.metric << ")\n";
    for (const LevelResult& l : report.levels) {
        os << "  " << l.name << ": ";
        if (l.per_seed.empty()) {
            os << "no successful runs";
        } else {
            os << "mean " << l.mean << " +- " << l.stddev << " over " << l.per_seed.size()
               << " seeds [";
            for (size_t i = 0; i < l.per_seed.size(); ++i) os << (i ? " " : "") << l.per_seed[i];
            os << "]";
        }
        os << " (config " << std::hex << l.config_fingerprint << std::dec << ")\n";
        for (const std::string& f : l.failures) os << "    FAILED " << f << "\n";
    }
    for (const OrderingVerdict& v : report.verdicts)
        os << "  " << v.better << " > " << v.worse << " by " << v.gap << " (pooled std "
           << v.pooled_std << ")" << (v.significant ? " significant" : " not significant") << "\n";
    return os.str();
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "axis,metric,level,config,mean,stddev,per_seed,failures\n";
    for (const LevelResult& l : report.levels) {
        f << report.axis << "," << report.metric << "," << l.name << "," << std::hex
          << l.config_fingerprint << std::dec << "," << l.mean << "," << l.stddev << ",";
        for (size_t i = 0; i < l.per_seed.size(); ++i) f << (i ? ";" : "") << l.per_seed[i];
        f << ",";
        for (size_t i = 0; i < l.failures.size(); ++i) f << (i ? ";" : "") << l.failures[i];
        f << "\n";
    }
}

// --- color-shortcut robustness --------------------------------------------------

ShortcutRobustness shortcut_robustness(const PipelineConfig& base, ChannelMode strategy,
                                       uint64_t seed) {
    PipelineConfig cfg = base;
    cfg.scene.color_shortcut = true;
    cfg.mining.channel = strategy;
    PretextResult pre = run_pretext(cfg, seed);

    ShortcutRobustness out;
    out.acc_shortcut = pre.heldout_accuracy;

    // Same scene distribution with the drift removed, mined identically from
    // fresh clips.
    SceneConfig clean_scene = cfg.scene;
    clean_scene.color_shortcut = false;
    const int test_clips = std::max(8, int(float(cfg.clips) * cfg.heldout_fraction));
    std::vector<FrameSequence> clean_clips = synth_clips(
        clean_scene, test_clips, hash_combine(seed, 0x636C6561 /*clea*/), cfg.threads);
    std::vector<TupleSample> clean = mine_clips(clean_clips, cfg.mining,
                                                hash_combine(seed, 0x636C6D6E), cfg.threads);
    if (clean.empty()) throw ConfigError("shortcut robustness: no shortcut-free tuples mined");
    out.acc_clean = eval_order_accuracy(pre.model, clean, cfg.train.eval_batch);
    return out;
}

// --- filter export ----------------------------------------------------------------

void export_conv1_filters(ModelGraph& model, const std::string& path) {
    const Tensor& w = model.conv1.w;  // [F, C, kh, kw]
    const int F = w.dim(0), C = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (C != 1 && C != 3) throw ShapeError("filter export: first layer must have 1 or 3 channels");
    const int cols = int(std::ceil(std::sqrt(double(F))));
    const int rows = (F + cols - 1) / cols;
    ImageU8 img;
    img.channels = 3;
    img.width = cols * kw + (cols - 1);
    img.height = rows * kh + (rows - 1);
    img.pixels.assign(size_t(img.width) * img.height * 3, 0);

    for (int f = 0; f < F; ++f) {
        const float* fw = w.ptr() + size_t(f) * C * kh * kw;
        float mn = fw[0], mx = fw[0];
        for (int i = 0; i < C * kh * kw; ++i) {
            mn = std::min(mn, fw[i]);
            mx = std::max(mx, fw[i]);
        }
        const int ty = (f / cols) * (kh + 1), tx = (f % cols) * (kw + 1);
        for (int y = 0; y < kh; ++y) {
            for (int x = 0; x < kw; ++x) {
                for (int c = 0; c < 3; ++c) {
                    int src_c = (C == 3) ? c : 0;
                    float v = fw[(size_t(src_c) * kh + y) * kw + x];
                    uint8_t byte =
                        (mx > mn) ? uint8_t(std::lround((v - mn) / (mx - mn) * 255.0f)) : 128;
                    img.at(ty + y, tx + x, c) = byte;
                }
            }
        }
    }
    write_image(img, path);
}

}  // namespace opn
