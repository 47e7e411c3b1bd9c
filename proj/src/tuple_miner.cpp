#include "opn/tuple_miner.hpp"

#include <algorithm>
#include <cmath>

#include "opn/bytes.hpp"
#include "opn/errors.hpp"
#include "opn/permutations.hpp"

namespace opn {

namespace {

constexpr char kMagic[4] = {'O', 'P', 'N', 'T'};
constexpr uint16_t kVersion = 1;

void quantize_u8_grid(Tensor& t) {
    for (float& v : t.data) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

// Summed-area table over [H,W]; rect sums in O(1) for candidate ranking.
struct Integral {
    int h = 0, w = 0;
    std::vector<double> s;  // (h+1) x (w+1)

    explicit Integral(const Tensor& img) : h(img.dim(0)), w(img.dim(1)), s(size_t(h + 1) * (w + 1), 0.0) {
        for (int y = 0; y < h; ++y) {
            double row = 0;
            for (int x = 0; x < w; ++x) {
                row += double(img[size_t(y) * w + x]);
                s[size_t(y + 1) * (w + 1) + x + 1] = s[size_t(y) * (w + 1) + x + 1] + row;
            }
        }
    }

    double rect_sum(const Rect& r) const {
        const int W = w + 1;
        return s[size_t(r.y + r.h) * W + r.x + r.w] - s[size_t(r.y) * W + r.x + r.w] -
               s[size_t(r.y + r.h) * W + r.x] + s[size_t(r.y) * W + r.x];
    }
};

struct Candidate {
    int anchor_index = 0;           // into the per-anchor frame-index lists
    Rect rect;
    float score = 0;
    bool direction_ok = false;
};

}  // namespace

const char* channel_mode_name(ChannelMode m) {
    switch (m) {
        case ChannelMode::kSplit: return "split";
        case ChannelMode::kSwap: return "swap";
        case ChannelMode::kDrop: return "drop";
        case ChannelMode::kGray: return "gray";
        case ChannelMode::kRgb: return "rgb";
    }
    return "?";
}

ChannelMode channel_mode_from_name(const std::string& s) {
    if (s == "split") return ChannelMode::kSplit;
    if (s == "swap") return ChannelMode::kSwap;
    if (s == "drop") return ChannelMode::kDrop;
    if (s == "gray") return ChannelMode::kGray;
    if (s == "rgb") return ChannelMode::kRgb;
    throw ConfigError("unknown channel strategy: " + s);
}

const char* input_mode_name(InputMode m) {
    return m == InputMode::kDiff ? "diff" : "rgb";
}

InputMode input_mode_from_name(const std::string& s) {
    if (s == "rgb") return InputMode::kRgbFrames;
    if (s == "diff") return InputMode::kDiff;
    throw ConfigError("unknown input mode: " + s);
}

const char* strategy_name(SamplingStrategy s) {
    switch (s) {
        case SamplingStrategy::kMotion: return "motion";
        case SamplingStrategy::kMotionDirection: return "motion_direction";
        case SamplingStrategy::kRandom: return "random";
    }
    return "?";
}

SamplingStrategy strategy_from_name(const std::string& s) {
    if (s == "motion") return SamplingStrategy::kMotion;
    if (s == "motion_direction") return SamplingStrategy::kMotionDirection;
    if (s == "random") return SamplingStrategy::kRandom;
    throw ConfigError("unknown sampling strategy: " + s);
}

Tensor crop_patch(const Tensor& frame, const Rect& r) {
    if (frame.ndim() != 3 || frame.dim(0) != 3) throw ShapeError("crop_patch: frame must be [3,H,W]");
    const int h = frame.dim(1), w = frame.dim(2);
    if (!r.inside(w, h)) throw ShapeError("crop_patch: rect outside frame");
    Tensor out({3, r.h, r.w});
    for (int c = 0; c < 3; ++c) {
        const float* src = frame.ptr() + size_t(c) * h * w;
        float* dst = out.ptr() + size_t(c) * r.h * r.w;
        for (int y = 0; y < r.h; ++y)
            std::copy_n(src + size_t(r.y + y) * w + r.x, r.w, dst + size_t(y) * r.w);
    }
    return out;
}

std::vector<Rect> spatial_jitter(const Rect& base, int jitter, int count, int frame_w, int frame_h,
                                 Rng& rng, std::vector<std::pair<int8_t, int8_t>>* offsets) {
    if (jitter < 0) throw ConfigError("jitter must be >= 0");
    std::vector<Rect> rects;
    rects.reserve(size_t(count));
    if (offsets) offsets->clear();
    for (int i = 0; i < count; ++i) {
        int dx = jitter > 0 ? rng.uniform_int(-jitter, jitter) : 0;
        int dy = jitter > 0 ? rng.uniform_int(-jitter, jitter) : 0;
        Rect r = base;
        r.x = std::clamp(base.x + dx, 0, frame_w - base.w);
        r.y = std::clamp(base.y + dy, 0, frame_h - base.h);
        rects.push_back(r);
        if (offsets) offsets->emplace_back(int8_t(dx), int8_t(dy));
    }
    return rects;
}

namespace {

Tensor apply_channel_code(const Tensor& patch, ChannelMode mode, uint8_t code) {
    const int p = patch.dim(1);
    const size_t hw = size_t(p) * patch.dim(2);
    Tensor out(patch.shape);
    const float* src = patch.ptr();
    float* dst = out.ptr();
    switch (mode) {
        case ChannelMode::kSplit: {
            const float* ch = src + size_t(code) * hw;
            for (int c = 0; c < 3; ++c) std::copy_n(ch, hw, dst + size_t(c) * hw);
            break;
        }
        case ChannelMode::kSwap: {
            static const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
            int a = pairs[code][0], b = pairs[code][1];
            out.data = patch.data;
            std::copy_n(src + size_t(a) * hw, hw, dst + size_t(b) * hw);
            std::copy_n(src + size_t(b) * hw, hw, dst + size_t(a) * hw);
            break;
        }
        case ChannelMode::kDrop: {
            out.data = patch.data;
            for (int c = 0; c < 3; ++c)
                if (code & (1 << c)) std::fill_n(dst + size_t(c) * hw, hw, 0.0f);
            break;
        }
        case ChannelMode::kGray: {
            for (size_t i = 0; i < hw; ++i) {
                float lum = 0.299f * src[i] + 0.587f * src[hw + i] + 0.114f * src[2 * hw + i];
                dst[i] = lum;
                dst[hw + i] = lum;
                dst[2 * hw + i] = lum;
            }
            break;
        }
        case ChannelMode::kRgb:
            out.data = patch.data;
            break;
    }
    return out;
}

uint8_t draw_channel_code(ChannelMode mode, Rng& rng) {
    switch (mode) {
        case ChannelMode::kSplit: return uint8_t(rng.uniform_int(0, 2));
        case ChannelMode::kSwap: return uint8_t(rng.uniform_int(0, 2));
        case ChannelMode::kDrop: {
            // one or two channels zeroed
            if (rng.uniform_int(0, 1) == 0) return uint8_t(1 << rng.uniform_int(0, 2));
            return uint8_t(0x7 & ~(1 << rng.uniform_int(0, 2)));
        }
        case ChannelMode::kGray:
        case ChannelMode::kRgb: return 0;
    }
    return 0;
}

}  // namespace

Tensor channel_transform(const Tensor& patch, ChannelMode mode, Rng& rng, uint8_t* aug_code) {
    if (patch.ndim() != 3 || patch.dim(0) != 3)
        throw ShapeError("channel_transform: patch must be [3,P,P]");
    uint8_t code = draw_channel_code(mode, rng);
    if (aug_code) *aug_code = code;
    return apply_channel_code(patch, mode, code);
}

Tensor channel_transform_coded(const Tensor& patch, ChannelMode mode, uint8_t aug_code) {
    return apply_channel_code(patch, mode, aug_code);
}

std::vector<Tensor> diff_transform(const std::vector<Tensor>& chrono_patches) {
    if (chrono_patches.size() < 2)
        throw ShapeError("diff_transform: need at least 2 chronological patches");
    std::vector<Tensor> out;
    out.reserve(chrono_patches.size() - 1);
    for (size_t t = 0; t + 1 < chrono_patches.size(); ++t) {
        check_same_shape(chrono_patches[t], chrono_patches[t + 1], "diff_transform");
        Tensor d(chrono_patches[t].shape);
        const Tensor& a = chrono_patches[t];
        const Tensor& b = chrono_patches[t + 1];
        for (size_t i = 0; i < d.data.size(); ++i) d[i] = (b[i] - a[i] + 1.0f) * 0.5f;
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<TupleSample> mine_tuples(const FrameSequence& clip, const MiningConfig& cfg, Rng& rng) {
    const int T = int(clip.frames.size());
    const int W = clip.width(), H = clip.height();
    const int m = cfg.frames_needed();
    const int P = cfg.patch;
    if (cfg.tuple_len < 2 || cfg.tuple_len > 5) throw ConfigError("tuple_len must be in [2,5]");
    if (P < 8) throw ConfigError("patch size must be >= 8");
    if (cfg.gap_min < 1 || cfg.gap_min > cfg.gap_max) throw ConfigError("bad gap bounds");
    if (cfg.jitter < 0) throw ConfigError("jitter must be >= 0");
    const int t_lo = std::max(0, cfg.t_min);
    const int t_hi = cfg.t_max < 0 ? T - 1 : std::min(cfg.t_max, T - 1);
    if (t_lo >= t_hi) throw ConfigError("bad frame window [t_min, t_max]");
    const int min_span = (m - 1) * cfg.gap_min;
    if (t_hi - t_lo < min_span)
        throw ConfigError("clip shorter than the span implied by tuple length and gaps");
    if (P + 2 * cfg.jitter > std::min(W, H))
        throw ConfigError("patch plus jitter margin does not fit in the frame");

    // Per-anchor frame index tuples with per-anchor random gaps.
    std::vector<std::vector<int>> anchor_frames;
    for (int t0 = t_lo; t0 <= t_hi - min_span; ++t0) {
        std::vector<int> idx{t0};
        bool ok = true;
        for (int g = 1; g < m; ++g) {
            int gap = rng.uniform_int(cfg.gap_min, cfg.gap_max);
            int next = idx.back() + gap;
            if (next > t_hi) {
                next = idx.back() + cfg.gap_min;  // fall back to the tightest gap
                if (next > t_hi) {
                    ok = false;
                    break;
                }
            }
            idx.push_back(next);
        }
        if (ok) anchor_frames.push_back(std::move(idx));
    }
    if (anchor_frames.empty()) return {};

    // Spatial grid, inset by the jitter margin.
    std::vector<Rect> grid;
    const int margin = cfg.jitter;
    for (int y = margin; y + P <= H - margin; y += cfg.spatial_stride)
        for (int x = margin; x + P <= W - margin; x += cfg.spatial_stride)
            grid.push_back({x, y, P, P});
    if (grid.empty()) grid.push_back({std::clamp(margin, 0, W - P), std::clamp(margin, 0, H - P), P, P});

    const bool need_motion = cfg.strategy != SamplingStrategy::kRandom;
    std::vector<FlowField> flows;
    std::vector<Integral> mag_int, u_int, v_int;
    if (need_motion) {
        std::vector<Tensor> grays;
        grays.reserve(size_t(T));
        for (const Tensor& f : clip.frames) grays.push_back(to_gray(f));
        for (int t = 0; t + 1 < T; ++t) {
            flows.push_back(estimate_flow(grays[size_t(t)], grays[size_t(t + 1)]));
            mag_int.emplace_back(flows.back().magnitude());
            u_int.emplace_back(flows.back().u);
            v_int.emplace_back(flows.back().v);
        }
    }

    std::vector<Candidate> cands;
    for (int ai = 0; ai < int(anchor_frames.size()); ++ai) {
        const auto& idx = anchor_frames[size_t(ai)];
        for (const Rect& r : grid) {
            Candidate c;
            c.anchor_index = ai;
            c.rect = r;
            if (need_motion) {
                const float area = float(r.w * r.h);
                float score = 0;
                for (int t = idx.front(); t < idx.back(); ++t)
                    score += float(mag_int[size_t(t)].rect_sum(r)) / area;
                c.score = score;
                if (cfg.strategy == SamplingStrategy::kMotionDirection) {
                    c.direction_ok = true;
                    // Mean flow vectors per interval must stay within the cone.
                    std::vector<std::pair<float, float>> means;
                    for (int t = idx.front(); t < idx.back(); ++t) {
                        float mu = float(u_int[size_t(t)].rect_sum(r)) / area;
                        float mv = float(v_int[size_t(t)].rect_sum(r)) / area;
                        if (std::hypot(mu, mv) < 0.15f) {
                            c.direction_ok = false;
                            break;
                        }
                        means.emplace_back(mu, mv);
                    }
                    const float cos_cone = std::cos(45.0f * 3.14159265f / 180.0f);
                    for (size_t i = 0; c.direction_ok && i < means.size(); ++i)
                        for (size_t j = i + 1; c.direction_ok && j < means.size(); ++j) {
                            float dot = means[i].first * means[j].first +
                                        means[i].second * means[j].second;
                            float na = std::hypot(means[i].first, means[i].second);
                            float nb = std::hypot(means[j].first, means[j].second);
                            if (dot < cos_cone * na * nb) c.direction_ok = false;
                        }
                }
            }
            cands.push_back(c);
        }
    }

    // Selection.
    std::vector<Candidate> selected;
    if (cfg.strategy == SamplingStrategy::kRandom) {
        std::vector<int> order(cands.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        rng.shuffle(order);
        for (int i = 0; i < std::min<int>(cfg.top_k, int(order.size())); ++i)
            selected.push_back(cands[size_t(order[size_t(i)])]);
    } else {
        if (cfg.strategy == SamplingStrategy::kMotionDirection) {
            std::vector<Candidate> kept;
            for (const Candidate& c : cands)
                if (c.direction_ok) kept.push_back(c);
            cands = std::move(kept);
        }
        std::stable_sort(cands.begin(), cands.end(),
                         [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
        if (cfg.motion_threshold >= 0) {
            for (const Candidate& c : cands) {
                if (c.score < cfg.motion_threshold) break;
                // Re-check with the exact public score so the emitted-tuple
                // guarantee holds without integral-image rounding slack.
                std::vector<FlowField> span(
                    flows.begin() + anchor_frames[size_t(c.anchor_index)].front(),
                    flows.begin() + anchor_frames[size_t(c.anchor_index)].back());
                if (patch_motion_score(span, c.rect) >= cfg.motion_threshold) selected.push_back(c);
            }
        } else {
            for (int i = 0; i < std::min<int>(cfg.top_k, int(cands.size())); ++i)
                selected.push_back(cands[size_t(i)]);
        }
    }

    const PermutationTable& table = PermutationTable::get(cfg.tuple_len);
    (void)table;
    std::vector<TupleSample> out;
    out.reserve(selected.size());
    for (const Candidate& c : selected) {
        const auto& idx = anchor_frames[size_t(c.anchor_index)];
        TupleSample s;
        s.prov.clip_id = clip.clip_id;
        for (int t : idx) s.prov.frame_indices.push_back(uint16_t(t));
        s.prov.rect_x = uint16_t(c.rect.x);
        s.prov.rect_y = uint16_t(c.rect.y);
        s.prov.rect_w = uint16_t(c.rect.w);
        s.prov.rect_h = uint16_t(c.rect.h);

        std::vector<Rect> rects =
            spatial_jitter(c.rect, cfg.jitter, m, W, H, rng, &s.prov.jitter_offsets);
        std::vector<Tensor> chrono;
        chrono.reserve(size_t(m));
        for (int f = 0; f < m; ++f)
            chrono.push_back(crop_patch(clip.frames[size_t(idx[size_t(f)])], rects[size_t(f)]));
        if (cfg.input == InputMode::kDiff) chrono = diff_transform(chrono);

        s.prov.aug_codes.resize(chrono.size());
        for (size_t i = 0; i < chrono.size(); ++i)
            chrono[i] = channel_transform(chrono[i], cfg.channel, rng, &s.prov.aug_codes[i]);

        ShuffleResult sr = shuffle_with_label(cfg.tuple_len, rng);
        s.label = sr.class_id;
        for (int i : sr.order) {
            s.prov.shuffle_order.push_back(uint8_t(i));
            s.patches.push_back(chrono[size_t(i)]);
        }
        for (Tensor& p : s.patches) quantize_u8_grid(p);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Tensor> reconstruct_chronological(const FrameSequence& clip, const Provenance& prov,
                                              const MiningConfig& cfg) {
    const int W = clip.width(), H = clip.height();
    std::vector<Tensor> chrono;
    for (size_t f = 0; f < prov.frame_indices.size(); ++f) {
        Rect r{int(prov.rect_x), int(prov.rect_y), int(prov.rect_w), int(prov.rect_h)};
        r.x = std::clamp(r.x + prov.jitter_offsets[f].first, 0, W - r.w);
        r.y = std::clamp(r.y + prov.jitter_offsets[f].second, 0, H - r.h);
        chrono.push_back(crop_patch(clip.frames[prov.frame_indices[f]], r));
    }
    if (cfg.input == InputMode::kDiff) chrono = diff_transform(chrono);
    for (size_t i = 0; i < chrono.size(); ++i) {
        chrono[i] = channel_transform_coded(chrono[i], cfg.channel, prov.aug_codes[i]);
        quantize_u8_grid(chrono[i]);
    }
    return chrono;
}

// --- dataset serialization ---------------------------------------------------

void write_dataset(const std::string& path, const std::vector<TupleSample>& samples,
                   const DatasetMeta& meta) {
    if (samples.empty()) throw ConfigError("write_dataset: empty sample list");
    const int n = meta.tuple_len;
    const int P = meta.patch;
    const size_t patch_bytes = 3u * size_t(P) * size_t(P);
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u16(kVersion);
    w.u8(uint8_t(n));
    w.u8(uint8_t(uint8_t(meta.channel) | (uint8_t(meta.input) << 4)));
    w.u16(uint16_t(P));
    w.u64(samples.size());
    for (const TupleSample& s : samples) {
        if (int(s.patches.size()) != n) throw ShapeError("write_dataset: tuple length mismatch");
        const auto& pv = s.prov;
        w.u32(pv.clip_id);
        w.u8(uint8_t(pv.frame_indices.size()));
        for (uint16_t t : pv.frame_indices) w.u16(t);
        w.u16(pv.rect_x);
        w.u16(pv.rect_y);
        w.u16(pv.rect_w);
        w.u16(pv.rect_h);
        if (pv.jitter_offsets.size() != pv.frame_indices.size())
            throw ShapeError("write_dataset: jitter record size mismatch");
        for (auto [jx, jy] : pv.jitter_offsets) {
            w.i8(jx);
            w.i8(jy);
        }
        if (int(pv.aug_codes.size()) != n || int(pv.shuffle_order.size()) != n)
            throw ShapeError("write_dataset: augmentation record size mismatch");
        for (uint8_t a : pv.aug_codes) w.u8(a);
        for (uint8_t o : pv.shuffle_order) w.u8(o);
        w.u8(uint8_t(s.label));
        for (const Tensor& p : s.patches) {
            if (p.shape != std::vector<int>({3, P, P}))
                throw ShapeError("write_dataset: patch shape mismatch " + p.shape_str());
            for (size_t i = 0; i < patch_bytes; ++i)
                w.u8(uint8_t(std::lround(std::clamp(p[i], 0.0f, 1.0f) * 255.0f)));
        }
    }
    w.finish_crc();
    w.save(path);
}

std::vector<TupleSample> read_dataset(const std::string& path, DatasetMeta* meta_out) {
    ByteReader r = ByteReader::from_file(path);
    r.check_trailing_crc("dataset");
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("dataset: bad magic");
    uint16_t version = r.u16();
    if (version != kVersion)
        throw FormatError("dataset: unsupported version " + std::to_string(version));
    DatasetMeta meta;
    meta.tuple_len = r.u8();
    uint8_t mode = r.u8();
    if ((mode & 0x0F) > 4 || (mode >> 4) > 1) throw FormatError("dataset: bad channel/input mode");
    meta.channel = ChannelMode(mode & 0x0F);
    meta.input = InputMode(mode >> 4);
    meta.patch = r.u16();
    if (meta.tuple_len < 2 || meta.tuple_len > 5 || meta.patch < 8)
        throw FormatError("dataset: implausible header fields");
    uint64_t count = r.u64();
    const int n = meta.tuple_len;
    const int P = meta.patch;
    const size_t patch_bytes = 3u * size_t(P) * size_t(P);
    std::vector<TupleSample> samples;
    samples.reserve(size_t(count));
    std::vector<uint8_t> raw(patch_bytes);
    for (uint64_t si = 0; si < count; ++si) {
        TupleSample s;
        s.prov.clip_id = r.u32();
        uint8_t m = r.u8();
        for (int i = 0; i < m; ++i) s.prov.frame_indices.push_back(r.u16());
        s.prov.rect_x = r.u16();
        s.prov.rect_y = r.u16();
        s.prov.rect_w = r.u16();
        s.prov.rect_h = r.u16();
        for (int i = 0; i < m; ++i) {
            int8_t jx = r.i8(), jy = r.i8();
            s.prov.jitter_offsets.emplace_back(jx, jy);
        }
        for (int i = 0; i < n; ++i) s.prov.aug_codes.push_back(r.u8());
        for (int i = 0; i < n; ++i) s.prov.shuffle_order.push_back(r.u8());
        s.label = r.u8();
        for (int i = 0; i < n; ++i) {
            r.bytes(raw.data(), patch_bytes);
            Tensor p({3, P, P});
            for (size_t j = 0; j < patch_bytes; ++j) p[j] = float(raw[j]) / 255.0f;
            s.patches.push_back(std::move(p));
        }
        samples.push_back(std::move(s));
    }
    if (r.pos != r.payload_end()) throw FormatError("dataset: trailing bytes after samples");
    if (meta_out) *meta_out = meta;
    return samples;
}

}  // namespace opn
