#include "opn/video_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "opn/errors.hpp"

namespace fs = std::filesystem;

namespace opn {

namespace {

constexpr float kPi = 3.14159265358979323846f;
constexpr float kLumR = 0.299f, kLumG = 0.587f, kLumB = 0.114f;

// Orthonormal basis of the plane orthogonal to the luminance weights.
// Colors moved within this plane keep their luminance exactly.
struct TintBasis {
    float e1[3], e2[3];
};

const TintBasis& tint_basis() {
    static const TintBasis basis = [] {
        TintBasis b;
        double w[3] = {kLumR, kLumG, kLumB};
        double wn = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
        double wh[3] = {w[0] / wn, w[1] / wn, w[2] / wn};
        double a[3] = {1, 0, 0};
        double dot = a[0] * wh[0];
        double e1[3] = {a[0] - dot * wh[0], a[1] - dot * wh[1], a[2] - dot * wh[2]};
        double n1 = std::sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]);
        for (double& v : e1) v /= n1;
        double e2[3] = {wh[1] * e1[2] - wh[2] * e1[1], wh[2] * e1[0] - wh[0] * e1[2],
                        wh[0] * e1[1] - wh[1] * e1[0]};
        for (int k = 0; k < 3; ++k) {
            b.e1[k] = float(e1[k]);
            b.e2[k] = float(e2[k]);
        }
        return b;
    }();
    return basis;
}

void tint_of(float theta, float radius, float out[3]) {
    const TintBasis& b = tint_basis();
    float c = std::cos(theta), s = std::sin(theta);
    for (int k = 0; k < 3; ++k) out[k] = radius * (c * b.e1[k] + s * b.e2[k]);
}

// Value-noise field: white noise, one box-blur pass, remapped to [lo,hi].
std::vector<float> noise_field(int h, int w, float lo, float hi, Rng& rng) {
    std::vector<float> raw(size_t(h) * w), blurred(size_t(h) * w);
    for (float& v : raw) v = rng.unitf();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0;
            int cnt = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                int yy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    int xx = std::clamp(x + dx, 0, w - 1);
                    acc += raw[size_t(yy) * w + xx];
                    ++cnt;
                }
            }
            blurred[size_t(y) * w + x] = acc / float(cnt);
        }
    }
    float mn = blurred[0], mx = blurred[0];
    for (float v : blurred) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    float scale = (mx > mn) ? (hi - lo) / (mx - mn) : 0.0f;
    for (float& v : blurred) v = lo + (v - mn) * scale;
    return blurred;
}

struct Bands {
    float bg_lo, bg_hi, obj_lo, obj_hi, tint_max;
};

Bands luminance_bands(const SceneConfig& cfg) {
    const float guard = 4.0f / 255.0f;
    const float half = cfg.min_contrast * 0.5f;
    Bands b;
    b.tint_max = 0.12f;
    b.bg_lo = 0.06f;
    b.bg_hi = 0.5f - half - guard;
    b.obj_lo = 0.5f + half + guard;
    b.obj_hi = 0.97f - b.tint_max;
    if (!cfg.shortcut_luma_locked && cfg.color_shortcut)
        b.obj_hi -= cfg.shortcut_brightness_step * float(cfg.num_frames);
    if (b.bg_hi <= b.bg_lo + 0.05f || b.obj_hi <= b.obj_lo + 0.05f)
        throw ConfigError("min_contrast too large for the luminance budget");
    return b;
}

std::pair<float, float> kind_offset(const ObjectSpec& o, int t, int num_frames, int osc_period) {
    switch (o.kind) {
        case Trajectory::kStatic:
            return {0.0f, 0.0f};
        case Trajectory::kLinear:
            return {o.vx * float(t), o.vy * float(t)};
        case Trajectory::kReversing: {
            // Out-and-back palindrome: frame t and frame T-1-t coincide.
            int m = std::min(t, num_frames - 1 - t);
            return {o.vx * float(m), o.vy * float(m)};
        }
        case Trajectory::kOscillating: {
            float amp = std::max(1.0f, std::hypot(o.vx, o.vy) * float(osc_period) / (2 * kPi));
            float nx = 0, ny = 0;
            float sp = std::hypot(o.vx, o.vy);
            if (sp > 0) {
                nx = o.vx / sp;
                ny = o.vy / sp;
            }
            float s = std::sin(2 * kPi * float(t) / float(osc_period));
            return {amp * s * nx, amp * s * ny};
        }
    }
    return {0.0f, 0.0f};
}

void fill_positions(const SceneConfig& cfg, MotionScript& script) {
    script.positions.assign(script.objects.size(), {});
    for (size_t i = 0; i < script.objects.size(); ++i) {
        const ObjectSpec& o = script.objects[i];
        auto& pos = script.positions[i];
        pos.reserve(size_t(cfg.num_frames));
        for (int t = 0; t < cfg.num_frames; ++t) {
            auto [dx, dy] = kind_offset(o, t, cfg.num_frames, cfg.osc_period);
            pos.emplace_back(o.start_x + dx, o.start_y + dy);
        }
    }
}

MotionScript sample_script(const SceneConfig& cfg, Rng& rng) {
    if (cfg.max_obj_size * 2 > std::min(cfg.width, cfg.height))
        throw ConfigError("frame must be at least 2x the max object size");
    if (cfg.num_frames < 8) throw ConfigError("need at least 8 frames per clip");

    MotionScript script;
    int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);
    std::vector<Trajectory> kinds = cfg.allowed_kinds;
    for (int i = 0; i < count; ++i) {
        ObjectSpec o;
        o.texture_seed = rng.next();
        o.size = rng.uniform_int(cfg.min_obj_size, cfg.max_obj_size);
        if (!kinds.empty()) {
            o.kind = kinds[size_t(rng.uniform_int(0, int(kinds.size()) - 1))];
        } else {
            float u = rng.unitf();
            o.kind = u < 0.45f   ? Trajectory::kLinear
                     : u < 0.7f  ? Trajectory::kReversing
                     : u < 0.9f  ? Trajectory::kOscillating
                                 : Trajectory::kStatic;
        }
        float speed = rng.uniform(cfg.min_speed, cfg.max_speed);
        float phi = rng.uniform(0.0f, 2 * kPi);
        o.vx = speed * std::cos(phi);
        o.vy = speed * std::sin(phi);
        o.tint_theta = rng.uniform(0.0f, 2 * kPi);
        o.tint_radius = rng.uniform(0.05f, 0.12f);

        // Start position such that the whole trajectory stays in frame.
        float halfs = float(o.size) * 0.5f;
        float lo_x = halfs + 1, hi_x = float(cfg.width) - 1 - halfs - 1;
        float lo_y = halfs + 1, hi_y = float(cfg.height) - 1 - halfs - 1;
        float min_dx = 0, max_dx = 0, min_dy = 0, max_dy = 0;
        for (int t = 0; t < cfg.num_frames; ++t) {
            auto [dx, dy] = kind_offset(o, t, cfg.num_frames, cfg.osc_period);
            min_dx = std::min(min_dx, dx);
            max_dx = std::max(max_dx, dx);
            min_dy = std::min(min_dy, dy);
            max_dy = std::max(max_dy, dy);
        }
        float span_x = (hi_x - lo_x) - (max_dx - min_dx);
        float span_y = (hi_y - lo_y) - (max_dy - min_dy);
        if (span_x < 0 || span_y < 0) {
            // Too fast for the frame: shrink the velocity until it fits.
            float fit = std::min(span_x < 0 ? (hi_x - lo_x) / (max_dx - min_dx) : 1.0f,
                                 span_y < 0 ? (hi_y - lo_y) / (max_dy - min_dy) : 1.0f) *
                        0.9f;
            o.vx *= fit;
            o.vy *= fit;
            min_dx *= fit; max_dx *= fit; min_dy *= fit; max_dy *= fit;
            span_x = (hi_x - lo_x) - (max_dx - min_dx);
            span_y = (hi_y - lo_y) - (max_dy - min_dy);
        }
        o.start_x = std::round(rng.uniform(lo_x - min_dx, lo_x - min_dx + std::max(0.0f, span_x)));
        o.start_y = std::round(rng.uniform(lo_y - min_dy, lo_y - min_dy + std::max(0.0f, span_y)));
        script.objects.push_back(o);
    }
    fill_positions(cfg, script);
    return script;
}

void paint_object(Tensor& frame, const std::vector<float>& tex, const ObjectSpec& o, float cx,
                  float cy, const float tint[3]) {
    const int h = frame.dim(1), w = frame.dim(2);
    const int s = o.size;
    const int x0 = int(std::lround(cx - float(s - 1) * 0.5f));
    const int y0 = int(std::lround(cy - float(s - 1) * 0.5f));
    for (int k = 0; k < 3; ++k) {
        float* plane = frame.ptr() + size_t(k) * h * w;
        for (int yy = 0; yy < s; ++yy) {
            int fy = y0 + yy;
            if (fy < 0 || fy >= h) continue;
            for (int xx = 0; xx < s; ++xx) {
                int fx = x0 + xx;
                if (fx < 0 || fx >= w) continue;
                plane[size_t(fy) * w + fx] =
                    std::clamp(tex[size_t(yy) * s + xx] + tint[k], 0.0f, 1.0f);
            }
        }
    }
}

void snap_to_u8_grid(Tensor& t) {
    for (float& v : t.data) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

FrameSequence render(const SceneConfig& cfg, const MotionScript& script, uint64_t seed) {
    Bands bands = luminance_bands(cfg);
    Rng rng = Rng(seed).fork(0x6267 /*"bg"*/);
    std::vector<float> bg = noise_field(cfg.height, cfg.width, bands.bg_lo, bands.bg_hi, rng);
    float bg_theta = rng.uniform(0.0f, 2 * kPi);
    float bg_radius = cfg.color_shortcut ? 0.05f : 0.0f;

    std::vector<std::vector<float>> textures;
    for (const ObjectSpec& o : script.objects) {
        Rng trng(o.texture_seed);
        textures.push_back(noise_field(o.size, o.size, bands.obj_lo, bands.obj_hi, trng));
    }

    FrameSequence clip;
    clip.fps = cfg.fps;
    clip.script = script;
    clip.seed = seed;
    clip.frames.reserve(size_t(cfg.num_frames));
    for (int t = 0; t < cfg.num_frames; ++t) {
        Tensor frame({3, cfg.height, cfg.width});
        float drift = cfg.color_shortcut ? cfg.shortcut_delta * float(t) : 0.0f;
        float lift = (cfg.color_shortcut && !cfg.shortcut_luma_locked)
                         ? cfg.shortcut_brightness_step * float(t)
                         : 0.0f;
        float bg_tint[3];
        tint_of(bg_theta + drift, bg_radius, bg_tint);
        const size_t hw = size_t(cfg.height) * cfg.width;
        for (int k = 0; k < 3; ++k) {
            float* plane = frame.ptr() + size_t(k) * hw;
            for (size_t i = 0; i < hw; ++i)
                plane[i] = std::clamp(bg[i] + bg_tint[k] + lift, 0.0f, 1.0f);
        }
        for (size_t oi = 0; oi < script.objects.size(); ++oi) {
            const ObjectSpec& o = script.objects[oi];
            float tint[3];
            tint_of(o.tint_theta + drift, o.tint_radius, tint);
            if (lift != 0.0f)
                for (float& v : tint) v += lift;
            auto [cx, cy] = script.positions[oi][size_t(t)];
            paint_object(frame, textures[oi], o, cx, cy, tint);
        }
        snap_to_u8_grid(frame);
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

}  // namespace

const char* trajectory_name(Trajectory t) {
    switch (t) {
        case Trajectory::kStatic: return "static";
        case Trajectory::kLinear: return "linear";
        case Trajectory::kReversing: return "reversing";
        case Trajectory::kOscillating: return "oscillating";
    }
    return "?";
}

Trajectory trajectory_from_name(const std::string& name) {
    if (name == "static") return Trajectory::kStatic;
    if (name == "linear") return Trajectory::kLinear;
    if (name == "reversing") return Trajectory::kReversing;
    if (name == "oscillating") return Trajectory::kOscillating;
    throw ConfigError("unknown trajectory kind: " + name);
}

FrameSequence generate(const SceneConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    MotionScript script = sample_script(cfg, rng);
    return render(cfg, script, seed);
}

FrameSequence render_script(const SceneConfig& cfg, MotionScript script, uint64_t seed) {
    fill_positions(cfg, script);
    return render(cfg, script, seed);
}

FrameSequence color_shortcut_variant(SceneConfig cfg, uint64_t seed) {
    cfg.color_shortcut = true;
    return generate(cfg, seed);
}

float shortcut_hue_angle(float r, float g, float b) {
    // Remove the neutral (gray) component, then take the angle of the
    // remaining tint in the isoluminant plane.
    const float lum = kLumR * r + kLumG * g + kLumB * b;
    const float cr = r - lum, cg = g - lum, cb = b - lum;
    const TintBasis& tb = tint_basis();
    float p1 = cr * tb.e1[0] + cg * tb.e1[1] + cb * tb.e1[2];
    float p2 = cr * tb.e2[0] + cg * tb.e2[1] + cb * tb.e2[2];
    return std::atan2(p2, p1);
}

float static_area_fraction(const FrameSequence& clip) {
    const int h = clip.height(), w = clip.width();
    std::vector<uint8_t> covered(size_t(h) * w, 0);
    for (size_t oi = 0; oi < clip.script.objects.size(); ++oi) {
        const ObjectSpec& o = clip.script.objects[oi];
        for (const auto& [cx, cy] : clip.script.positions[oi]) {
            int x0 = int(std::lround(cx - float(o.size - 1) * 0.5f));
            int y0 = int(std::lround(cy - float(o.size - 1) * 0.5f));
            for (int y = std::max(0, y0); y < std::min(h, y0 + o.size); ++y)
                for (int x = std::max(0, x0); x < std::min(w, x0 + o.size); ++x)
                    covered[size_t(y) * w + x] = 1;
        }
    }
    size_t n = 0;
    for (uint8_t v : covered) n += v;
    return 1.0f - float(n) / float(size_t(h) * w);
}

Tensor to_gray(const Tensor& rgb) {
    if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw ShapeError("to_gray: expected [3,H,W]");
    const int h = rgb.dim(1), w = rgb.dim(2);
    Tensor g({h, w});
    const size_t hw = size_t(h) * w;
    const float* r = rgb.ptr();
    const float* gg = rgb.ptr() + hw;
    const float* b = rgb.ptr() + 2 * hw;
    for (size_t i = 0; i < hw; ++i) g[i] = kLumR * r[i] + kLumG * gg[i] + kLumB * b[i];
    return g;
}

// --- persistence ------------------------------------------------------------

namespace {

std::string fmt_float(float v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", double(v));  // hexfloat: exact round-trip
    return buf;
}

float parse_float(const std::string& s) { return std::strtof(s.c_str(), nullptr); }

}  // namespace

void save_clip(const FrameSequence& clip, const std::string& dir) {
    fs::create_directories(dir);
    std::ostringstream meta;
    meta << "width=" << clip.width() << "\n";
    meta << "height=" << clip.height() << "\n";
    meta << "frames=" << clip.frames.size() << "\n";
    meta << "fps=" << fmt_float(clip.fps) << "\n";
    meta << "seed=" << clip.seed << "\n";
    meta << "clip_id=" << clip.clip_id << "\n";
    meta << "objects=" << clip.script.objects.size() << "\n";
    for (size_t i = 0; i < clip.script.objects.size(); ++i) {
        const ObjectSpec& o = clip.script.objects[i];
        meta << "object." << i << "=texture_seed:" << o.texture_seed << ",size:" << o.size
             << ",kind:" << trajectory_name(o.kind) << ",vx:" << fmt_float(o.vx)
             << ",vy:" << fmt_float(o.vy) << ",start_x:" << fmt_float(o.start_x)
             << ",start_y:" << fmt_float(o.start_y) << ",tint_theta:" << fmt_float(o.tint_theta)
             << ",tint_radius:" << fmt_float(o.tint_radius) << "\n";
        meta << "positions." << i << "=";
        for (size_t t = 0; t < clip.script.positions[i].size(); ++t) {
            if (t) meta << ";";
            meta << fmt_float(clip.script.positions[i][t].first) << ","
                 << fmt_float(clip.script.positions[i][t].second);
        }
        meta << "\n";
    }
    std::ofstream mf(dir + "/meta.txt", std::ios::trunc);
    if (!mf) throw IoError("cannot write " + dir + "/meta.txt");
    mf << meta.str();
    mf.close();

    const size_t hw = size_t(clip.height()) * clip.width();
    std::vector<uint8_t> raw(3 * hw);
    for (size_t t = 0; t < clip.frames.size(); ++t) {
        const Tensor& f = clip.frames[t];
        for (size_t i = 0; i < 3 * hw; ++i)
            raw[i] = uint8_t(std::lround(std::clamp(f[i], 0.0f, 1.0f) * 255.0f));
        char name[32];
        std::snprintf(name, sizeof name, "/frame_%03zu.raw", t);
        std::ofstream ff(dir + name, std::ios::binary | std::ios::trunc);
        if (!ff) throw IoError("cannot write frame file in " + dir);
        ff.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    }
}

FrameSequence load_clip(const std::string& dir) {
    std::ifstream mf(dir + "/meta.txt");
    if (!mf) throw IoError("cannot open " + dir + "/meta.txt");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(mf, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto req = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw FormatError("clip meta missing key: " + k);
        return it->second;
    };
    FrameSequence clip;
    const int w = std::stoi(req("width")), h = std::stoi(req("height"));
    const int nframes = std::stoi(req("frames"));
    clip.fps = parse_float(req("fps"));
    clip.seed = std::stoull(req("seed"));
    clip.clip_id = uint32_t(std::stoul(req("clip_id")));
    const int nobj = std::stoi(req("objects"));
    for (int i = 0; i < nobj; ++i) {
        std::istringstream os(req("object." + std::to_string(i)));
        ObjectSpec o;
        std::string field;
        while (std::getline(os, field, ',')) {
            auto colon = field.find(':');
            if (colon == std::string::npos) throw FormatError("bad object field: " + field);
            std::string key = field.substr(0, colon), val = field.substr(colon + 1);
            if (key == "texture_seed") o.texture_seed = std::stoull(val);
            else if (key == "size") o.size = std::stoi(val);
            else if (key == "kind") o.kind = trajectory_from_name(val);
            else if (key == "vx") o.vx = parse_float(val);
            else if (key == "vy") o.vy = parse_float(val);
            else if (key == "start_x") o.start_x = parse_float(val);
            else if (key == "start_y") o.start_y = parse_float(val);
            else if (key == "tint_theta") o.tint_theta = parse_float(val);
            else if (key == "tint_radius") o.tint_radius = parse_float(val);
            else throw FormatError("unknown object field: " + key);
        }
        clip.script.objects.push_back(o);
        std::istringstream ps(req("positions." + std::to_string(i)));
        std::vector<std::pair<float, float>> pos;
        std::string pair;
        while (std::getline(ps, pair, ';')) {
            auto comma = pair.find(',');
            if (comma == std::string::npos) throw FormatError("bad position entry: " + pair);
            pos.emplace_back(parse_float(pair.substr(0, comma)), parse_float(pair.substr(comma + 1)));
        }
        clip.script.positions.push_back(std::move(pos));
    }
    const size_t hw = size_t(h) * w;
    std::vector<uint8_t> raw(3 * hw);
    for (int t = 0; t < nframes; ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "/frame_%03d.raw", t);
        std::ifstream ff(dir + name, std::ios::binary);
        if (!ff) throw IoError("missing frame file in " + dir);
        ff.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
        if (size_t(ff.gcount()) != raw.size()) throw FormatError("short frame file in " + dir);
        Tensor f({3, h, w});
        for (size_t i = 0; i < 3 * hw; ++i) f[i] = float(raw[i]) / 255.0f;
        clip.frames.push_back(std::move(f));
    }
    return clip;
}

void save_clips(const std::vector<FrameSequence>& clips, const std::string& dir) {
    fs::create_directories(dir);
    for (size_t i = 0; i < clips.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "/clip_%05zu", i);
        save_clip(clips[i], dir + name);
    }
}

std::vector<FrameSequence> load_clips(const std::string& dir) {
    std::vector<std::string> subdirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && e.path().filename().string().rfind("clip_", 0) == 0)
            subdirs.push_back(e.path().string());
    std::sort(subdirs.begin(), subdirs.end());
    if (subdirs.empty()) throw IoError("no clip_* directories under " + dir);
    std::vector<FrameSequence> clips;
    clips.reserve(subdirs.size());
    for (const auto& d : subdirs) clips.push_back(load_clip(d));
    return clips;
}

}  // namespace opn
