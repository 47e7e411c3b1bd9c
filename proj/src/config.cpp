#include "opn/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "opn/errors.hpp"

namespace opn {

namespace {

std::string fmt_f(float v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", double(v));
    return buf;
}

float to_f(const std::string& key, const std::string& v) {
    char* end = nullptr;
    float r = std::strtof(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') throw ConfigError("bad float for " + key + ": " + v);
    return r;
}

int to_i(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

long long to_ll(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

bool to_b(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}

std::vector<std::string> split_csv(const std::string& v) {
    std::vector<std::string> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        // strip comments and whitespace
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("bad section header: " + line);
            section = line.substr(1, line.size() - 2);
            if (section != "scene" && section != "pipeline" && section != "mining" &&
                section != "model" && section != "train" && section != "eval")
                throw ConfigError("unknown config section: [" + section + "]");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key=value at line " + std::to_string(line_no));
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        while (!val.empty() && (val.front() == ' ' || val.front() == '\t')) val.erase(0, 1);
        if (section.empty()) throw ConfigError("key outside any [section]: " + key);

        SceneConfig& sc = cfg.pipeline.scene;
        MiningConfig& mc = cfg.pipeline.mining;
        ModelConfig& mo = cfg.pipeline.model;
        TrainConfig& tc = cfg.pipeline.train;
        const std::string qual = section + "." + key;
        if (section == "scene") {
            if (key == "width") sc.width = to_i(qual, val);
            else if (key == "height") sc.height = to_i(qual, val);
            else if (key == "frames") sc.num_frames = to_i(qual, val);
            else if (key == "fps") sc.fps = to_f(qual, val);
            else if (key == "min_objects") sc.min_objects = to_i(qual, val);
            else if (key == "max_objects") sc.max_objects = to_i(qual, val);
            else if (key == "min_obj_size") sc.min_obj_size = to_i(qual, val);
            else if (key == "max_obj_size") sc.max_obj_size = to_i(qual, val);
            else if (key == "min_speed") sc.min_speed = to_f(qual, val);
            else if (key == "max_speed") sc.max_speed = to_f(qual, val);
            else if (key == "min_contrast") sc.min_contrast = to_f(qual, val);
            else if (key == "osc_period") sc.osc_period = to_i(qual, val);
            else if (key == "color_shortcut") sc.color_shortcut = to_b(qual, val);
            else if (key == "shortcut_delta") sc.shortcut_delta = to_f(qual, val);
            else if (key == "shortcut_luma_locked") sc.shortcut_luma_locked = to_b(qual, val);
            else if (key == "shortcut_brightness_step") sc.shortcut_brightness_step = to_f(qual, val);
            else if (key == "trajectory_kinds") {
                sc.allowed_kinds.clear();
                if (val != "mixed")
                    for (const std::string& k : split_csv(val))
                        sc.allowed_kinds.push_back(trajectory_from_name(k));
            } else throw ConfigError("unknown config key: " + qual);
        } else if (section == "pipeline") {
            if (key == "clips") cfg.pipeline.clips = to_i(qual, val);
            else if (key == "heldout_fraction") cfg.pipeline.heldout_fraction = to_f(qual, val);
            else if (key == "threads") cfg.pipeline.threads = to_i(qual, val);
            else throw ConfigError("unknown config key: " + qual);
        } else if (section == "mining") {
            if (key == "tuple_len") mc.tuple_len = to_i(qual, val);
            else if (key == "patch") mc.patch = to_i(qual, val);
            else if (key == "t_min") mc.t_min = to_i(qual, val);
            else if (key == "t_max") mc.t_max = to_i(qual, val);
            else if (key == "gap_min") mc.gap_min = to_i(qual, val);
            else if (key == "gap_max") mc.gap_max = to_i(qual, val);
            else if (key == "strategy") mc.strategy = strategy_from_name(val);
            else if (key == "threshold") mc.motion_threshold = to_f(qual, val);
            else if (key == "top_k") mc.top_k = to_i(qual, val);
            else if (key == "jitter") mc.jitter = to_i(qual, val);
            else if (key == "channel") mc.channel = channel_mode_from_name(val);
            else if (key == "input") mc.input = input_mode_from_name(val);
            else if (key == "spatial_stride") mc.spatial_stride = to_i(qual, val);
            else throw ConfigError("unknown config key: " + qual);
        } else if (section == "model") {
            if (key == "head") mo.head = head_kind_from_name(val);
            else if (key == "feat_dim") mo.feat_dim = to_i(qual, val);
            else if (key == "pair_dim") mo.pair_dim = to_i(qual, val);
            else if (key == "concat_h1") mo.concat_h1 = to_i(qual, val);
            else if (key == "concat_h2") mo.concat_h2 = to_i(qual, val);
            else if (key == "dropout") mo.dropout = to_f(qual, val);
            else if (key == "shared_pair_units") mo.shared_pair_units = to_b(qual, val);
            else if (key == "conv1_out") mo.conv1_out = to_i(qual, val);
            else if (key == "conv1_k") mo.conv1_k = to_i(qual, val);
            else if (key == "conv1_stride") mo.conv1_stride = to_i(qual, val);
            else if (key == "conv2_out") mo.conv2_out = to_i(qual, val);
            else if (key == "conv2_k") mo.conv2_k = to_i(qual, val);
            else throw ConfigError("unknown config key: " + qual);
        } else if (section == "train") {
            if (key == "batch_size") tc.batch_size = to_i(qual, val);
            else if (key == "lr0") tc.lr0 = to_f(qual, val);
            else if (key == "momentum") tc.momentum = to_f(qual, val);
            else if (key == "lr_decay_factor") tc.lr_decay_factor = to_f(qual, val);
            else if (key == "decay_steps") {
                tc.decay_steps.clear();
                if (val != "auto")
                    for (const std::string& s : split_csv(val))
                        tc.decay_steps.push_back(to_ll(qual, s));
            } else if (key == "total_steps") tc.total_steps = to_ll(qual, val);
            else if (key == "seed") tc.seed = to_u64(qual, val);
            else if (key == "eval_every") tc.eval_every = to_ll(qual, val);
            else if (key == "checkpoint_every") tc.checkpoint_every = to_ll(qual, val);
            else if (key == "weight_decay") tc.weight_decay = to_f(qual, val);
            else if (key == "eval_batch") tc.eval_batch = to_i(qual, val);
            else throw ConfigError("unknown config key: " + qual);
        } else if (section == "eval") {
            if (key == "seeds") {
                cfg.eval_seeds.clear();
                for (const std::string& s : split_csv(val)) cfg.eval_seeds.push_back(to_u64(qual, s));
                if (cfg.eval_seeds.empty()) throw ConfigError("eval.seeds must not be empty");
            } else if (key == "transfer_train_clips_per_kind")
                cfg.transfer.train_clips_per_kind = to_i(qual, val);
            else if (key == "transfer_test_clips_per_kind")
                cfg.transfer.test_clips_per_kind = to_i(qual, val);
            else if (key == "transfer_total_steps")
                cfg.transfer.options.train.total_steps = to_ll(qual, val);
            else if (key == "transfer_batch_size")
                cfg.transfer.options.train.batch_size = to_i(qual, val);
            else if (key == "transfer_lr0") cfg.transfer.options.train.lr0 = to_f(qual, val);
            else if (key == "transfer_freeze_trunk")
                cfg.transfer.options.freeze_trunk = to_b(qual, val);
            else if (key == "transfer_include_fc6")
                cfg.transfer.options.include_fc6 = to_b(qual, val);
            else throw ConfigError("unknown config key: " + qual);
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse_run_config(os.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
    const SceneConfig& sc = cfg.pipeline.scene;
    const MiningConfig& mc = cfg.pipeline.mining;
    const ModelConfig& mo = cfg.pipeline.model;
    const TrainConfig& tc = cfg.pipeline.train;
    std::ostringstream os;
    os << "[scene]\n";
    os << "width=" << sc.width << "\nheight=" << sc.height << "\nframes=" << sc.num_frames
       << "\nfps=" << fmt_f(sc.fps) << "\n";
    os << "min_objects=" << sc.min_objects << "\nmax_objects=" << sc.max_objects << "\n";
    os << "min_obj_size=" << sc.min_obj_size << "\nmax_obj_size=" << sc.max_obj_size << "\n";
    os << "min_speed=" << fmt_f(sc.min_speed) << "\nmax_speed=" << fmt_f(sc.max_speed) << "\n";
    os << "min_contrast=" << fmt_f(sc.min_contrast) << "\nosc_period=" << sc.osc_period << "\n";
    os << "color_shortcut=" << (sc.color_shortcut ? "true" : "false") << "\n";
    os << "shortcut_delta=" << fmt_f(sc.shortcut_delta) << "\n";
    os << "shortcut_luma_locked=" << (sc.shortcut_luma_locked ? "true" : "false") << "\n";
    os << "shortcut_brightness_step=" << fmt_f(sc.shortcut_brightness_step) << "\n";
    os << "trajectory_kinds=";
    if (sc.allowed_kinds.empty()) os << "mixed";
    else
        for (size_t i = 0; i < sc.allowed_kinds.size(); ++i)
            os << (i ? "," : "") << trajectory_name(sc.allowed_kinds[i]);
    os << "\n\n[pipeline]\n";
    os << "clips=" << cfg.pipeline.clips << "\n";
    os << "heldout_fraction=" << fmt_f(cfg.pipeline.heldout_fraction) << "\n";
    os << "threads=" << cfg.pipeline.threads << "\n";
    os << "\n[mining]\n";
    os << "tuple_len=" << mc.tuple_len << "\npatch=" << mc.patch << "\n";
    os << "t_min=" << mc.t_min << "\nt_max=" << mc.t_max << "\n";
    os << "gap_min=" << mc.gap_min << "\ngap_max=" << mc.gap_max << "\n";
    os << "strategy=" << strategy_name(mc.strategy) << "\n";
    os << "threshold=" << fmt_f(mc.motion_threshold) << "\ntop_k=" << mc.top_k << "\n";
    os << "jitter=" << mc.jitter << "\nchannel=" << channel_mode_name(mc.channel) << "\n";
    os << "input=" << input_mode_name(mc.input) << "\nspatial_stride=" << mc.spatial_stride << "\n";
    os << "\n[model]\n";
    os << "head=" << head_kind_name(mo.head) << "\n";
    os << "feat_dim=" << mo.feat_dim << "\npair_dim=" << mo.pair_dim << "\n";
    os << "concat_h1=" << mo.concat_h1 << "\nconcat_h2=" << mo.concat_h2 << "\n";
    os << "dropout=" << fmt_f(mo.dropout) << "\n";
    os << "shared_pair_units=" << (mo.shared_pair_units ? "true" : "false") << "\n";
    os << "conv1_out=" << mo.conv1_out << "\nconv1_k=" << mo.conv1_k << "\nconv1_stride="
       << mo.conv1_stride << "\n";
    os << "conv2_out=" << mo.conv2_out << "\nconv2_k=" << mo.conv2_k << "\n";
    os << "\n[train]\n";
    os << "batch_size=" << tc.batch_size << "\nlr0=" << fmt_f(tc.lr0) << "\n";
    os << "momentum=" << fmt_f(tc.momentum) << "\nlr_decay_factor=" << fmt_f(tc.lr_decay_factor)
       << "\n";
    os << "decay_steps=";
    if (tc.decay_steps.empty()) os << "auto";
    else
        for (size_t i = 0; i < tc.decay_steps.size(); ++i)
            os << (i ? "," : "") << tc.decay_steps[i];
    os << "\ntotal_steps=" << tc.total_steps << "\nseed=" << tc.seed << "\n";
    os << "eval_every=" << tc.eval_every << "\ncheckpoint_every=" << tc.checkpoint_every << "\n";
    os << "weight_decay=" << fmt_f(tc.weight_decay) << "\neval_batch=" << tc.eval_batch << "\n";
    os << "\n[eval]\n";
    os << "seeds=";
    for (size_t i = 0; i < cfg.eval_seeds.size(); ++i) os << (i ? "," : "") << cfg.eval_seeds[i];
    os << "\ntransfer_train_clips_per_kind=" << cfg.transfer.train_clips_per_kind << "\n";
    os << "transfer_test_clips_per_kind=" << cfg.transfer.test_clips_per_kind << "\n";
    os << "transfer_total_steps=" << cfg.transfer.options.train.total_steps << "\n";
    os << "transfer_batch_size=" << cfg.transfer.options.train.batch_size << "\n";
    os << "transfer_lr0=" << fmt_f(cfg.transfer.options.train.lr0) << "\n";
    os << "transfer_freeze_trunk=" << (cfg.transfer.options.freeze_trunk ? "true" : "false")
       << "\n";
    os << "transfer_include_fc6=" << (cfg.transfer.options.include_fc6 ? "true" : "false") << "\n";
    return os.str();
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir + "/config_resolved.txt", std::ios::trunc);
    if (!f) throw IoError("cannot write config echo in " + out_dir);
    f << serialize_run_config(cfg);
}

}  // namespace opn
