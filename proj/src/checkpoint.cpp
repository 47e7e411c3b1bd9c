#include "opn/checkpoint.hpp"

#include <cstring>
#include <sstream>

#include "opn/bytes.hpp"

namespace opn {

namespace {

constexpr char kMagic[4] = {'O', 'P', 'N', 'C'};
constexpr uint16_t kVersion = 1;

std::string serialize_meta(const ModelConfig& cfg, const CheckpointExtra& extra) {
    std::ostringstream os;
    os << "arch=tiny\n";
    os << "tuple_len=" << cfg.tuple_len << "\n";
    os << "patch=" << cfg.patch << "\n";
    os << "in_channels=" << cfg.in_channels << "\n";
    os << "conv1_out=" << cfg.conv1_out << "\n";
    os << "conv1_k=" << cfg.conv1_k << "\n";
    os << "conv1_stride=" << cfg.conv1_stride << "\n";
    os << "conv2_out=" << cfg.conv2_out << "\n";
    os << "conv2_k=" << cfg.conv2_k << "\n";
    os << "feat_dim=" << cfg.feat_dim << "\n";
    os << "pair_dim=" << cfg.pair_dim << "\n";
    os << "concat_h1=" << cfg.concat_h1 << "\n";
    os << "concat_h2=" << cfg.concat_h2 << "\n";
    os << "head=" << head_kind_name(cfg.head) << "\n";
    os << "shared_pair_units=" << (cfg.shared_pair_units ? 1 : 0) << "\n";
    os << "dropout=" << int(std::lround(cfg.dropout * 1000)) << "e-3\n";
    os << "classes_override=" << cfg.classes_override << "\n";
    os << "step=" << extra.step << "\n";
    os << "rng_state=" << extra.rng_state << "\n";
    for (const auto& [k, v] : extra.fields) os << "x." << k << "=" << v << "\n";
    return os.str();
}

void parse_meta(const std::string& text, ModelConfig& cfg, CheckpointExtra& extra) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "arch") {
            if (val != "tiny") throw FormatError("checkpoint: unknown arch " + val);
        } else if (key == "tuple_len") cfg.tuple_len = std::stoi(val);
        else if (key == "patch") cfg.patch = std::stoi(val);
        else if (key == "in_channels") cfg.in_channels = std::stoi(val);
        else if (key == "conv1_out") cfg.conv1_out = std::stoi(val);
        else if (key == "conv1_k") cfg.conv1_k = std::stoi(val);
        else if (key == "conv1_stride") cfg.conv1_stride = std::stoi(val);
        else if (key == "conv2_out") cfg.conv2_out = std::stoi(val);
        else if (key == "conv2_k") cfg.conv2_k = std::stoi(val);
        else if (key == "feat_dim") cfg.feat_dim = std::stoi(val);
        else if (key == "pair_dim") cfg.pair_dim = std::stoi(val);
        else if (key == "concat_h1") cfg.concat_h1 = std::stoi(val);
        else if (key == "concat_h2") cfg.concat_h2 = std::stoi(val);
        else if (key == "head") cfg.head = head_kind_from_name(val);
        else if (key == "shared_pair_units") cfg.shared_pair_units = val == "1";
        else if (key == "dropout") cfg.dropout = std::strtof(val.c_str(), nullptr);
        else if (key == "classes_override") cfg.classes_override = std::stoi(val);
        else if (key == "step") extra.step = std::stoll(val);
        else if (key == "rng_state") extra.rng_state = std::stoull(val);
        else if (key.rfind("x.", 0) == 0) extra.fields[key.substr(2)] = val;
        else throw FormatError("checkpoint: unknown meta key " + key);
    }
}

void write_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
    w.u32(uint32_t(name.size()));
    w.str(name);
    w.u8(uint8_t(t.ndim()));
    for (int d : t.shape) w.u32(uint32_t(d));
    for (float v : t.data) w.f32(v);
}

}  // namespace

void save_checkpoint(const std::string& path, ModelGraph& model, const CheckpointExtra& extra,
                     const std::vector<std::pair<std::string, const Tensor*>>& extra_tensors) {
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u16(kVersion);
    std::string meta = serialize_meta(model.cfg, extra);
    w.u32(uint32_t(meta.size()));
    w.str(meta);
    auto params = model.params();
    w.u32(uint32_t(params.size() + extra_tensors.size()));
    for (const auto& p : params) write_tensor(w, p.name, *p.value);
    for (const auto& [name, t] : extra_tensors) write_tensor(w, name, *t);
    w.finish_crc();
    w.save(path);
}

ModelGraph load_checkpoint(const std::string& path, CheckpointExtra* extra_out,
                           std::map<std::string, Tensor>* extra_tensors) {
    ByteReader r = ByteReader::from_file(path);
    r.check_trailing_crc("checkpoint");
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
    uint16_t version = r.u16();
    if (version != kVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    uint32_t meta_len = r.u32();
    std::string meta = r.str(meta_len);
    ModelConfig cfg;
    CheckpointExtra extra;
    parse_meta(meta, cfg, extra);

    Rng dummy(0);
    ModelGraph model = ModelGraph::build(cfg, dummy);

    std::map<std::string, Tensor*> by_name;
    for (auto& p : model.params()) by_name[p.name] = p.value;

    uint32_t count = r.u32();
    size_t model_hits = 0;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = r.u32();
        if (name_len > 4096) throw FormatError("checkpoint: implausible name length");
        std::string name = r.str(name_len);
        uint8_t ndim = r.u8();
        if (ndim > 8) throw FormatError("checkpoint: implausible rank");
        std::vector<int> shape;
        for (int d = 0; d < ndim; ++d) shape.push_back(int(r.u32()));
        Tensor t(shape);
        for (float& v : t.data) v = r.f32();
        auto it = by_name.find(name);
        if (it != by_name.end()) {
            if (it->second->shape != t.shape)
                throw FormatError("checkpoint: shape mismatch for " + name);
            *it->second = std::move(t);
            ++model_hits;
        } else if (extra_tensors) {
            (*extra_tensors)[name] = std::move(t);
        } else if (name.rfind("opt.", 0) != 0) {
            throw FormatError("checkpoint: unexpected tensor " + name);
        }
    }
    if (r.pos != r.payload_end()) throw FormatError("checkpoint: trailing bytes");
    if (model_hits != by_name.size()) throw FormatError("checkpoint: missing model tensors");
    if (extra_out) *extra_out = extra;
    return model;
}

TrunkExport extract_trunk(const std::string& ckpt_path, bool include_fc6) {
    ModelGraph m = load_checkpoint(ckpt_path);
    TrunkExport out;
    out.source_cfg = m.cfg;
    for (auto& p : m.params()) {
        bool conv_stage = p.name.rfind("trunk.conv", 0) == 0 || p.name.rfind("trunk.bn1", 0) == 0 ||
                          p.name.rfind("trunk.bn2", 0) == 0;
        bool fc_stage = p.name.rfind("trunk.fc6", 0) == 0 || p.name.rfind("trunk.bn6", 0) == 0;
        if (conv_stage || (include_fc6 && fc_stage))
            out.tensors.emplace_back(p.name, *p.value);
    }
    return out;
}

void load_trunk_into(ModelGraph& dst, const TrunkExport& trunk) {
    std::map<std::string, Tensor*> by_name;
    for (auto& p : dst.params()) by_name[p.name] = p.value;
    for (const auto& [name, t] : trunk.tensors) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("trunk import: no parameter named " + name);
        if (it->second->shape != t.shape)
            throw FormatError("trunk import: shape mismatch for " + name);
        *it->second = t;
    }
}

void reinit_fc_layers_for_transfer(ModelGraph& m, Rng& rng, bool keep_fc6) {
    auto gauss = [&](Tensor& w) {
        for (float& v : w.data) v = rng.normal() * kTransferHeadInitStd;
    };
    auto reset_bn = [](BatchNormT<float>& bn) {
        bn.gamma.fill(1.0f);
        bn.beta.fill(0.0f);
        bn.running_mean.fill(0.0f);
        bn.running_var.fill(1.0f);
    };
    if (!keep_fc6) {
        gauss(m.fc6.w);
        m.fc6.b.fill(0.0f);
        reset_bn(m.bn6);
    }
    for (auto& u : m.pair_units) {
        gauss(u.fc.w);
        u.fc.b.fill(0.0f);
        reset_bn(u.bn);
    }
    if (m.cfg.head == HeadKind::kConcat) {
        gauss(m.fc7a.w);
        m.fc7a.b.fill(0.0f);
        reset_bn(m.bn7a);
        gauss(m.fc7b.w);
        m.fc7b.b.fill(0.0f);
        reset_bn(m.bn7b);
    }
    gauss(m.classifier.w);
    m.classifier.b.fill(0.0f);
}

}  // namespace opn
