#pragma once

#include <map>
#include <string>
#include <vector>

#include "opn/model.hpp"

namespace opn {

// Checkpoint file ("OPNC"): text meta block (hyperparameters, step counter,
// rng state) + named tensors + trailing CRC32. Byte-exact layout in
// docs/FORMATS.md. save/load round-trips reproduce forward outputs
// bit-exactly.
struct CheckpointExtra {
    long long step = 0;
    uint64_t rng_state = 0;
    std::map<std::string, std::string> fields;
};

void save_checkpoint(const std::string& path, ModelGraph& model, const CheckpointExtra& extra,
                     const std::vector<std::pair<std::string, const Tensor*>>& extra_tensors = {});

// Rebuilds the model from the stored hyperparameters and fills every named
// parameter. Tensors outside the model's namespace (e.g. optimizer state
// "opt.*") land in extra_tensors.
ModelGraph load_checkpoint(const std::string& path, CheckpointExtra* extra = nullptr,
                           std::map<std::string, Tensor>* extra_tensors = nullptr);

// Convolution-stage weights (conv + their batch norms), optionally fc6/bn6.
// Head parameters are excluded; downstream consumers reinitialize new heads
// from Gaussian(0, 0.005).
struct TrunkExport {
    ModelConfig source_cfg;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

TrunkExport extract_trunk(const std::string& ckpt_path, bool include_fc6 = false);

// Copies exported trunk weights into a compatible model.
void load_trunk_into(ModelGraph& dst, const TrunkExport& trunk);

constexpr float kTransferHeadInitStd = 0.005f;

// Reinitializes all fully connected layers (fc6 and head) from
// Gaussian(0, 0.005) and resets their batch norms; the transfer protocol for
// a model whose conv stage was just copied.
void reinit_fc_layers_for_transfer(ModelGraph& m, Rng& rng, bool keep_fc6 = false);

}  // namespace opn
