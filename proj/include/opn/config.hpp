#pragma once

#include <string>
#include <vector>

#include "opn/evaluator.hpp"
#include "opn/pipeline.hpp"

namespace opn {

// Declarative run configuration: flat sectioned key=value text. Unknown keys
// are rejected; every field has a documented default; the fully-resolved
// config is echoed into every output directory.
struct RunConfig {
    PipelineConfig pipeline;
    std::vector<uint64_t> eval_seeds = {0, 1, 2};
    TransferSettings transfer;
};

RunConfig default_run_config();

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Fully resolved echo (parse(serialize(c)) == c).
std::string serialize_run_config(const RunConfig& cfg);

void echo_config(const RunConfig& cfg, const std::string& out_dir);

}  // namespace opn
