#pragma once

#include "scd/common.hpp"
#include "scd/model.hpp"

#include "json.hpp"

#include <string>
#include <utility>
#include <vector>

namespace scd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container: 8-byte magic, u32 version, u64 header size, a JSON header
// (config snapshot, resolved model shape, catalog, step, RNG state, tensor
// index), then every tensor as row-major little-endian float64.
struct Checkpoint {
    std::string kind;  // "seqscd" or "baseline"
    nlohmann::json config;
    nlohmann::json model;
    std::vector<std::string> catalog;
    long step = 0;
    long total_steps = 0;
    long optimizer_steps = 0;
    std::string rng_state;
    std::vector<std::pair<std::string, Matrix>> tensors;

    const Matrix* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

RunConfig checkpoint_config(const Checkpoint& ckpt);
ModelSpec checkpoint_spec(const Checkpoint& ckpt);

// Copies the named tensors of a checkpoint into an already shaped parameter set.
void restore_tensors(const Checkpoint& ckpt, TensorList params, const std::string& prefix = "");

SeqScdParams load_seqscd_params(const Checkpoint& ckpt, const ModelSpec& spec);
BaselineParams load_baseline_params(const Checkpoint& ckpt, const ModelSpec& spec);

}  // namespace scd
