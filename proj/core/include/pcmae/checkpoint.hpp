#pragma once

// Binary checkpoint layout (all integers little-endian):
//   "PCME" | u32 version | u32 len + config text (includes a [state] section)
//   records: u32 name len + name | u32 rank | rank x u64 dims | f32 data
//   u32 CRC32 of every preceding byte
// Record names are "param/<name>", "adam_m/<name>" and "adam_v/<name>".

#include "pcmae/config.hpp"
#include "pcmae/model.hpp"
#include "pcmae/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pcmae {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Parameters in a fixed order with their weight-decay flags.
std::vector<optim::NamedParam> named_parameters(model::ModelParams<float>& params);

struct Checkpoint {
    TrainConfig config;
    /// Completed optimizer steps. Together with config.seed this is the whole
    /// random state: every draw is derived from (seed, step, ...).
    std::uint64_t step = 0;
    model::ModelParams<float> params;
    optim::AdamWState optimizer;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Verifies magic, version and checksum before building any state.
Checkpoint parse_checkpoint(std::string_view bytes);

/// Written to a temporary sibling and renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32(std::string_view bytes);

}  // namespace pcmae
