#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanemerge/rl/agent.hpp"
#include "lanemerge/rl/qnetwork.hpp"

namespace lanemerge::rl {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Binary layout (little endian): "LMQN", u32 version, u32 variant,
/// u32 n_dims, i32 dims..., i32 n_actions, then every layer's weights
/// (row-major f64) and bias, then a u64 FNV-1a checksum of all prior bytes.
std::vector<unsigned char> serialize_network(const QNetwork& net);
QNetwork deserialize_network(const std::vector<unsigned char>& bytes);

/// Writes `path` and a `path.json` sidecar describing the training config.
void save_checkpoint(const std::filesystem::path& path, const QNetwork& net, const TrainConfig& config);
/// Throws CheckpointError on I/O failure, corruption, or a variant mismatch
/// when `expected` is set.
QNetwork load_checkpoint(const std::filesystem::path& path, std::optional<Variant> expected = std::nullopt);

std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

}  // namespace lanemerge::rl
