#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "dqrank/qnet.hpp"
#include "dqrank/user_model.hpp"

namespace dqrank {

inline constexpr int kModelVersion = 1;

/// Trained heads with their optimizer state. The Q-network is absent after
/// pretraining only.
struct Checkpoint {
    UserModel user;
    std::optional<QNet> qnet;
};

/// Layout: magic "DQRANKCK", u32 header length, JSON header
/// {encoder_id, d, model_version, arrays: [{name, rows, cols}], ...}, then each
/// array as little-endian float64 in the listed order.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Refuses files written under a different encoder id or dimension.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dqrank
