#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "ircr/model.hpp"

// Checkpoint directory: manifest.json listing every tensor (role, name, shape,
// file) plus one IRCR-T file per tensor.
namespace ircr::checkpoint {

struct Checkpoint {
  model::ModelParams student;
  model::ModelParams teacher;
  model::AdamState adam;
  std::uint64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);

/// When `expected` is given, a config or shape mismatch throws.
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const std::optional<model::ModelConfig>& expected = std::nullopt);

}  // namespace ircr::checkpoint
