#pragma once

#include <filesystem>
#include <iosfwd>

#include "ircr/data.hpp"
#include "ircr/trainer.hpp"

// INI configuration with sections [train], [wbis], [piac], [match], [data].
// Unknown sections or keys are errors; absent keys keep their defaults.
namespace ircr::config {

struct RunConfig {
  trainer::TrainConfig train;
  data::SceneConfig scene;
};

RunConfig parse_config(std::istream& in, const RunConfig& defaults = {});
RunConfig load_config(const std::filesystem::path& path, const RunConfig& defaults = {});

}  // namespace ircr::config
