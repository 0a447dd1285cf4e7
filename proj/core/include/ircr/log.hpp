#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace ircr::log {

/// Shared stderr logger. The level comes from IRCR_LOG
/// (trace|debug|info|warn|error|off, default info).
std::shared_ptr<spdlog::logger> get();

void set_level(spdlog::level::level_enum level);

}  // namespace ircr::log
