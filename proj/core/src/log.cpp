#include "ircr/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace ircr::log {

std::shared_ptr<spdlog::logger> get() {
  static const std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("ircr");
    l->set_pattern("[%H:%M:%S] [%^%l%$] %v");
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("IRCR_LOG")) {
      const auto parsed = spdlog::level::from_str(env);
      // from_str maps unknown names to off; only accept it when asked for.
      if (parsed != spdlog::level::off || std::string(env) == "off") level = parsed;
    }
    l->set_level(level);
    return l;
  }();
  return logger;
}

void set_level(spdlog::level::level_enum level) { get()->set_level(level); }

}  // namespace ircr::log
