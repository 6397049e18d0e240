#pragma once

#include <spdlog/spdlog.h>

#include <cstdlib>

namespace aft {

/// Sets the global log level from AFT_LOG (trace, debug, info, warn, error,
/// critical, off). Defaults to info.
inline void init_logging_from_env() {
  const char* level = std::getenv("AFT_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

}  // namespace aft
