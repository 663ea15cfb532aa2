#pragma once

#include <iostream>
#include <string>

namespace msnerf::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2 };

Level& level();

inline void warn(const std::string& msg) {
  if (level() >= Level::Warn) std::cerr << "warning: " << msg << '\n';
}

inline void info(const std::string& msg) {
  if (level() >= Level::Info) std::cerr << msg << '\n';
}

}  // namespace msnerf::log
