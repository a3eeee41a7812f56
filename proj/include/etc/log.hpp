// Logging to stderr, gated by the ETC_LOG environment variable
// (off | info | debug). Artifacts never receive log output, which keeps
// pipeline products byte-stable.
#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace etc {

enum class LogLevel { off = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("ETC_LOG");
    if (!v) return LogLevel::info;
    const std::string s = v;
    if (s == "off") return LogLevel::off;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[etc] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << "[etc:debug] " << msg << "\n";
}

}  // namespace etc
