#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace spanid::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Verbosity comes from SPANID_LOG (error|warn|info|debug), default warn.
inline Level threshold() {
  static Level level = [] {
    const char* env = std::getenv("SPANID_LOG");
    if (env == nullptr) return Level::kWarn;
    std::string v(env);
    if (v == "error") return Level::kError;
    if (v == "info") return Level::kInfo;
    if (v == "debug") return Level::kDebug;
    return Level::kWarn;
  }();
  return level;
}

inline void emit(Level level, const std::string& msg) {
  if (level > threshold()) return;
  static std::mutex mu;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[spanid:" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

inline void error(const std::string& msg) { emit(Level::kError, msg); }
inline void warn(const std::string& msg) { emit(Level::kWarn, msg); }
inline void info(const std::string& msg) { emit(Level::kInfo, msg); }
inline void debug(const std::string& msg) { emit(Level::kDebug, msg); }

}  // namespace spanid::log
