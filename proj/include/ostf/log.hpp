#pragma once

#include <sstream>
#include <string>

namespace ostf::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

Level level();
void set_level(Level lv);
// Accepts "debug", "info", "warn", "error", "off". Throws ConfigError otherwise.
void set_level(const std::string& name);

void write(Level lv, const std::string& msg);

template <class... Args>
void emit(Level lv, Args&&... args) {
  if (lv < level()) return;
  std::ostringstream os;
  (os << ... << args);
  write(lv, os.str());
}

template <class... Args>
void debug(Args&&... args) {
  emit(Level::debug, std::forward<Args>(args)...);
}
template <class... Args>
void info(Args&&... args) {
  emit(Level::info, std::forward<Args>(args)...);
}
template <class... Args>
void warn(Args&&... args) {
  emit(Level::warn, std::forward<Args>(args)...);
}
template <class... Args>
void error(Args&&... args) {
  emit(Level::error, std::forward<Args>(args)...);
}

}  // namespace ostf::log
