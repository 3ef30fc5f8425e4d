#include "ostf/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include "ostf/errors.hpp"

namespace ostf::log {

namespace {
std::atomic<Level> g_level{Level::warn};
std::mutex g_mutex;

const char* tag(Level lv) {
  switch (lv) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    default: return "?";
  }
}
}  // namespace

Level level() { return g_level.load(std::memory_order_relaxed); }

void set_level(Level lv) { g_level.store(lv, std::memory_order_relaxed); }

void set_level(const std::string& name) {
  if (name == "debug") set_level(Level::debug);
  else if (name == "info") set_level(Level::info);
  else if (name == "warn") set_level(Level::warn);
  else if (name == "error") set_level(Level::error);
  else if (name == "off") set_level(Level::off);
  else throw ConfigError("unknown log level: " + name);
}

void write(Level lv, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[" << tag(lv) << "] " << msg << "\n";
}

}  // namespace ostf::log
