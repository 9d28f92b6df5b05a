#include "rawnet/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace rawnet::log {

namespace {
std::atomic<Level> g_level{Level::warn};
std::mutex g_mutex;

void emit(const char* tag, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}
}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void warn(const std::string& msg) {
  if (g_level >= Level::warn) emit("warn", msg);
}
void info(const std::string& msg) {
  if (g_level >= Level::info) emit("info", msg);
}
void debug(const std::string& msg) {
  if (g_level >= Level::debug) emit("debug", msg);
}

}  // namespace rawnet::log
