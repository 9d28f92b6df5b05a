#pragma once

#include <string>

namespace rawnet::log {

enum class Level { quiet = 0, warn = 1, info = 2, debug = 3 };

void set_level(Level l);
Level level();

// Messages go to stderr; never to stdout, which carries command results.
void warn(const std::string& msg);
void info(const std::string& msg);
void debug(const std::string& msg);

}  // namespace rawnet::log
