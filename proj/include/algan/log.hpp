#pragma once

#include <string_view>

namespace algan::log {

enum class Level { quiet, info, debug };

/// Read once from ALGAN_LOG (debug|info|quiet); defaults to quiet.
Level level();
void set_level(Level level);

void info(std::string_view message);
void debug(std::string_view message);
/// Always printed to stderr, prefixed with "warning: ".
void warn(std::string_view message);

}  // namespace algan::log
