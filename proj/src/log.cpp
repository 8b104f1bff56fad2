#include "algan/log.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace algan::log {

namespace {

std::optional<Level>& override_level() {
  static std::optional<Level> value;
  return value;
}

Level from_env() {
  const char* env = std::getenv("ALGAN_LOG");
  const std::string v = env ? env : "";
  if (v == "debug") return Level::debug;
  if (v == "info") return Level::info;
  return Level::quiet;
}

}  // namespace

Level level() {
  if (override_level()) return *override_level();
  static const Level env = from_env();
  return env;
}

void set_level(Level l) { override_level() = l; }

void info(std::string_view message) {
  if (level() >= Level::info) std::cerr << "info: " << message << '\n';
}

void debug(std::string_view message) {
  if (level() >= Level::debug) std::cerr << "debug: " << message << '\n';
}

void warn(std::string_view message) { std::cerr << "warning: " << message << '\n'; }

}  // namespace algan::log
