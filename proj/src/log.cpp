#include "backdrop/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace backdrop {

namespace {
std::atomic<LogLevel> current_level{LogLevel::info};
std::mutex log_mutex;

const char* level_tag(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warning: return "warning";
    case LogLevel::error: return "error";
    default: return "";
  }
}
}  // namespace

void set_log_level(LogLevel level) { current_level = level; }
LogLevel log_level() { return current_level; }

void log_message(LogLevel level, std::string_view message) {
  if (level < current_level.load()) return;
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << '[' << level_tag(level) << "] " << message << '\n';
}

}  // namespace backdrop
