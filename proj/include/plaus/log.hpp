#pragma once

#include <string_view>

namespace plaus {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, silent = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();

// Thread-safe line logging to stderr.
void log(LogLevel level, std::string_view message);
inline void log_debug(std::string_view m) { log(LogLevel::debug, m); }
inline void log_info(std::string_view m) { log(LogLevel::info, m); }
inline void log_warn(std::string_view m) { log(LogLevel::warn, m); }

}  // namespace plaus
