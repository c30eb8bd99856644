#pragma once

#include <string>

namespace coxforge {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

/// Level read once from COXFORGE_LOG ("quiet", "info", "debug" or 0-2); default quiet.
LogLevel log_level();
void set_log_level(LogLevel level);
/// Writes one line to stderr if `level` is enabled.
void log(LogLevel level, const std::string& message);

}  // namespace coxforge
