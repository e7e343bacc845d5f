#pragma once

#include <string_view>

namespace csnc {

enum class LogLevel { quiet = 0, warning = 1, info = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

/// Writes "warning: <msg>" to stderr unless the level is quiet.
void log_warning(std::string_view msg);
void log_info(std::string_view msg);

}  // namespace csnc
