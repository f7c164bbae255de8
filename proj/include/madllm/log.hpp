#pragma once

#include <string_view>

namespace madllm {

enum class LogLevel { Quiet = 0, Warning = 1, Info = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();
void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace madllm
