#pragma once

#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

namespace agedetect {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

std::optional<LogLevel> parse_log_level(std::string_view name);
void set_log_level(LogLevel level);
LogLevel log_level();

/// Writes one JSON object per line to stderr:
/// {"level": ..., "event": ..., <fields>}.
void log_event(LogLevel level, std::string_view event, nlohmann::json fields = nlohmann::json::object());

}  // namespace agedetect
