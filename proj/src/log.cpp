#include "agedetect/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace agedetect {

namespace {

std::atomic<LogLevel> g_level{LogLevel::Warn};
std::mutex g_sink_mutex;

std::string_view level_name(LogLevel level) {
    switch (level) {
        case LogLevel::Debug: return "debug";
        case LogLevel::Info: return "info";
        case LogLevel::Warn: return "warn";
        case LogLevel::Error: return "error";
        case LogLevel::Off: return "off";
    }
    return "unknown";
}

}  // namespace

std::optional<LogLevel> parse_log_level(std::string_view name) {
    for (auto level : {LogLevel::Debug, LogLevel::Info, LogLevel::Warn, LogLevel::Error, LogLevel::Off}) {
        if (level_name(level) == name) return level;
    }
    return std::nullopt;
}

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log_event(LogLevel level, std::string_view event, nlohmann::json fields) {
    if (level == LogLevel::Off || level < g_level.load()) return;
    nlohmann::json line = nlohmann::json::object();
    line["level"] = level_name(level);
    line["event"] = event;
    if (fields.is_object()) {
        for (auto& [key, value] : fields.items()) line[key] = value;
    }
    std::lock_guard lock(g_sink_mutex);
    std::cerr << line.dump() << '\n';
}

}  // namespace agedetect
