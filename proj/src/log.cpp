#include "coxforge/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace coxforge {

namespace {

LogLevel from_env() {
    const char* v = std::getenv("COXFORGE_LOG");
    if (!v) return LogLevel::quiet;
    const std::string s(v);
    if (s == "debug" || s == "2") return LogLevel::debug;
    if (s == "info" || s == "1") return LogLevel::info;
    return LogLevel::quiet;
}

std::atomic<int>& level_slot() {
    static std::atomic<int> level{static_cast<int>(from_env())};
    return level;
}

std::mutex g_log_mutex;

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_slot().load()); }

void set_log_level(LogLevel level) { level_slot().store(static_cast<int>(level)); }

void log(LogLevel level, const std::string& message) {
    if (static_cast<int>(level) > level_slot().load()) return;
    std::lock_guard lock(g_log_mutex);
    std::cerr << "[coxforge] " << message << '\n';
}

}  // namespace coxforge
