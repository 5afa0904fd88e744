#include "tema/log.h"

#include <atomic>
#include <iostream>
#include <mutex>

namespace tema {
namespace {

std::atomic<LogLevel> g_level{LogLevel::kWarning};
std::mutex g_mu;

const char* Prefix(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "D";
    case LogLevel::kInfo: return "I";
    case LogLevel::kWarning: return "W";
    case LogLevel::kError: return "E";
    case LogLevel::kOff: return "";
  }
  return "";
}

}  // namespace

void SetLogLevel(LogLevel level) { g_level = level; }
LogLevel GetLogLevel() { return g_level; }

void Log(LogLevel level, std::string_view message) {
  if (level < g_level.load() || level == LogLevel::kOff) return;
  std::lock_guard<std::mutex> lock(g_mu);
  std::clog << Prefix(level) << " tema: " << message << '\n';
}

}  // namespace tema
