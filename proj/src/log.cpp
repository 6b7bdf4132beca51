#include "impartial/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace impartial::log {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto existing = spdlog::get("impartial");
    return existing ? existing : spdlog::stderr_color_mt("impartial");
  }();
  return instance;
}

void warn(std::string_view message) { logger()->warn("{}", message); }
void info(std::string_view message) { logger()->info("{}", message); }

}  // namespace impartial::log
