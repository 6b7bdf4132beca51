#pragma once

#include <memory>
#include <string_view>

#include <spdlog/logger.h>

namespace impartial::log {

/// Shared library logger ("impartial"). Warnings for degenerate inputs
/// (constant channels, empty masks, ...) go through here.
std::shared_ptr<spdlog::logger> logger();

void warn(std::string_view message);
void info(std::string_view message);

}  // namespace impartial::log
