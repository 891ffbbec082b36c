#pragma once

#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace varigan {

// Contract violation (bad shapes, bad arguments). Message should name expected vs got.
inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename... Args>
void check(bool cond, fmt::format_string<Args...> f, Args&&... args) {
  if (!cond) throw std::invalid_argument(fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace varigan
