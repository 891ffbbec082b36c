#pragma once

#include <string>

#include "varigan/nn/image_ops.hpp"

namespace varigan {

void write_png(const std::string& path, const ByteImage& img);
ByteImage read_png(const std::string& path);  // always returns 8-bit RGB

}  // namespace varigan
