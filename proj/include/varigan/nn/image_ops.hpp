#pragma once

#include <cstdint>
#include <vector>

#include "varigan/nn/tensor.hpp"

namespace varigan {

/// Images live in tensors as (C, H, W) or batched (N, C, H, W), values in
/// [-1, 1]. Byte images are interleaved RGB rows.
struct ByteImage {
  std::size_t width = 0, height = 0, channels = 3;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

Tensor image_to_tensor(const ByteImage& img);           // v/127.5 - 1
ByteImage tensor_to_image(const Tensor& chw);           // clamp, round half up
Tensor upsample_nearest2x(const Tensor& x);             // (N,C,H,W) -> (N,C,2H,2W)
Tensor downsample_box2x(const Tensor& x);               // 2x2 mean pool
Tensor to_grayscale(const Tensor& x);                   // channel mean, (N,1,H,W)
double channel_mean(const Tensor& chw, std::size_t c);

}  // namespace varigan
