#pragma once

#include "varigan/nn/tensor.hpp"

namespace varigan {

/// Luminance statistics are taken over the channel-mean grayscale image.
/// dynamic_range is the value span of the inputs (2 for [-1,1] tensors).
struct SsimParams {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 2.0;
  bool windowed = false;   // uniform window sliding over valid positions
  std::size_t window = 11;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// Structural similarity of two images, in [-1,1], 1 iff identical. Inputs
/// (C,H,W) with matching shapes; variances are biased (divide by pixel
/// count). With windowed set, the mean over all valid window positions; a
/// window covering the whole image reproduces the global statistic.
double ssim(const Tensor& a, const Tensor& b, const SsimParams& params = {});

}  // namespace varigan
