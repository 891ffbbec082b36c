#include "varigan/nn/image_ops.hpp"

#include <algorithm>
#include <cmath>

#include "varigan/nn/common.hpp"

namespace varigan {

Tensor image_to_tensor(const ByteImage& img) {
  check(img.channels == 3, "image_to_tensor: expected 3 channels, got {}", img.channels);
  check(img.pixels.size() == img.width * img.height * 3, "image_to_tensor: pixel count");
  Tensor t({3, img.height, img.width});
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        t.at3(c, y, x) = static_cast<double>(img.pixels[(y * img.width + x) * 3 + c]) / 127.5 - 1.0;
  return t;
}

ByteImage tensor_to_image(const Tensor& chw) {
  check(chw.ndim() == 3 && chw.dim(0) == 3, "tensor_to_image: expected (3,H,W), got {}",
        shape_str(chw.shape()));
  ByteImage img;
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  img.pixels.resize(img.width * img.height * 3);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double v = (chw.at3(c, y, x) + 1.0) * 127.5;
        v = std::clamp(v, 0.0, 255.0);
        img.pixels[(y * img.width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v));
      }
  return img;
}

Tensor upsample_nearest2x(const Tensor& x) {
  check(x.ndim() == 4, "upsample_nearest2x: expected rank 4");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor y({N, C, 2 * H, 2 * W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = x.data() + (n * C + c) * H * W;
      double* dst = y.raw().data() + (n * C + c) * 4 * H * W;
      for (std::size_t r = 0; r < 2 * H; ++r)
        for (std::size_t q = 0; q < 2 * W; ++q)
          dst[r * 2 * W + q] = src[(r / 2) * W + q / 2];
    }
  return y;
}

Tensor downsample_box2x(const Tensor& x) {
  check(x.ndim() == 4, "downsample_box2x: expected rank 4");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(H % 2 == 0 && W % 2 == 0, "downsample_box2x: odd extent {}x{}", H, W);
  Tensor y({N, C, H / 2, W / 2});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = x.data() + (n * C + c) * H * W;
      double* dst = y.raw().data() + (n * C + c) * (H / 2) * (W / 2);
      for (std::size_t r = 0; r < H / 2; ++r)
        for (std::size_t q = 0; q < W / 2; ++q)
          dst[r * (W / 2) + q] = 0.25 * (src[2 * r * W + 2 * q] + src[2 * r * W + 2 * q + 1] +
                                         src[(2 * r + 1) * W + 2 * q] +
                                         src[(2 * r + 1) * W + 2 * q + 1]);
    }
  return y;
}

Tensor to_grayscale(const Tensor& x) {
  check(x.ndim() == 4, "to_grayscale: expected rank 4");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor y({N, 1, H, W}, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    double* dst = y.raw().data() + n * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = x.data() + (n * C + c) * H * W;
      for (std::size_t i = 0; i < H * W; ++i) dst[i] += src[i] / static_cast<double>(C);
    }
  }
  return y;
}

double channel_mean(const Tensor& chw, std::size_t c) {
  check(chw.ndim() == 3 && c < chw.dim(0), "channel_mean: bad channel {}", c);
  const std::size_t plane = chw.dim(1) * chw.dim(2);
  const double* p = chw.data() + c * plane;
  double s = 0.0;
  for (std::size_t i = 0; i < plane; ++i) s += p[i];
  return s / static_cast<double>(plane);
}

}  // namespace varigan
