#include "varigan/metrics/ssim.hpp"

#include "varigan/nn/common.hpp"
#include "varigan/nn/image_ops.hpp"

namespace varigan {

namespace {

struct Moments {
  double mx = 0, my = 0, vx = 0, vy = 0, cov = 0;
};

// Biased second moments over one rectangular region of the grayscale planes.
Moments region_moments(const Tensor& x, const Tensor& y, std::size_t w, std::size_t r0,
                       std::size_t c0, std::size_t side) {
  Moments m;
  const double inv = 1.0 / static_cast<double>(side * side);
  for (std::size_t r = r0; r < r0 + side; ++r) {
    for (std::size_t c = c0; c < c0 + side; ++c) {
      m.mx += x[r * w + c];
      m.my += y[r * w + c];
    }
  }
  m.mx *= inv;
  m.my *= inv;
  for (std::size_t r = r0; r < r0 + side; ++r) {
    for (std::size_t c = c0; c < c0 + side; ++c) {
      const double dx = x[r * w + c] - m.mx;
      const double dy = y[r * w + c] - m.my;
      m.vx += dx * dx;
      m.vy += dy * dy;
      m.cov += dx * dy;
    }
  }
  m.vx *= inv;
  m.vy *= inv;
  m.cov *= inv;
  return m;
}

double ssim_of(const Moments& m, const SsimParams& p) {
  const double c1 = p.c1(), c2 = p.c2();
  const double num = (2.0 * m.mx * m.my + c1) * (2.0 * m.cov + c2);
  const double den = (m.mx * m.mx + m.my * m.my + c1) * (m.vx + m.vy + c2);
  return num / den;
}

Tensor gray_plane(const Tensor& img) {
  Tensor x = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  Tensor g = to_grayscale(x);
  return g.reshaped({g.dim(2) * g.dim(3)});
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, const SsimParams& params) {
  check(a.ndim() == 3 && a.same_shape(b), "ssim: expected matching (C,H,W) images, got {} vs {}",
        shape_str(a), shape_str(b));
  const std::size_t h = a.dim(1), w = a.dim(2);
  Tensor ga = gray_plane(a);
  Tensor gb = gray_plane(b);

  if (!params.windowed) {
    Moments m;
    const double inv = 1.0 / static_cast<double>(h * w);
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      m.mx += ga[i];
      m.my += gb[i];
    }
    m.mx *= inv;
    m.my *= inv;
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      const double dx = ga[i] - m.mx;
      const double dy = gb[i] - m.my;
      m.vx += dx * dx;
      m.vy += dy * dy;
      m.cov += dx * dy;
    }
    m.vx *= inv;
    m.vy *= inv;
    m.cov *= inv;
    return ssim_of(m, params);
  }

  const std::size_t win = params.window;
  check(win >= 1 && win <= h && win <= w, "ssim: window {} does not fit {}x{}", win, h, w);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + win <= h; ++r) {
    for (std::size_t c = 0; c + win <= w; ++c) {
      sum += ssim_of(region_moments(ga, gb, w, r, c, win), params);
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

}  // namespace varigan
