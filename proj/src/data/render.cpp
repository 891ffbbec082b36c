#include "varigan/data/render.hpp"

#include <cmath>
#include <optional>

#include "varigan/nn/common.hpp"

namespace varigan {

std::string view_name(ViewLabel v) {
  switch (v) {
    case ViewLabel::front: return "front";
    case ViewLabel::side: return "side";
    case ViewLabel::back: return "back";
  }
  throw std::invalid_argument("view_name: bad enum value");
}

ViewLabel view_from_name(const std::string& name) {
  for (ViewLabel v : kAllViews)
    if (view_name(v) == name) return v;
  throw std::invalid_argument("unknown view name: " + name);
}

ViewLabel view_from_index(std::size_t i) {
  check(i < 3, "view index {} out of range", i);
  return static_cast<ViewLabel>(i);
}

namespace {

struct Rgb {
  double r, g, b;
};

// Piecewise-linear half-width profiles, v in [0,1] top to bottom, width in
// units of the base half width W. Negative means "no garment at this v".
double torso_width(std::size_t cls, double v) {
  switch (cls) {
    case 0:  // shift dress: shoulders to flared hem
      return v < 0.45 ? 0.55 + v * (0.20 / 0.45) : 0.75 + (v - 0.45) * (0.25 / 0.55);
    case 1:  // tee
      return v < 0.25 ? 0.85 : 0.70 + (v - 0.25) * (0.05 / 0.75);
    case 2:  // pants: waist block then legs (legs drawn separately)
      return v < 0.35 ? 0.60 - v * (0.05 / 0.35) : -1.0;
    case 3:  // a-line skirt
      return v < 0.15 ? 0.45 : 0.45 + (v - 0.15) * (0.70 / 0.85);
    case 4:  // coat
      return 0.80 + v * 0.15;
    case 5:  // tank top
      return v < 0.12 ? -1.0 : 0.65 + (v - 0.12) * (0.05 / 0.88);
    case 6:  // shorts: waist block, legs end high
      return v < 0.30 ? 0.58 : -1.0;
    case 7:  // robe
      return 0.90 + v * 0.20;
  }
  throw std::invalid_argument("shape_class out of range");
}

bool has_neck_notch(std::size_t cls) {
  return cls == 0 || cls == 1 || cls == 4 || cls == 5 || cls == 7;
}

// Full silhouette test in canvas units (u, y in [0,1]), before views.
bool in_silhouette(const SceneSpec& spec, double u, double y) {
  const double top = 0.5 - 0.42 * spec.scale;
  const double bot = 0.5 + 0.42 * spec.scale;
  if (y < top || y > bot) return false;
  const double v = (y - top) / (bot - top);
  const double W = 0.30 * spec.scale;
  const double dx = u - 0.5;
  const std::size_t cls = spec.shape_class;

  double tw = torso_width(cls, v);
  if (tw > 0 && std::abs(dx) <= tw * W) return true;

  if (cls == 1 && v >= 0.05 && v <= 0.30) {  // tee sleeves
    if (std::abs(dx) <= 1.30 * W) return true;
  }
  if (cls == 5 && v < 0.12) {  // tank straps
    if (std::abs(std::abs(dx) - 0.40 * W) <= 0.10 * W) return true;
  }
  if (cls == 2 && v >= 0.35) {  // pants legs
    double lw = 0.24 - (v - 0.35) * 0.08;
    if (std::abs(std::abs(dx) - 0.33 * W) <= lw * W) return true;
  }
  if (cls == 6 && v >= 0.30 && v <= 0.62) {  // shorts legs
    if (std::abs(std::abs(dx) - 0.30 * W) <= 0.26 * W) return true;
  }
  return false;
}

// Geometry shared by render_scene and render_mask: does this pixel belong to
// the garment, and if so which color does it take.
std::optional<Rgb> pixel_color(const SceneSpec& spec, ViewLabel view, double u, double y) {
  double uu = u;
  if (view == ViewLabel::side) uu = 0.5 + (u - 0.5) / 0.45;  // squeeze to 45% width

  if (!in_silhouette(spec, uu, y)) return std::nullopt;

  const double top = 0.5 - 0.42 * spec.scale;
  const double bot = 0.5 + 0.42 * spec.scale;
  const double v = (y - top) / (bot - top);
  const double W = 0.30 * spec.scale;

  // Neckline notch, front view only.
  if (view == ViewLabel::front && has_neck_notch(spec.shape_class) && v < 0.07) {
    double half = 0.14 * W * (1.0 - v / 0.07);
    if (std::abs(uu - 0.5) < half) return std::nullopt;
  }

  Rgb base{spec.base_color[0], spec.base_color[1], spec.base_color[2]};
  Rgb sec{spec.base_color[1] * 0.7 + 0.15, spec.base_color[2] * 0.7 + 0.15,
          spec.base_color[0] * 0.7 + 0.15};

  double phase = static_cast<double>(spec.seed % 8) / 8.0;
  if (view == ViewLabel::back) phase += 0.5;  // back swaps the pattern alignment

  bool pattern = false;
  switch (spec.texture_id & 3) {
    case 0:
      break;
    case 1:  // horizontal stripes
      pattern = std::fmod(v * 8.0 + phase, 1.0) < 0.25;
      break;
    case 2:  // vertical stripes
      pattern = std::fmod(uu * 8.0 + phase + 8.0, 1.0) < 0.25;
      break;
    case 3: {  // dot grid
      double cu = std::fmod(uu * 8.0 + phase + 8.0, 1.0) - 0.5;
      double cv = std::fmod(v * 8.0 + phase, 1.0) - 0.5;
      pattern = cu * cu + cv * cv < 0.09;
      break;
    }
  }

  // Front-only trims: coat/robe center opening line.
  if (view == ViewLabel::front && (spec.shape_class == 4 || spec.shape_class == 7) &&
      std::abs(uu - 0.5) < 0.035 * W)
    pattern = true;
  // Robe belt band, front and side.
  if (view != ViewLabel::back && spec.shape_class == 7 && v >= 0.42 && v <= 0.48)
    pattern = true;

  return pattern ? sec : base;
}

std::uint8_t to_byte(double c) {
  double v = std::clamp(c, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::lround(v));
}

constexpr Rgb kBackground{0.85, 0.85, 0.88};

}  // namespace

Tensor render_scene(const SceneSpec& spec, ViewLabel view, std::size_t size) {
  check(size == 64 || size == 128, "invalid render size");
  check(spec.shape_class < kShapeClasses, "shape_class {} out of range", spec.shape_class);
  Tensor img({3, size, size});
  for (std::size_t py = 0; py < size; ++py) {
    double y = (static_cast<double>(py) + 0.5) / static_cast<double>(size);
    for (std::size_t px = 0; px < size; ++px) {
      double u = (static_cast<double>(px) + 0.5) / static_cast<double>(size);
      Rgb c = pixel_color(spec, view, u, y).value_or(kBackground);
      // byte-quantize so disk round trips are exact
      img.at3(0, py, px) = static_cast<double>(to_byte(c.r)) / 127.5 - 1.0;
      img.at3(1, py, px) = static_cast<double>(to_byte(c.g)) / 127.5 - 1.0;
      img.at3(2, py, px) = static_cast<double>(to_byte(c.b)) / 127.5 - 1.0;
    }
  }
  return img;
}

Tensor render_mask(const SceneSpec& spec, ViewLabel view, std::size_t size) {
  check(size == 64 || size == 128, "invalid render size");
  Tensor mask({1, size, size});
  for (std::size_t py = 0; py < size; ++py) {
    double y = (static_cast<double>(py) + 0.5) / static_cast<double>(size);
    for (std::size_t px = 0; px < size; ++px) {
      double u = (static_cast<double>(px) + 0.5) / static_cast<double>(size);
      mask.at3(0, py, px) = pixel_color(spec, view, u, y).has_value() ? 1.0 : 0.0;
    }
  }
  return mask;
}

SceneSpec random_scene(Rng& rng, std::size_t shape_class) {
  check(shape_class < kShapeClasses, "shape_class {} out of range", shape_class);
  SceneSpec spec;
  spec.seed = static_cast<std::uint64_t>(rng.below(1u << 30));
  spec.shape_class = shape_class;
  for (double& c : spec.base_color) c = rng.uniform(0.2, 0.95);
  spec.texture_id = static_cast<int>(rng.below(4));
  spec.scale = rng.uniform(0.7, 1.0);
  return spec;
}

}  // namespace varigan
