#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "varigan/nn/rng.hpp"
#include "varigan/nn/tensor.hpp"

namespace varigan {

enum class ViewLabel { front = 0, side = 1, back = 2 };

inline constexpr std::array<ViewLabel, 3> kAllViews = {ViewLabel::front, ViewLabel::side,
                                                       ViewLabel::back};

std::string view_name(ViewLabel v);
ViewLabel view_from_name(const std::string& name);
ViewLabel view_from_index(std::size_t i);
inline std::size_t view_index(ViewLabel v) { return static_cast<std::size_t>(v); }

inline constexpr std::size_t kShapeClasses = 8;

/// Everything a render depends on. Same spec, same pixels, always.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t shape_class = 0;           // < kShapeClasses
  std::array<double, 3> base_color = {0.8, 0.2, 0.2};  // [0,1] each
  int texture_id = 0;
  double scale = 1.0;                    // [0.7, 1.0]
};

/// Deterministic flat-shaded garment silhouette. Values are byte-quantized
/// and mapped to [-1,1] exactly like the PNG loader, so a render and its
/// disk round trip agree bit for bit. Side view is the front silhouette at
/// 0.45 width with sleeves tucked; back view keeps the outline but drops the
/// neckline notch and shifts the texture phase.
Tensor render_scene(const SceneSpec& spec, ViewLabel view, std::size_t size);

/// 0/1 garment coverage from the same geometry render_scene uses.
Tensor render_mask(const SceneSpec& spec, ViewLabel view, std::size_t size);

/// Draw color/texture/scale/seed for a given silhouette class.
SceneSpec random_scene(Rng& rng, std::size_t shape_class);

}  // namespace varigan
