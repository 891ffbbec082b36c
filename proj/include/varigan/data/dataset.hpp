#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "varigan/data/render.hpp"

namespace varigan {

struct ImageGroup {
  std::string group_id;
  std::map<ViewLabel, std::string> views;  // view -> image path
  std::map<std::string, std::string> metadata;
  bool complete() const { return views.size() == 3; }
};

struct TrainingSample {
  Tensor cond_image;   // (3,H,W), [-1,1]
  Tensor target_image; // same shape
  ViewLabel cond_view = ViewLabel::front;
  ViewLabel target_view = ViewLabel::side;
  std::string group_id;
};

struct DatasetManifest {
  int schema_version = 1;
  std::uint64_t seed = 0;
  struct Entry {
    std::string group_id;
    std::size_t shape_class = 0;
    std::map<ViewLabel, std::string> views;  // relative paths
  };
  std::vector<Entry> groups;
};

/// Renders n_groups view-complete groups under out_dir
/// (<out_dir>/<group_id>/{front,side,back}.png, 128x128 RGB) plus
/// manifest.json. Deterministic in (n_groups, seed).
DatasetManifest generate_dataset(std::size_t n_groups, std::uint64_t seed,
                                 const std::string& out_dir);

struct LoadResult {
  std::vector<ImageGroup> groups;
  struct Exclusion {
    std::string group_id;
    std::string reason;
  };
  std::vector<Exclusion> excluded;
};

/// Scans <root>/<group>/{front,side,back}.png. Groups missing a view land in
/// `excluded` with a reason instead of the group list. Shape-class metadata
/// is picked up from manifest.json when present.
LoadResult load_grouped_dataset(const std::string& root);

Tensor load_image(const std::string& path);  // PNG -> (3,H,W) in [-1,1]

enum class PairTask { from_front, from_side };

/// from_front: (front->side), (front->back); from_side: (side->front),
/// (side->back). Fixed order. Loads pixels from the group's locators.
std::vector<TrainingSample> make_pairs(const ImageGroup& group, PairTask task);

/// Seeded shuffle, then cut at group granularity. Both halves non-empty.
std::pair<std::vector<ImageGroup>, std::vector<ImageGroup>> split_dataset(
    const std::vector<ImageGroup>& groups, double test_fraction, std::uint64_t seed);

}  // namespace varigan
