#include "varigan/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "varigan/nn/common.hpp"
#include "varigan/nn/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace varigan {

DatasetManifest generate_dataset(std::size_t n_groups, std::uint64_t seed,
                                 const std::string& out_dir) {
  check(n_groups >= 1, "generate_dataset: n_groups must be >= 1");
  fs::create_directories(out_dir);

  Rng rng(seed);
  DatasetManifest manifest;
  manifest.seed = seed;
  json jgroups = json::array();
  for (std::size_t i = 0; i < n_groups; ++i) {
    DatasetManifest::Entry entry;
    entry.group_id = fmt::format("g{:04d}", i);
    entry.shape_class = i % kShapeClasses;  // balanced classes for the classifier
    SceneSpec spec = random_scene(rng, entry.shape_class);

    fs::path gdir = fs::path(out_dir) / entry.group_id;
    fs::create_directories(gdir);
    json jviews;
    for (ViewLabel v : kAllViews) {
      Tensor img = render_scene(spec, v, 128);
      std::string rel = entry.group_id + "/" + view_name(v) + ".png";
      write_png((fs::path(out_dir) / rel).string(), tensor_to_image(img));
      entry.views[v] = rel;
      jviews[view_name(v)] = rel;
    }
    jgroups.push_back({{"group_id", entry.group_id},
                       {"shape_class", entry.shape_class},
                       {"views", jviews}});
    manifest.groups.push_back(std::move(entry));
  }

  json j = {{"schema_version", manifest.schema_version},
            {"seed", manifest.seed},
            {"groups", jgroups}};
  std::ofstream os(fs::path(out_dir) / "manifest.json");
  check(os.good(), "generate_dataset: cannot write manifest in {}", out_dir);
  os << j.dump(2) << "\n";
  check(os.good(), "generate_dataset: manifest write failed");
  return manifest;
}

LoadResult load_grouped_dataset(const std::string& root) {
  check(fs::is_directory(root), "load_grouped_dataset: {} is not a directory", root);

  std::map<std::string, std::size_t> shape_by_id;
  fs::path mpath = fs::path(root) / "manifest.json";
  if (fs::exists(mpath)) {
    std::ifstream is(mpath);
    json j = json::parse(is, nullptr, false);
    if (!j.is_discarded() && j.contains("groups"))
      for (const auto& g : j["groups"])
        shape_by_id[g.value("group_id", "")] = g.value("shape_class", std::size_t{0});
  }

  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path().filename().string());
  std::sort(dirs.begin(), dirs.end());
  check(!dirs.empty(), "no groups found");

  LoadResult result;
  for (const std::string& id : dirs) {
    ImageGroup group;
    group.group_id = id;
    std::string missing;
    for (ViewLabel v : kAllViews) {
      fs::path p = fs::path(root) / id / (view_name(v) + ".png");
      if (fs::exists(p))
        group.views[v] = p.string();
      else
        missing += (missing.empty() ? "" : ",") + view_name(v);
    }
    if (!missing.empty()) {
      result.excluded.push_back({id, "missing view(s): " + missing});
      continue;
    }
    // cheap readability probe; a corrupt file should not poison training later
    try {
      for (ViewLabel v : kAllViews) read_png(group.views[v]);
    } catch (const std::exception& e) {
      result.excluded.push_back({id, e.what()});
      continue;
    }
    if (auto it = shape_by_id.find(id); it != shape_by_id.end())
      group.metadata["shape_class"] = std::to_string(it->second);
    result.groups.push_back(std::move(group));
  }
  check(!result.groups.empty(), "no groups found");
  return result;
}

Tensor load_image(const std::string& path) { return image_to_tensor(read_png(path)); }

std::vector<TrainingSample> make_pairs(const ImageGroup& group, PairTask task) {
  check(group.complete(), "make_pairs: group {} is incomplete", group.group_id);
  const ViewLabel cond = task == PairTask::from_front ? ViewLabel::front : ViewLabel::side;
  const std::array<ViewLabel, 2> targets =
      task == PairTask::from_front
          ? std::array{ViewLabel::side, ViewLabel::back}
          : std::array{ViewLabel::front, ViewLabel::back};

  Tensor cond_img = load_image(group.views.at(cond));
  std::vector<TrainingSample> samples;
  for (ViewLabel t : targets) {
    TrainingSample s;
    s.cond_image = cond_img;
    s.target_image = load_image(group.views.at(t));
    s.cond_view = cond;
    s.target_view = t;
    s.group_id = group.group_id;
    samples.push_back(std::move(s));
  }
  return samples;
}

std::pair<std::vector<ImageGroup>, std::vector<ImageGroup>> split_dataset(
    const std::vector<ImageGroup>& groups, double test_fraction, std::uint64_t seed) {
  check(groups.size() >= 2, "split_dataset: need at least 2 groups");
  check(test_fraction > 0.0 && test_fraction < 1.0,
        "split_dataset: test_fraction must be in (0,1)");

  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::size_t n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(groups.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, groups.size() - 1);

  std::pair<std::vector<ImageGroup>, std::vector<ImageGroup>> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_test ? out.second : out.first).push_back(groups[order[i]]);
  return out;
}

}  // namespace varigan
