#include "varigan/cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "varigan/data/dataset.hpp"
#include "varigan/metrics/evaluate.hpp"
#include "varigan/nn/common.hpp"
#include "varigan/nn/image_ops.hpp"
#include "varigan/nn/png_io.hpp"
#include "varigan/train/trainer.hpp"

namespace varigan {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kFnvBasis = 14695981039346656037ULL;

std::uint64_t fnv_fold(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string digest_json(const json& j) {
  const std::string s = j.dump();
  return fmt::format("{:016x}", fnv_fold(kFnvBasis, s.data(), s.size()));
}

std::string iso_utc_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                     tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
}

/// Every regular file under base except the manifest itself, as sorted
/// slash-separated relative paths.
std::vector<std::string> collect_outputs(const fs::path& base) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(base)) {
    if (!e.is_regular_file()) continue;
    fs::path rel = fs::relative(e.path(), base);
    if (rel.filename() == "run_manifest.json") continue;
    out.push_back(rel.generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Digest over relative path names and file bytes, so two runs into
/// different directories compare equal iff their artifacts do.
std::string digest_outputs(const fs::path& base, const std::vector<std::string>& rel_paths) {
  std::uint64_t h = kFnvBasis;
  for (const std::string& rel : rel_paths) {
    h = fnv_fold(h, rel.data(), rel.size() + 1);
    std::ifstream f(base / rel, std::ios::binary);
    check(f.good(), "manifest digest: cannot read {}", (base / rel).string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    h = fnv_fold(h, bytes.data(), bytes.size() + 1);
  }
  return fmt::format("{:016x}", h);
}

void write_run_manifest(const fs::path& base, const std::string& command, const json& cfg,
                        std::uint64_t seed, const std::string& started) {
  const std::vector<std::string> outputs = collect_outputs(base);
  json m;
  m["command"] = command;
  m["config_digest"] = digest_json(cfg);
  m["seed"] = seed;
  m["started_at"] = started;
  m["finished_at"] = iso_utc_now();
  m["outputs"] = outputs;
  m["output_digest"] = digest_outputs(base, outputs);
  std::ofstream f(base / "run_manifest.json");
  check(f.good(), "cannot write manifest under {}", base.string());
  f << m.dump(2) << "\n";
  check(f.good(), "manifest write failed under {}", base.string());
}

std::vector<TrainingSample> samples_from(const std::string& data_dir, double test_frac,
                                         bool test_half, std::uint64_t seed) {
  LoadResult loaded = load_grouped_dataset(data_dir);
  for (const auto& ex : loaded.excluded) {
    std::cerr << fmt::format("skipping group {}: {}\n", ex.group_id, ex.reason);
  }
  std::vector<ImageGroup> groups = loaded.groups;
  if (test_frac > 0.0) {
    auto [test, train] = split_dataset(loaded.groups, test_frac, seed);
    groups = test_half ? test : train;
  }
  std::vector<TrainingSample> samples;
  for (const ImageGroup& g : groups) {
    for (PairTask task : {PairTask::from_front, PairTask::from_side}) {
      std::vector<TrainingSample> pairs = make_pairs(g, task);
      samples.insert(samples.end(), std::make_move_iterator(pairs.begin()),
                     std::make_move_iterator(pairs.end()));
    }
  }
  check(!samples.empty(), "no usable pairs under {}", data_dir);
  return samples;
}

json train_cfg_json(const TrainConfig& c, const AblationFlags& f, const std::string& stage) {
  return json{{"stage", stage},
              {"coarse_epochs", c.coarse_epochs},
              {"fine_epochs", c.fine_epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"seed", c.seed},
              {"lambda_l1", c.lambda_l1},
              {"kl_weight", c.kl_weight},
              {"non_saturating", c.non_saturating},
              {"desk_scale", c.desk_scale},
              {"no_variational", f.no_variational},
              {"no_unet", f.no_unet},
              {"no_l1", f.no_l1},
              {"no_cdisc", f.no_cdisc}};
}

ByteImage gray_tiles(const Tensor& maps) {
  const std::size_t c = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  const std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(c))));
  const std::size_t rows = (c + cols - 1) / cols;
  ByteImage img;
  img.width = cols * w;
  img.height = rows * h;
  img.pixels.assign(img.width * img.height * 3, 0);
  for (std::size_t m = 0; m < c; ++m) {
    double lo = maps[m * h * w], hi = lo;
    for (std::size_t i = 0; i < h * w; ++i) {
      lo = std::min(lo, maps[m * h * w + i]);
      hi = std::max(hi, maps[m * h * w + i]);
    }
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
    const std::size_t r0 = (m / cols) * h, c0 = (m % cols) * w;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t cc = 0; cc < w; ++cc) {
        const double v = (maps[m * h * w + r * w + cc] - lo) / span;
        const auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
        unsigned char* px = &img.pixels[((r0 + r) * img.width + c0 + cc) * 3];
        px[0] = px[1] = px[2] = byte;
      }
    }
  }
  return img;
}

void blit(ByteImage& canvas, const ByteImage& tile, std::size_t row0, std::size_t col0) {
  for (std::size_t r = 0; r < tile.height; ++r) {
    for (std::size_t c = 0; c < tile.width; ++c) {
      for (int k = 0; k < 3; ++k) {
        canvas.pixels[((row0 + r) * canvas.width + col0 + c) * 3 + k] =
            tile.pixels[(r * tile.width + c) * 3 + k];
      }
    }
  }
}

int cmd_gen_data(std::size_t groups, std::uint64_t seed, const std::string& out) {
  const std::string started = iso_utc_now();
  generate_dataset(groups, seed, out);
  write_run_manifest(out, "gen-data", json{{"groups", groups}, {"seed", seed}}, seed, started);
  std::cout << fmt::format("wrote {} groups under {}\n", groups, out);
  return 0;
}

int cmd_train(const std::string& stage, const std::string& data, const std::string& out,
              const std::string& coarse_dir, bool resume, const TrainConfig& cfg,
              const AblationFlags& flags) {
  const std::string started = iso_utc_now();
  std::vector<TrainingSample> samples = samples_from(data, 0.0, false, cfg.seed);
  Checkpoint ckpt;
  Checkpoint prev;
  const Checkpoint* resume_ptr = nullptr;
  if (resume) {
    prev = load_checkpoint(out, stage);
    resume_ptr = &prev;
  }
  if (stage == "coarse") {
    ckpt = train_coarse(samples, cfg, flags, resume_ptr);
  } else {
    Checkpoint coarse_ckpt = load_checkpoint(coarse_dir.empty() ? out : coarse_dir, "coarse");
    ckpt = train_fine(samples, coarse_ckpt, cfg, flags, resume_ptr);
  }
  save_checkpoint(ckpt, out);
  write_run_manifest(out, "train", train_cfg_json(cfg, flags, stage), cfg.seed, started);
  const EpochStats& last = ckpt.loss_history.back();
  std::string line = fmt::format("{} stage done, epoch {}:", stage, ckpt.epoch);
  for (const auto& [name, v] : last.values) line += fmt::format(" {}={:.4f}", name, v);
  std::cout << line << "\n";
  return 0;
}

int cmd_sample(const std::string& cond_path, const std::string& view_name,
               const std::string& ckpt_dir, std::size_t n, std::uint64_t seed,
               const std::string& out_path) {
  const std::string started = iso_utc_now();
  check(n >= 1, "sample: need n >= 1");
  Checkpoint coarse_ckpt = load_checkpoint(ckpt_dir, "coarse");
  Checkpoint fine_ckpt = load_checkpoint(ckpt_dir, "fine");
  CoarseNet coarse = coarse_net_from(coarse_ckpt);
  FineNet fine = fine_net_from(fine_ckpt);
  const ViewLabel view = view_from_name(view_name);
  const std::size_t hr = coarse_ckpt.coarse_config.hr_size;

  Tensor cond = scale_image_to(load_image(cond_path), hr);
  nn::Rng rng(derive_seed(seed, "sample"));

  ByteImage grid;
  grid.width = 3 * hr;
  grid.height = n * hr;
  grid.pixels.assign(grid.width * grid.height * 3, 0);
  const ByteImage cond_img = tensor_to_image(cond);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor noise({coarse_ckpt.coarse_config.latent_dim});
    for (std::size_t j = 0; j < noise.numel(); ++j) noise[j] = rng.normal();
    Tensor coarse_img = coarse.generate_coarse(cond, view, noise);
    Tensor fine_img = fine.fine_forward(coarse_img, cond, view);
    Tensor up = coarse_img.reshaped({1, 3, coarse_img.dim(1), coarse_img.dim(2)});
    while (up.dim(2) < hr) up = upsample_nearest2x(up);
    blit(grid, cond_img, i * hr, 0);
    blit(grid, tensor_to_image(up.reshaped({3, hr, hr})), i * hr, hr);
    blit(grid, tensor_to_image(fine_img), i * hr, 2 * hr);
  }
  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_png(out_path, grid);
  const fs::path base = out.has_parent_path() ? out.parent_path() : fs::path(".");
  write_run_manifest(base, "sample",
                     json{{"view", view_name}, {"n", n}, {"seed", seed}}, seed, started);
  std::cout << fmt::format("wrote {} rows to {}\n", n, out_path);
  return 0;
}

int cmd_eval(const std::string& data, const std::string& ckpt_dir,
             const std::string& classifier_path, double test_frac, std::uint64_t seed,
             const std::string& out_path) {
  const std::string started = iso_utc_now();
  Checkpoint coarse_ckpt = load_checkpoint(ckpt_dir, "coarse");
  Checkpoint fine_ckpt = load_checkpoint(ckpt_dir, "fine");
  std::vector<TrainingSample> samples = samples_from(data, test_frac, true, seed);

  ShapeClassifier cls(derive_seed(seed, "classifier"));
  cls.load(classifier_path);
  MetricsReport report = evaluate_pipeline(samples, coarse_ckpt, fine_ckpt, make_handle(cls), seed);

  json out;
  out["ssim"] = json{{"mean", report.ssim_mean}, {"std", report.ssim_std}};
  out["inception_score"] = json{{"mean", report.is.mean}, {"std", report.is.stddev}};
  out["coarse_ssim_mean"] = report.coarse_ssim_mean;
  out["n_samples"] = report.n_samples;
  const fs::path outp(out_path);
  if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
  std::ofstream f(out_path);
  check(f.good(), "cannot write {}", out_path);
  f << out.dump(2) << "\n";
  f.close();
  const fs::path base = outp.has_parent_path() ? outp.parent_path() : fs::path(".");
  write_run_manifest(base, "eval", json{{"seed", seed}, {"test_frac", test_frac}}, seed,
                     started);
  std::cout << fmt::format("ssim {:.4f} +- {:.4f}, generation score {:.3f} +- {:.3f} ({} pairs)\n",
                           report.ssim_mean, report.ssim_std, report.is.mean, report.is.stddev,
                           report.n_samples);
  return 0;
}

int cmd_dump_features(const std::string& cond_path, const std::string& view_name,
                      const std::string& ckpt_dir, std::uint64_t seed,
                      const std::string& out_dir) {
  const std::string started = iso_utc_now();
  Checkpoint coarse_ckpt = load_checkpoint(ckpt_dir, "coarse");
  CoarseNet coarse = coarse_net_from(coarse_ckpt);
  const ViewLabel view = view_from_name(view_name);
  Tensor cond = scale_image_to(load_image(cond_path), coarse_ckpt.coarse_config.hr_size);

  nn::Rng rng(derive_seed(seed, "dump-features"));
  Tensor noise({coarse_ckpt.coarse_config.latent_dim});
  for (std::size_t j = 0; j < noise.numel(); ++j) noise[j] = rng.normal();

  CoarseNet::Probes probes = coarse.probe_activations(cond, view, noise);
  check(probes.encoder.size() >= 2 && probes.decoder.size() >= 3,
        "dump-features: network too shallow to probe");
  fs::create_directories(out_dir);
  const std::size_t nd = probes.decoder.size();
  write_png((fs::path(out_dir) / "enc1.png").string(), gray_tiles(probes.encoder[0]));
  write_png((fs::path(out_dir) / "enc2.png").string(), gray_tiles(probes.encoder[1]));
  write_png((fs::path(out_dir) / "dec-2.png").string(), gray_tiles(probes.decoder[nd - 3]));
  write_png((fs::path(out_dir) / "dec-1.png").string(), gray_tiles(probes.decoder[nd - 2]));
  write_run_manifest(out_dir, "dump-features", json{{"view", view_name}, {"seed", seed}}, seed,
                     started);
  std::cout << fmt::format("wrote 4 activation grids under {}\n", out_dir);
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"coarse-to-fine multi-view garment image generator"};
  app.require_subcommand(1);

  std::size_t groups = 16;
  std::uint64_t seed = 0;
  std::string out, data, stage, coarse_dir, cond_path, ckpt_dir, classifier_path, out_path;
  std::string view_name = "side";
  std::size_t n_rows = 4;
  double test_frac = 0.0;
  bool desk = false, resume = false;

  TrainConfig base_cfg;
  AblationFlags flags;
  std::size_t epochs = 0;
  std::size_t batch = 0;
  double lr = 0.0, lambda_l1 = 0.0, kl_weight = 0.0;
  bool non_saturating = false;

  CLI::App* gen = app.add_subcommand("gen-data", "render a grouped synthetic dataset");
  gen->add_option("--groups", groups, "number of view-complete groups")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "dataset seed");
  gen->add_option("--out", out, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train one stage");
  train->set_config("--config", "", "INI file with long-option keys");
  train->add_option("--stage", stage, "coarse or fine")
      ->required()
      ->check(CLI::IsMember({"coarse", "fine"}));
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--out", out, "checkpoint directory")->required();
  train->add_option("--coarse-ckpt", coarse_dir, "coarse checkpoint directory (default --out)");
  train->add_option("--seed", seed, "training seed");
  train->add_option("--epochs", epochs, "epoch target for the trained stage");
  train->add_option("--batch", batch, "minibatch size");
  train->add_option("--lr", lr, "learning rate");
  train->add_option("--lambda-l1", lambda_l1, "reconstruction weight in the refiner objective");
  train->add_option("--kl-weight", kl_weight, "prior term weight in the coarse objective");
  train->add_flag("--non-saturating", non_saturating, "use the -log(d) generator objective");
  train->add_flag("--desk", desk, "desk-scale preset (small nets, 20 epochs, batch 8)");
  train->add_flag("--resume", resume, "continue from the checkpoint in --out");
  train->add_flag("--no-variational", flags.no_variational, "coarse stage as a plain GAN");
  train->add_flag("--no-unet", flags.no_unet, "refiner without skip connections");
  train->add_flag("--no-l1", flags.no_l1, "drop the reconstruction term");
  train->add_flag("--no-cdisc", flags.no_cdisc, "unconditional discriminator");

  CLI::App* sample = app.add_subcommand("sample", "generate a grid of outputs");
  sample->add_option("--cond", cond_path, "condition image (PNG)")->required();
  sample->add_option("--view", view_name, "target view: front, side or back");
  sample->add_option("--ckpt", ckpt_dir, "checkpoint directory with both stages")->required();
  sample->add_option("--n", n_rows, "rows (independent draws)")->check(CLI::PositiveNumber);
  sample->add_option("--seed", seed, "noise seed");
  sample->add_option("--out", out_path, "output PNG path")->required();

  CLI::App* eval = app.add_subcommand("eval", "score the pipeline on a dataset");
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--ckpt", ckpt_dir, "checkpoint directory with both stages")->required();
  eval->add_option("--classifier", classifier_path, "shape classifier weights")->required();
  eval->add_option("--test-frac", test_frac, "score only a held-out group fraction")
      ->check(CLI::Range(0.0, 0.9));
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--out", out_path, "report JSON path")->required();

  CLI::App* dump = app.add_subcommand("dump-features", "write activation grids for one input");
  dump->add_option("--cond", cond_path, "condition image (PNG)")->required();
  dump->add_option("--view", view_name, "target view");
  dump->add_option("--ckpt", ckpt_dir, "checkpoint directory with a coarse stage")->required();
  dump->add_option("--seed", seed, "noise seed");
  dump->add_option("--out", out, "output directory")->required();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(groups, seed, out);
    if (train->parsed()) {
      TrainConfig cfg = desk ? desk_train_config() : TrainConfig{};
      cfg.seed = seed;
      cfg.non_saturating = non_saturating;
      if (train->count("--epochs")) {
        (stage == "coarse" ? cfg.coarse_epochs : cfg.fine_epochs) = epochs;
      }
      if (train->count("--batch")) cfg.batch_size = batch;
      if (train->count("--lr")) cfg.learning_rate = lr;
      if (train->count("--lambda-l1")) cfg.lambda_l1 = lambda_l1;
      if (train->count("--kl-weight")) cfg.kl_weight = kl_weight;
      return cmd_train(stage, data, out, coarse_dir, resume, cfg, flags);
    }
    if (sample->parsed()) {
      return cmd_sample(cond_path, view_name, ckpt_dir, n_rows, seed, out_path);
    }
    if (eval->parsed()) {
      return cmd_eval(data, ckpt_dir, classifier_path, test_frac, seed, out_path);
    }
    if (dump->parsed()) {
      return cmd_dump_features(cond_path, view_name, ckpt_dir, seed, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace varigan
