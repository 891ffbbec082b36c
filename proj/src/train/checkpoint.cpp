#include "varigan/train/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "varigan/nn/common.hpp"
#include "varigan/nn/store.hpp"

namespace varigan {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  check(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  check(learning_rate > 0, "TrainConfig: learning_rate must be positive");
  check(adam_beta1 >= 0 && adam_beta1 < 1, "TrainConfig: beta1 out of [0,1)");
  check(adam_beta2 >= 0 && adam_beta2 < 1, "TrainConfig: beta2 out of [0,1)");
  check(lambda_l1 >= 0, "TrainConfig: lambda_l1 must be >= 0");
  check(kl_weight >= 0, "TrainConfig: kl_weight must be >= 0");
}

TrainConfig desk_train_config() {
  TrainConfig cfg;
  cfg.coarse_epochs = 20;
  cfg.fine_epochs = 20;
  cfg.batch_size = 8;
  cfg.learning_rate = 2e-3;
  cfg.desk_scale = true;
  return cfg;
}

PipelineConfigs make_pipeline_configs(const TrainConfig& cfg, const AblationFlags& flags) {
  cfg.validate();
  PipelineConfigs out;
  if (cfg.desk_scale) {
    out.coarse = desk_coarse_config();
    out.fine = desk_fine_config();
    out.disc = desk_disc_config();
  } else {
    out.coarse = CoarseConfig{};
    out.fine = FineConfig{};
    out.disc = DiscConfig{};
  }
  out.coarse.kl_weight = cfg.kl_weight;
  if (flags.no_unet) out.fine.skips_enabled = false;
  if (flags.no_cdisc) out.disc.conditional = false;
  out.disc.input_size = out.fine.hr_size;
  out.aux_disc = lr_disc_config(out.coarse.lr_size, cfg.desk_scale);
  if (flags.no_cdisc) out.aux_disc.conditional = false;
  out.coarse.validate();
  out.fine.validate();
  out.disc.validate();
  out.aux_disc.validate();
  check(out.coarse.lr_size == out.fine.lr_size() && out.coarse.hr_size == out.fine.hr_size,
        "pipeline configs: coarse {}->{} does not feed fine {}->{}", out.coarse.hr_size,
        out.coarse.lr_size, out.fine.lr_size(), out.fine.hr_size);
  return out;
}

namespace {

json to_json(const TrainConfig& c) {
  return json{{"coarse_epochs", c.coarse_epochs}, {"fine_epochs", c.fine_epochs},
              {"batch_size", c.batch_size},       {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2},
              {"seed", c.seed},                   {"lambda_l1", c.lambda_l1},
              {"kl_weight", c.kl_weight},         {"non_saturating", c.non_saturating},
              {"desk_scale", c.desk_scale}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.coarse_epochs = j.at("coarse_epochs").get<std::size_t>();
  c.fine_epochs = j.at("fine_epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lambda_l1 = j.at("lambda_l1").get<double>();
  c.kl_weight = j.at("kl_weight").get<double>();
  c.non_saturating = j.at("non_saturating").get<bool>();
  c.desk_scale = j.at("desk_scale").get<bool>();
  return c;
}

json to_json(const AblationFlags& f) {
  return json{{"no_variational", f.no_variational},
              {"no_unet", f.no_unet},
              {"no_l1", f.no_l1},
              {"no_cdisc", f.no_cdisc}};
}

AblationFlags flags_from_json(const json& j) {
  AblationFlags f;
  f.no_variational = j.at("no_variational").get<bool>();
  f.no_unet = j.at("no_unet").get<bool>();
  f.no_l1 = j.at("no_l1").get<bool>();
  f.no_cdisc = j.at("no_cdisc").get<bool>();
  return f;
}

json to_json(const CoarseConfig& c) {
  return json{{"latent_dim", c.latent_dim},
              {"lr_size", c.lr_size},
              {"hr_size", c.hr_size},
              {"encoder_channels", c.encoder_channels},
              {"encoder_filters", c.encoder_filters},
              {"decoder_channels", c.decoder_channels},
              {"decoder_filters", c.decoder_filters},
              {"fc_width", c.fc_width},
              {"kl_weight", c.kl_weight},
              {"logvar_clamp", c.logvar_clamp}};
}

CoarseConfig coarse_from_json(const json& j) {
  CoarseConfig c;
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.lr_size = j.at("lr_size").get<std::size_t>();
  c.hr_size = j.at("hr_size").get<std::size_t>();
  c.encoder_channels = j.at("encoder_channels").get<std::vector<std::size_t>>();
  c.encoder_filters = j.at("encoder_filters").get<std::vector<std::size_t>>();
  c.decoder_channels = j.at("decoder_channels").get<std::vector<std::size_t>>();
  c.decoder_filters = j.at("decoder_filters").get<std::vector<std::size_t>>();
  c.fc_width = j.at("fc_width").get<std::size_t>();
  c.kl_weight = j.at("kl_weight").get<double>();
  c.logvar_clamp = j.at("logvar_clamp").get<double>();
  return c;
}

json to_json(const FineConfig& c) {
  return json{{"bottleneck_dim", c.bottleneck_dim},
              {"hr_size", c.hr_size},
              {"encoder_channels", c.encoder_channels},
              {"decoder_channels", c.decoder_channels},
              {"filter_size", c.filter_size},
              {"stride", c.stride},
              {"skips_enabled", c.skips_enabled},
              {"view_conditioning", c.view_conditioning}};
}

FineConfig fine_from_json(const json& j) {
  FineConfig c;
  c.bottleneck_dim = j.at("bottleneck_dim").get<std::size_t>();
  c.hr_size = j.at("hr_size").get<std::size_t>();
  c.encoder_channels = j.at("encoder_channels").get<std::vector<std::size_t>>();
  c.decoder_channels = j.at("decoder_channels").get<std::vector<std::size_t>>();
  c.filter_size = j.at("filter_size").get<std::size_t>();
  c.stride = j.at("stride").get<std::size_t>();
  c.skips_enabled = j.at("skips_enabled").get<bool>();
  c.view_conditioning = j.at("view_conditioning").get<bool>();
  return c;
}

json to_json(const DiscConfig& c) {
  return json{{"channels", c.channels},
              {"filter_size", c.filter_size},
              {"strides", c.strides},
              {"conditional", c.conditional},
              {"input_size", c.input_size}};
}

DiscConfig disc_from_json(const json& j) {
  DiscConfig c;
  c.channels = j.at("channels").get<std::vector<std::size_t>>();
  c.filter_size = j.at("filter_size").get<std::size_t>();
  c.strides = j.at("strides").get<std::vector<std::size_t>>();
  c.conditional = j.at("conditional").get<bool>();
  c.input_size = j.at("input_size").get<std::size_t>();
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  check(ckpt.stage == "coarse" || ckpt.stage == "fine",
        "save_checkpoint: unknown stage '{}'", ckpt.stage);
  fs::create_directories(dir);
  nn::save_tensors((fs::path(dir) / (ckpt.stage + ".weights")).string(), ckpt.tensors);

  json meta;
  meta["stage"] = ckpt.stage;
  meta["epoch"] = ckpt.epoch;
  meta["rng_state"] = ckpt.rng_state;
  meta["train_config"] = to_json(ckpt.train_config);
  meta["flags"] = to_json(ckpt.flags);
  meta["coarse_config"] = to_json(ckpt.coarse_config);
  meta["fine_config"] = to_json(ckpt.fine_config);
  meta["disc_config"] = to_json(ckpt.disc_config);
  json hist = json::array();
  for (const EpochStats& e : ckpt.loss_history) {
    json cols = json::array();
    for (const auto& [name, v] : e.values) cols.push_back(json{{"name", name}, {"value", v}});
    hist.push_back(json{{"epoch", e.epoch}, {"values", cols}});
  }
  meta["loss_history"] = hist;

  std::ofstream mf(fs::path(dir) / (ckpt.stage + ".meta.json"));
  check(mf.good(), "save_checkpoint: cannot write meta under {}", dir);
  mf << meta.dump(2) << "\n";

  std::ofstream cf(fs::path(dir) / (ckpt.stage + "_log.csv"));
  check(cf.good(), "save_checkpoint: cannot write log under {}", dir);
  cf << "epoch,stage";
  if (!ckpt.loss_history.empty()) {
    for (const auto& [name, v] : ckpt.loss_history.front().values) cf << "," << name;
  }
  cf << "\n";
  for (const EpochStats& e : ckpt.loss_history) {
    cf << e.epoch << "," << ckpt.stage;
    for (const auto& [name, v] : e.values) cf << fmt::format(",{:.10g}", v);
    cf << "\n";
  }
  check(cf.good(), "save_checkpoint: write failed under {}", dir);
}

Checkpoint load_checkpoint(const std::string& dir, const std::string& stage) {
  check(stage == "coarse" || stage == "fine", "load_checkpoint: unknown stage '{}'", stage);
  const fs::path meta_path = fs::path(dir) / (stage + ".meta.json");
  std::ifstream mf(meta_path);
  check(mf.good(), "load_checkpoint: missing {}", meta_path.string());
  json meta = json::parse(mf);

  Checkpoint ckpt;
  ckpt.stage = meta.at("stage").get<std::string>();
  check(ckpt.stage == stage, "load_checkpoint: {} holds stage '{}'", meta_path.string(),
        ckpt.stage);
  ckpt.epoch = meta.at("epoch").get<std::size_t>();
  ckpt.rng_state = meta.at("rng_state").get<std::string>();
  ckpt.train_config = train_config_from_json(meta.at("train_config"));
  ckpt.flags = flags_from_json(meta.at("flags"));
  ckpt.coarse_config = coarse_from_json(meta.at("coarse_config"));
  ckpt.fine_config = fine_from_json(meta.at("fine_config"));
  ckpt.disc_config = disc_from_json(meta.at("disc_config"));
  for (const json& e : meta.at("loss_history")) {
    EpochStats s;
    s.epoch = e.at("epoch").get<std::size_t>();
    for (const json& col : e.at("values")) {
      s.values.emplace_back(col.at("name").get<std::string>(), col.at("value").get<double>());
    }
    ckpt.loss_history.push_back(std::move(s));
  }
  ckpt.tensors = nn::load_tensors((fs::path(dir) / (stage + ".weights")).string());
  return ckpt;
}

}  // namespace varigan
