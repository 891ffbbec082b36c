#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "varigan/coarse/coarse.hpp"
#include "varigan/disc/disc.hpp"
#include "varigan/fine/fine.hpp"

namespace varigan {

/// Optimization settings shared by both stages. Defaults are the full-scale
/// run; desk_train_config() is the preset the smoke tests and the --desk CLI
/// flag use.
struct TrainConfig {
  std::size_t coarse_epochs = 500;
  std::size_t fine_epochs = 500;
  std::size_t batch_size = 32;
  double learning_rate = 3e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 0;
  double lambda_l1 = 100.0;
  double kl_weight = 1.0;
  bool non_saturating = false;  // -log(d) generator objective instead of log(1-d)
  bool desk_scale = false;      // use desk-sized module configs

  void validate() const;
};

TrainConfig desk_train_config();

struct AblationFlags {
  bool no_variational = false;  // coarse stage trained as a plain GAN
  bool no_unet = false;         // fine decoder without skip connections
  bool no_l1 = false;           // lambda_l1 forced to 0
  bool no_cdisc = false;        // discriminator sees the candidate alone
};

/// Module configs implied by a TrainConfig + AblationFlags pair.
struct PipelineConfigs {
  CoarseConfig coarse;
  FineConfig fine;
  DiscConfig disc;
  DiscConfig aux_disc;  // low-res critic, used only under no_variational
};

PipelineConfigs make_pipeline_configs(const TrainConfig& cfg, const AblationFlags& flags);

struct EpochStats {
  std::size_t epoch = 0;
  std::vector<std::pair<std::string, double>> values;
};

/// Everything needed to resume or run inference: weights and optimizer
/// moments in one tensor map, configs, epoch counter, trainer RNG state and
/// the per-epoch loss log. step_log records the within-batch update order
/// ("D"/"G") for adversarial stages; it is in-memory only.
struct Checkpoint {
  std::string stage;  // "coarse" or "fine"
  std::map<std::string, Tensor> tensors;
  TrainConfig train_config;
  AblationFlags flags;
  CoarseConfig coarse_config;
  FineConfig fine_config;
  DiscConfig disc_config;
  std::size_t epoch = 0;
  std::string rng_state;
  std::vector<EpochStats> loss_history;
  std::vector<std::string> step_log;
};

/// Writes <stage>.weights, <stage>.meta.json and <stage>_log.csv under dir
/// (created if missing).
void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir, const std::string& stage);

}  // namespace varigan
