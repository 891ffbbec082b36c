#pragma once

#include <map>
#include <memory>
#include <vector>

#include "varigan/data/dataset.hpp"
#include "varigan/nn/layers.hpp"

namespace varigan {

struct FineConfig {
  std::size_t bottleneck_dim = 512;  // M_h, channels of each encoder bottleneck
  std::size_t hr_size = 128;
  std::vector<std::size_t> encoder_channels = {64, 128, 256, 512, 512, 512, 512};
  std::vector<std::size_t> decoder_channels = {512, 512, 512, 256, 128, 64, 3};
  std::size_t filter_size = 4;
  std::size_t stride = 2;
  bool skips_enabled = true;
  bool view_conditioning = false;

  void validate() const;
  std::size_t stages() const { return encoder_channels.size(); }
  std::size_t lr_size() const { return hr_size / 2; }
  std::size_t bottleneck_spatial() const { return hr_size >> stages(); }
};

FineConfig desk_fine_config();  // M_h=64, 64x64 output, 3 stages
FineConfig mini_fine_config();  // gradient-check scale, 8x8, 3 stages

struct GenLossParts {
  double total = 0, adv = 0, l1 = 0;
};

/// adv = log(1 - d) as written (minimized), or -log(d) with non_saturating.
/// Probabilities are clamped to [1e-7, 1-1e-7] only inside the logs; values
/// outside (0,1) are the caller's bug and throw.
GenLossParts generator_loss(double d_score_fake, const Tensor& fake, const Tensor& target,
                            double lambda_l1, bool non_saturating = false);

/// Twin stride-2 encoders (not weight-shared: the upsampled render and the
/// photographic condition come from different distributions) into a
/// channel-concatenated bottleneck, decoded with per-stage skip
/// concatenation from both paths.
class FineNet {
 public:
  FineNet(FineConfig cfg, std::uint64_t init_seed);

  const FineConfig& config() const { return cfg_; }

  /// lr_image (3,lr,lr) or (N,3,lr,lr) is upsampled 2x (nearest) before its
  /// encoder; cond_image at hr. Output at hr in [-1,1].
  Tensor fine_forward(const Tensor& lr_image, const Tensor& cond_image,
                      ViewLabel view = ViewLabel::front) const;

  /// Training pass: caches activations for fine_backward.
  Tensor forward_train(const Tensor& lr_batch, const Tensor& cond_batch,
                       const std::vector<std::size_t>& view_ids);
  /// Accumulates parameter grads from d(loss)/d(output). Input-image
  /// gradients are dropped (the coarse stage is frozen upstream).
  void fine_backward(const Tensor& d_out);

  /// Concatenated input of every decoder stage (pure), for skip-wiring probes.
  std::vector<Tensor> decoder_stage_inputs(const Tensor& lr_image, const Tensor& cond_image,
                                           ViewLabel view = ViewLabel::front) const;

  nn::ParamList params();
  std::map<std::string, Tensor> named_tensors();
  void load_named_tensors(const std::map<std::string, Tensor>& named);
  std::size_t param_count();

 private:
  struct Stage {
    nn::Conv2d conv;
    std::unique_ptr<nn::BatchNorm2d> bn;
  };
  struct DecStage {
    nn::ConvTranspose2d deconv;
    std::unique_ptr<nn::BatchNorm2d> bn;
    nn::Act act;
  };
  struct Path {
    std::vector<Stage> stages;
  };

  std::vector<Tensor> encode_path(const Path& p, const Tensor& x) const;
  void encode_path_train(Path& p, const Tensor& x, std::vector<Tensor>& acts);
  void path_backward(Path& p, const std::vector<Tensor>& acts, std::vector<Tensor>& stage_grads);
  std::size_t decoder_in_channels(std::size_t stage) const;
  Tensor view_tile(const std::vector<std::size_t>& ids) const;

  FineConfig cfg_;
  nn::Rng init_rng_;
  Path lr_path_, cond_path_;
  std::unique_ptr<nn::Embedding> view_emb_;  // only with view_conditioning
  std::vector<DecStage> dec_;

  std::vector<Tensor> cache_lr_acts_, cache_cond_acts_, cache_dec_acts_;
  std::vector<std::size_t> cache_view_ids_;
};

}  // namespace varigan
