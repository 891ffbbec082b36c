#pragma once

#include <map>
#include <memory>
#include <vector>

#include "varigan/nn/layers.hpp"

namespace varigan {

struct DiscConfig {
  std::vector<std::size_t> channels = {64, 128, 256, 512, 1};
  std::size_t filter_size = 4;
  std::vector<std::size_t> strides = {2, 2, 2, 1, 1};
  bool conditional = true;  // candidate concatenated with the condition image
  std::size_t input_size = 128;

  void validate() const;
  std::size_t input_channels() const { return conditional ? 6 : 3; }
};

DiscConfig desk_disc_config();            // 64x64 pairs
DiscConfig mini_disc_config();            // gradient-check scale
DiscConfig lr_disc_config(std::size_t lr_size, bool desk);  // auxiliary coarse-stage critic

/// L_D = mean(log d_real + log(1 - d_fake)); the trainer ascends this.
/// Inputs must be probabilities in (0,1); they are clamped to
/// [1e-7, 1-1e-7] only inside the logs.
double discriminator_loss(double d_real, double d_fake);

/// Stacked strided convolutions to a 1-channel patch logit map; the scalar
/// probability is sigmoid of the patch mean.
class DiscNet {
 public:
  DiscNet(DiscConfig cfg, std::uint64_t init_seed);

  const DiscConfig& config() const { return cfg_; }

  /// Per-pair probability in (0,1). Single images (3,H,W) or batches.
  double discriminate(const Tensor& cond_image, const Tensor& candidate) const;
  /// Batched probabilities (N).
  Tensor forward_probs(const Tensor& cond_batch, const Tensor& cand_batch) const;
  /// Patch logit map (N,1,ph,pw) before reduction.
  Tensor patch_logits(const Tensor& cond_batch, const Tensor& cand_batch) const;

  /// Training pass returning probabilities (N); caches for backward.
  Tensor forward_train(const Tensor& cond_batch, const Tensor& cand_batch);
  /// d(loss)/d(prob) per sample -> accumulates param grads, returns
  /// d(loss)/d(candidate image) (condition-image grads are dropped).
  Tensor backward_to_candidate(const Tensor& d_probs);

  nn::ParamList params();
  std::map<std::string, Tensor> named_tensors();
  void load_named_tensors(const std::map<std::string, Tensor>& named);
  std::size_t param_count();
  std::size_t patch_side() const;

 private:
  struct Stage {
    nn::Conv2d conv;
    std::unique_ptr<nn::BatchNorm2d> bn;
  };
  Tensor stack_input(const Tensor& cond_batch, const Tensor& cand_batch) const;
  Tensor logits_apply(const Tensor& x) const;

  DiscConfig cfg_;
  nn::Rng init_rng_;
  std::vector<Stage> stages_;

  std::vector<Tensor> cache_acts_;
  Tensor cache_logit_map_, cache_probs_;
};

}  // namespace varigan
