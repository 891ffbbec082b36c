#pragma once

#include <array>
#include <map>
#include <memory>
#include <vector>

#include "varigan/data/dataset.hpp"
#include "varigan/nn/adam.hpp"
#include "varigan/nn/layers.hpp"

namespace varigan {

struct CoarseConfig {
  std::size_t latent_dim = 1024;  // M_l
  std::size_t lr_size = 64;       // output side
  std::size_t hr_size = 128;      // condition/target input side
  std::vector<std::size_t> encoder_channels = {64, 128, 256, 256, 256, 1024};
  std::vector<std::size_t> encoder_filters = {5, 5, 5, 3, 3, 4};
  std::vector<std::size_t> decoder_channels = {256, 256, 256, 128, 64, 3};
  std::vector<std::size_t> decoder_filters = {3, 5, 5, 5, 5, 5};
  std::size_t fc_width = 1024;
  double kl_weight = 1.0;
  double logvar_clamp = 20.0;

  /// Encoder: all stages stride-2 same-padded except the last, which is a
  /// valid convolution collapsing the remaining spatial extent to 1x1.
  /// Decoder: seed lr_size/8 square, strides [1,2,2,2,1,...].
  void validate() const;
  std::size_t decoder_seed() const { return lr_size / 8; }
};

CoarseConfig desk_coarse_config();  // M_l=128, 64 -> 32
CoarseConfig mini_coarse_config();  // gradient-check scale, M_l=8, 16 -> 8

struct LatentPosterior {
  Tensor mean;          // (M) or (N, M)
  Tensor log_variance;  // clamped to +-logvar_clamp
};

/// Per-dimension KL(q || N(0,I)) terms, 0.5*(mu^2 + e^lv - 1 - lv), each >= 0.
Tensor kl_terms(const LatentPosterior& p);
/// Sum over dimensions; mean over the batch when inputs are (N, M).
double kl_divergence(const LatentPosterior& p);

/// z = mean + exp(0.5 * log_variance) * noise.
Tensor sample_latent(const LatentPosterior& p, const Tensor& noise);

struct ElboParts {
  double total = 0, kl = 0, recon = 0;
};

/// Minibatch view the trainer hands in: condition and target at hr_size.
struct CoarseBatch {
  Tensor cond_hr;    // (N,3,hr,hr)
  Tensor target_hr;  // (N,3,hr,hr)
  std::vector<std::size_t> view_ids;  // target view per sample
};

class CoarseNet {
 public:
  CoarseNet(CoarseConfig cfg, std::uint64_t init_seed);

  const CoarseConfig& config() const { return cfg_; }

  /// (3,H,H) -> (M) or (N,3,H,H) -> (N,M). Condition and target share these
  /// weights (one encoder object).
  Tensor encode_image(const Tensor& image) const;
  Tensor embed_view(ViewLabel view) const;  // (M)
  LatentPosterior infer_posterior(const Tensor& target_repr, const Tensor& cond_repr,
                                  const Tensor& view_emb) const;
  Tensor decode_coarse(const Tensor& z, const Tensor& cond_repr,
                       const Tensor& view_emb) const;  // -> (3,lr,lr) / (N,3,lr,lr)
  /// Inference path: z supplied externally (prior noise).
  Tensor generate_coarse(const Tensor& cond_image, ViewLabel view, const Tensor& noise) const;
  /// Batched inference with a view id per sample. z is (N,latent).
  Tensor generate_batch(const Tensor& cond_hr, const std::vector<std::size_t>& view_ids,
                        const Tensor& z) const;

  /// Loss only (no gradients). noise shaped like the posterior mean.
  ElboParts elbo_loss(const TrainingSample& sample, const Tensor& noise) const;
  ElboParts elbo_loss(const CoarseBatch& batch, const Tensor& noise) const;

  /// Forward + backward; accumulates into parameter grads.
  ElboParts elbo_backward(const CoarseBatch& batch, const Tensor& noise);

  /// GAN-mode decode used by the no_variational ablation: backward of an
  /// externally supplied output gradient through decoder + embeddings + the
  /// condition encoder (z treated as fixed noise input).
  Tensor decode_forward_train(const Tensor& cond_hr, const std::vector<std::size_t>& view_ids,
                              const Tensor& z);
  void decode_backward_train(const Tensor& d_out);

  nn::ParamList params();
  std::map<std::string, Tensor> named_tensors();
  void load_named_tensors(const std::map<std::string, Tensor>& named);
  std::size_t param_count();

  /// Encoder/decoder activation probes for the feature-map dump: returns the
  /// per-stage outputs of the condition encoder and the decoder.
  struct Probes {
    std::vector<Tensor> encoder;  // after activation, per conv stage
    std::vector<Tensor> decoder;  // after activation, per deconv stage
  };
  Probes probe_activations(const Tensor& cond_image, ViewLabel view, const Tensor& noise) const;

 private:
  struct EncStage {
    nn::Conv2d conv;
    std::unique_ptr<nn::BatchNorm2d> bn;
  };
  struct DecStage {
    nn::ConvTranspose2d deconv;
    std::unique_ptr<nn::BatchNorm2d> bn;
    nn::Act act;
  };

  Tensor encode_batch(const Tensor& x) const;
  Tensor encode_batch_train(const Tensor& x);
  Tensor decode_batch(const Tensor& z, const Tensor& cond_repr, const Tensor& view_emb) const;
  Tensor decode_batch_train(const Tensor& z, const Tensor& cond_repr, const Tensor& view_emb);
  Tensor encoder_backward(const Tensor& d_repr);
  // returns (dz, d_cond_repr, d_view_emb)
  std::array<Tensor, 3> decoder_backward(const Tensor& d_out);

  CoarseConfig cfg_;
  nn::Rng init_rng_;  // consumed during construction; kept only so member
                      // initialization can draw from it in declaration order
  std::vector<EncStage> enc_;
  nn::Dense enc_fc_;
  nn::Embedding view_emb_;
  nn::Dense post_head_;
  nn::Dense dec_fc_;
  std::vector<DecStage> dec_;

  // train-pass caches
  Tensor cache_reprs_, cache_fc_out_;
  Tensor cache_dec_fc_out_, cache_dec_seed_;
  std::vector<Tensor> cache_enc_act_, cache_dec_act_;
  Tensor cache_mean_, cache_lv_raw_, cache_lv_, cache_noise_, cache_out_;
  std::vector<std::size_t> cache_view_ids_;
  std::size_t cache_n_ = 0;
};

}  // namespace varigan
