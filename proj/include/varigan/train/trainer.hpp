#pragma once

#include <string_view>

#include "varigan/data/dataset.hpp"
#include "varigan/train/checkpoint.hpp"

namespace varigan {

/// Stage one: fit the coarse generator on condition/target pairs. With
/// no_variational the variational head is bypassed and the stage trains
/// adversarially against a low-res critic instead. Pass resume to continue
/// from a saved checkpoint up to cfg.coarse_epochs.
Checkpoint train_coarse(const std::vector<TrainingSample>& samples, const TrainConfig& cfg,
                        const AblationFlags& flags = {}, const Checkpoint* resume = nullptr);

/// Stage two: freeze the coarse weights in coarse_ckpt, train refiner and
/// discriminator with per-batch D-then-G alternation.
Checkpoint train_fine(const std::vector<TrainingSample>& samples, const Checkpoint& coarse_ckpt,
                      const TrainConfig& cfg, const AblationFlags& flags = {},
                      const Checkpoint* resume = nullptr);

struct InferResult {
  Tensor coarse;  // (3,lr,lr)
  Tensor fine;    // (3,hr,hr)
};

/// Condition image (3,H,H) is scaled down to the trained resolution; noise is
/// the (latent_dim) prior draw for the coarse stage.
InferResult infer(const Tensor& cond_image, ViewLabel target_view, const Checkpoint& coarse_ckpt,
                  const Checkpoint& fine_ckpt, const Tensor& noise);

/// Rebuild networks from checkpoints (weights loaded, optimizer state ignored).
CoarseNet coarse_net_from(const Checkpoint& ckpt);
FineNet fine_net_from(const Checkpoint& ckpt);

/// Repeated 2x box downsampling until the side matches; upscaling is refused.
Tensor scale_image_to(const Tensor& image, std::size_t size);

/// Batch means of the adversarial objectives, built on the per-pair scalar
/// losses, and their gradients w.r.t. the probability vectors. Shared with the
/// finite-difference tests so the update chain is checked as trained.
double mean_disc_loss(const Tensor& probs_real, const Tensor& probs_fake);
double mean_adv_loss(const Tensor& probs_fake, bool non_saturating);
/// d(-mean L_D)/d(probs) for the stacked [real;fake] pass, shape (2N).
Tensor disc_loss_grad(const Tensor& probs_real, const Tensor& probs_fake);
/// d(mean adv)/d(probs_fake), shape (N).
Tensor adv_loss_grad(const Tensor& probs_fake, bool non_saturating);

/// Stable per-purpose seed streams (FNV-1a of the tag folded with the seed).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace varigan
