#include "varigan/metrics/evaluate.hpp"

#include <cmath>

#include "varigan/nn/common.hpp"
#include "varigan/nn/image_ops.hpp"
#include "varigan/train/trainer.hpp"

namespace varigan {

MetricsReport evaluate_pipeline(const std::vector<TrainingSample>& samples,
                                const Checkpoint& coarse_ckpt, const Checkpoint& fine_ckpt,
                                const ClassifierHandle& classifier, std::uint64_t seed) {
  check(!samples.empty(), "evaluate: no samples");
  check(classifier.num_classes >= 2 && classifier.predict_batch, "evaluate: bad classifier");
  CoarseNet coarse = coarse_net_from(coarse_ckpt);
  FineNet fine = fine_net_from(fine_ckpt);
  const std::size_t hr = coarse_ckpt.coarse_config.hr_size;
  nn::Rng rng(derive_seed(seed, "evaluate"));

  MetricsReport report;
  report.n_samples = samples.size();
  std::vector<Tensor> class_probs;
  double coarse_sum = 0.0;

  for (const TrainingSample& s : samples) {
    Tensor cond = scale_image_to(s.cond_image, hr);
    Tensor target = scale_image_to(s.target_image, hr);
    Tensor noise({coarse_ckpt.coarse_config.latent_dim});
    for (std::size_t i = 0; i < noise.numel(); ++i) noise[i] = rng.normal();

    Tensor coarse_img = coarse.generate_coarse(cond, s.target_view, noise);
    Tensor fine_img = fine.fine_forward(coarse_img, cond, s.target_view);

    report.per_sample_ssim.push_back(ssim(fine_img, target));

    Tensor coarse_up = coarse_img.reshaped({1, 3, coarse_img.dim(1), coarse_img.dim(2)});
    while (coarse_up.dim(2) < hr) coarse_up = upsample_nearest2x(coarse_up);
    coarse_sum += ssim(coarse_up.reshaped({3, hr, hr}), target);

    class_probs.push_back(
        classifier.predict_batch(fine_img.reshaped({1, 3, hr, hr}))
            .reshaped({classifier.num_classes}));
  }

  for (double v : report.per_sample_ssim) report.ssim_mean += v;
  report.ssim_mean /= static_cast<double>(report.n_samples);
  double var = 0.0;
  for (double v : report.per_sample_ssim) var += (v - report.ssim_mean) * (v - report.ssim_mean);
  report.ssim_std = std::sqrt(var / static_cast<double>(report.n_samples));
  report.coarse_ssim_mean = coarse_sum / static_cast<double>(report.n_samples);
  report.is = inception_score(class_probs, default_splits(class_probs.size()));
  return report;
}

}  // namespace varigan
