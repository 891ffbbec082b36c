#pragma once

#include <vector>

#include "varigan/data/dataset.hpp"
#include "varigan/metrics/classifier.hpp"
#include "varigan/metrics/inception.hpp"
#include "varigan/metrics/ssim.hpp"
#include "varigan/train/checkpoint.hpp"

namespace varigan {

struct MetricsReport {
  double ssim_mean = 0;
  double ssim_std = 0;         // population std over samples
  double coarse_ssim_mean = 0; // upsampled coarse output scored the same way
  InceptionScore is;
  std::size_t n_samples = 0;
  std::vector<double> per_sample_ssim;
};

/// Runs both stages over every sample (prior noise seeded per sample from
/// seed), scores refined outputs against ground truth and feeds them through
/// the classifier for the generation score.
MetricsReport evaluate_pipeline(const std::vector<TrainingSample>& samples,
                                const Checkpoint& coarse_ckpt, const Checkpoint& fine_ckpt,
                                const ClassifierHandle& classifier, std::uint64_t seed);

}  // namespace varigan
