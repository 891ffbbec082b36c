#pragma once

#include <vector>

#include "varigan/nn/tensor.hpp"

namespace varigan {

struct InceptionScore {
  double mean = 0;
  double stddev = 0;  // population std over the splits
};

/// 10 splits with enough samples, otherwise one.
std::size_t default_splits(std::size_t n_samples);

/// exp(mean KL(p_i || marginal)) per contiguous split of the per-image class
/// distributions. Each row of probs must be a distribution over the same
/// class count.
InceptionScore inception_score(const std::vector<Tensor>& probs, std::size_t splits);

}  // namespace varigan
