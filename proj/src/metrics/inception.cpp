#include "varigan/metrics/inception.hpp"

#include <cmath>

#include "varigan/nn/common.hpp"

namespace varigan {

std::size_t default_splits(std::size_t n_samples) { return n_samples >= 100 ? 10 : 1; }

InceptionScore inception_score(const std::vector<Tensor>& probs, std::size_t splits) {
  const std::size_t n = probs.size();
  check(n > 0, "inception_score: no samples");
  check(splits >= 1 && splits <= n, "inception_score: {} splits for {} samples", splits, n);
  const std::size_t k = probs.front().numel();
  for (const Tensor& p : probs) {
    check(p.numel() == k, "inception_score: ragged class counts ({} vs {})", p.numel(), k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      check(p[j] >= 0.0, "inception_score: negative probability");
      s += p[j];
    }
    check(std::abs(s - 1.0) < 1e-6, "inception_score: row sums to {}", s);
  }

  std::vector<double> scores;
  for (std::size_t s = 0; s < splits; ++s) {
    const std::size_t lo = s * n / splits;
    const std::size_t hi = (s + 1) * n / splits;
    std::vector<double> marginal(k, 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t j = 0; j < k; ++j) marginal[j] += probs[i][j];
    }
    const double inv = 1.0 / static_cast<double>(hi - lo);
    for (double& m : marginal) m *= inv;

    double mean_kl = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      double kl = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double p = probs[i][j];
        if (p > 0.0) kl += p * std::log(p / marginal[j]);
      }
      mean_kl += kl;
    }
    scores.push_back(std::exp(mean_kl * inv));
  }

  InceptionScore out;
  for (double s : scores) out.mean += s;
  out.mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - out.mean) * (s - out.mean);
  out.stddev = std::sqrt(var / static_cast<double>(scores.size()));
  return out;
}

}  // namespace varigan
