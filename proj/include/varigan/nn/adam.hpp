#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "varigan/nn/layers.hpp"

namespace varigan::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name so
/// they survive checkpoint round trips.
class Adam {
 public:
  Adam(AdamConfig cfg, const ParamList& params);

  void zero_grad();
  void step();

  std::int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  /// Moment state as named tensors ("<prefix>/m/<p>", "<prefix>/v/<p>",
  /// "<prefix>/t"), so several optimizers can share one store.
  std::map<std::string, Tensor> state(const std::string& prefix = "opt") const;
  void load_state(const std::map<std::string, Tensor>& named,
                  const std::string& prefix = "opt");

 private:
  AdamConfig cfg_;
  ParamList params_;
  std::map<std::string, Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace varigan::nn
