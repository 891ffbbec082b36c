#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "varigan/nn/layers.hpp"

namespace varigan {

/// Small convnet over 32x32 inputs scoring the dataset's shape classes.
/// Stands in for the usual large pretrained backbone when computing the
/// class-entropy generation score; trained separately on real renders.
class ShapeClassifier {
 public:
  explicit ShapeClassifier(std::uint64_t init_seed, std::size_t num_classes = 8);

  std::size_t num_classes() const { return num_classes_; }

  /// (3,H,H) -> (K) softmax. Inputs larger than 32 are box-downsampled.
  Tensor predict(const Tensor& image) const;
  /// (N,3,H,H) -> (N,K). Samples are scored independently, so the result
  /// does not depend on how callers chunk their batches.
  Tensor predict_batch(const Tensor& images) const;

  /// Cross-entropy training; returns the last epoch's mean loss.
  double fit(const std::vector<Tensor>& images, const std::vector<std::size_t>& labels,
             std::size_t epochs, std::size_t batch_size, double lr, std::uint64_t seed);
  double accuracy(const std::vector<Tensor>& images,
                  const std::vector<std::size_t>& labels) const;

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  Tensor features(const Tensor& batch) const;  // pooled conv stack, (N,flat)

  std::size_t num_classes_;
  nn::Rng init_rng_;
  nn::Conv2d conv0_, conv1_, conv2_;
  nn::BatchNorm2d bn1_, bn2_;
  nn::Dense head_;

  nn::ParamList params();
  std::map<std::string, Tensor> named_tensors();
  void load_named_tensors(const std::map<std::string, Tensor>& named);
};

/// Type-erased scorer handed to the evaluation pass.
struct ClassifierHandle {
  std::size_t num_classes = 0;
  std::function<Tensor(const Tensor&)> predict_batch;  // (N,3,H,H) -> (N,K)
};

ClassifierHandle make_handle(const ShapeClassifier& cls);

}  // namespace varigan
