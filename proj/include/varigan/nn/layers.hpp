#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "varigan/nn/rng.hpp"
#include "varigan/nn/tensor.hpp"

namespace varigan::nn {

/// Named view of a trainable tensor and its gradient accumulator.
struct Param {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

using ParamList = std::vector<Param>;

struct Pad4 {
  std::size_t top = 0, left = 0, bottom = 0, right = 0;
};

/// Padding that maps in -> in/stride for a k x k kernel (total = k - stride,
/// extra pixel on the bottom/right when odd, as in TF "SAME").
Pad4 same_pad(std::size_t kernel, std::size_t stride);

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t pad_lo, std::size_t pad_hi);

enum class Act { none, leaky_relu, relu, tanh, sigmoid };

constexpr double kLeakySlope = 0.2;

/// Elementwise activation (out of place).
Tensor apply_act(Act act, const Tensor& x);
/// dL/dx from dL/dy using the activation *output* y (all four supported
/// activations are invertible enough for that).
Tensor act_backward(Act act, const Tensor& y, const Tensor& dy);

/// Strided 2-D convolution over (N, C, H, W) batches, im2col + GEMM.
class Conv2d {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
         Pad4 pad, Rng& rng);

  Tensor forward(const Tensor& x) const;
  Tensor train_forward(const Tensor& x);
  /// Accumulates weight/bias grads, returns dL/dx. Needs a prior train_forward.
  Tensor backward(const Tensor& dy);

  void collect_params(const std::string& prefix, ParamList& out);
  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return out_ch_; }
  std::size_t out_size(std::size_t in) const;
  std::size_t param_count() const { return w_.numel() + b_.numel(); }

  Tensor w_;  // (out_ch, in_ch, k, k)
  Tensor b_;  // (out_ch)
  Tensor gw_, gb_;

 private:
  std::size_t in_ch_, out_ch_, kernel_, stride_;
  Pad4 pad_;
  Tensor cached_x_;
};

/// Transposed convolution (fractionally strided). Output size is
/// (in-1)*stride - 2*pad + kernel + out_pad.
class ConvTranspose2d {
 public:
  ConvTranspose2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                  std::size_t pad, std::size_t out_pad, Rng& rng);

  /// Padding/out_pad pair that maps in -> in*stride for this kernel.
  static std::pair<std::size_t, std::size_t> upsample_geometry(std::size_t kernel,
                                                               std::size_t stride);

  Tensor forward(const Tensor& x) const;
  Tensor train_forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  void collect_params(const std::string& prefix, ParamList& out);
  std::size_t out_size(std::size_t in) const;
  std::size_t param_count() const { return w_.numel() + b_.numel(); }
  std::size_t out_channels() const { return out_ch_; }

  Tensor w_;  // (in_ch, out_ch, k, k)
  Tensor b_;  // (out_ch)
  Tensor gw_, gb_;

 private:
  std::size_t in_ch_, out_ch_, kernel_, stride_, pad_, out_pad_;
  Tensor cached_x_;
};

/// Fully connected layer over (N, F) batches.
class Dense {
 public:
  Dense(std::size_t in_features, std::size_t out_features, Rng& rng);

  Tensor forward(const Tensor& x) const;
  Tensor train_forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  void collect_params(const std::string& prefix, ParamList& out);
  std::size_t param_count() const { return w_.numel() + b_.numel(); }

  Tensor w_;  // (out, in)
  Tensor b_;  // (out)
  Tensor gw_, gb_;

 private:
  std::size_t in_f_, out_f_;
  Tensor cached_x_;
};

/// Per-channel normalization over (N, H, W) with learned scale and shift.
/// Statistics always come from the tensor being normalized (no running
/// averages), so the forward pass stays a pure function of (input, params);
/// at batch size 1 this behaves like instance normalization.
class BatchNorm2d {
 public:
  explicit BatchNorm2d(std::size_t channels);

  Tensor forward(const Tensor& x) const;
  Tensor train_forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  void collect_params(const std::string& prefix, ParamList& out);
  std::size_t param_count() const { return gamma_.numel() + beta_.numel(); }

  Tensor gamma_, beta_;  // (C)
  Tensor ggamma_, gbeta_;

 private:
  Tensor norm(const Tensor& x, Tensor* xhat, Tensor* inv_std) const;
  std::size_t channels_;
  static constexpr double kEps = 1e-5;
  Tensor cached_xhat_, cached_inv_;
};

/// Row-lookup table, one learned vector per discrete id.
class Embedding {
 public:
  Embedding(std::size_t rows, std::size_t dim, Rng& rng);

  Tensor forward(const std::vector<std::size_t>& ids) const;  // (N, dim)
  Tensor train_forward(const std::vector<std::size_t>& ids);
  void backward(const Tensor& dy);  // no input gradient

  void collect_params(const std::string& prefix, ParamList& out);
  std::size_t param_count() const { return table_.numel(); }

  Tensor table_;  // (rows, dim)
  Tensor gtable_;

 private:
  std::size_t rows_, dim_;
  std::vector<std::size_t> cached_ids_;
};

void init_gaussian(Tensor& t, Rng& rng, double stddev = 0.02);

}  // namespace varigan::nn
