#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "varigan/nn/common.hpp"

namespace varigan::nn {

/// Dense row-major tensor of doubles. Rank is dynamic; the conv stack uses
/// (N, C, H, W) batches, dense layers use (N, F), losses use scalars.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, double fill);
  Tensor(std::initializer_list<std::size_t> shape) : Tensor(std::vector<std::size_t>(shape)) {}

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v) { return Tensor(std::move(shape), v); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Index helpers for the common ranks; bounds are the caller's contract.
  double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at3(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double at3(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// Same data, new shape; element count must match.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  void fill(double v);
  void zero() { fill(0.0); }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const Tensor& t);
std::string shape_str(const std::vector<std::size_t>& s);

/// Throws unless t has exactly the given shape.
void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, const char* what);

bool all_finite(const Tensor& t);

/// Concatenate along dim 1 (channels for NCHW, features for NF). All inputs
/// must agree on every other dimension.
Tensor concat_dim1(const std::vector<const Tensor*>& parts);

/// Adjoint of concat_dim1: split gradient back into per-part tensors.
std::vector<Tensor> split_dim1(const Tensor& t, const std::vector<std::size_t>& widths);

/// Concatenate along dim 0 (batch). Contiguous copy.
Tensor concat_dim0(const std::vector<const Tensor*>& parts);

/// Rows [from, to) along dim 0 as a new tensor.
Tensor slice_dim0(const Tensor& t, std::size_t from, std::size_t to);

}  // namespace varigan::nn

namespace varigan {
using nn::all_finite;
using nn::concat_dim0;
using nn::concat_dim1;
using nn::require_shape;
using nn::shape_str;
using nn::slice_dim0;
using nn::split_dim1;
using nn::Tensor;
}  // namespace varigan
