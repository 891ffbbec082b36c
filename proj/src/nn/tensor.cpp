#include "varigan/nn/tensor.hpp"

#include <cmath>
#include <numeric>

namespace varigan::nn {

namespace {
std::size_t product(const std::vector<std::size_t>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  check(product(shape) == numel(), "reshape: expected {} elements, got shape {} with {}",
        numel(), shape_str(shape), product(shape));
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + ")";
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, const char* what) {
  check(t.shape() == shape, "{}: expected shape {}, got {}", what, shape_str(shape), shape_str(t));
}

bool all_finite(const Tensor& t) {
  for (double v : t)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor concat_dim1(const std::vector<const Tensor*>& parts) {
  check(!parts.empty(), "concat_dim1: no inputs");
  const auto& first = *parts.front();
  check(first.ndim() >= 2, "concat_dim1: need rank >= 2, got {}", shape_str(first));
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    check(p->ndim() == first.ndim(), "concat_dim1: rank mismatch {} vs {}",
          shape_str(first), shape_str(*p));
    for (std::size_t d = 0; d < first.ndim(); ++d)
      check(d == 1 || p->dim(d) == first.dim(d), "concat_dim1: shape mismatch {} vs {}",
            shape_str(first), shape_str(*p));
    total += p->dim(1);
  }
  std::vector<std::size_t> shape = first.shape();
  shape[1] = total;
  Tensor out(shape);

  const std::size_t n = first.dim(0);
  std::size_t inner = 1;
  for (std::size_t d = 2; d < first.ndim(); ++d) inner *= first.dim(d);
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = out.data() + i * total * inner;
    for (const Tensor* p : parts) {
      const std::size_t block = p->dim(1) * inner;
      const double* src = p->data() + i * block;
      std::copy(src, src + block, dst);
      dst += block;
    }
  }
  return out;
}

std::vector<Tensor> split_dim1(const Tensor& t, const std::vector<std::size_t>& widths) {
  std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  check(t.ndim() >= 2 && t.dim(1) == total, "split_dim1: dim1 of {} != sum of widths {}",
        shape_str(t), total);
  std::size_t inner = 1;
  for (std::size_t d = 2; d < t.ndim(); ++d) inner *= t.dim(d);
  const std::size_t n = t.dim(0);

  std::vector<Tensor> out;
  out.reserve(widths.size());
  for (std::size_t w : widths) {
    std::vector<std::size_t> shape = t.shape();
    shape[1] = w;
    out.emplace_back(shape);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = t.data() + i * total * inner;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      const std::size_t block = widths[p] * inner;
      std::copy(src, src + block, out[p].data() + i * block);
      src += block;
    }
  }
  return out;
}

Tensor concat_dim0(const std::vector<const Tensor*>& parts) {
  check(!parts.empty(), "concat_dim0: no inputs");
  std::vector<std::size_t> shape = parts[0]->shape();
  check(!shape.empty(), "concat_dim0: rank must be >= 1");
  std::size_t n0 = 0;
  for (const Tensor* p : parts) {
    check(p->ndim() == shape.size(), "concat_dim0: rank mismatch");
    for (std::size_t d = 1; d < shape.size(); ++d)
      check(p->dim(d) == shape[d], "concat_dim0: dim {} mismatch", d);
    n0 += p->dim(0);
  }
  shape[0] = n0;
  Tensor out(shape);
  double* dst = out.data();
  for (const Tensor* p : parts) {
    std::copy(p->data(), p->data() + p->numel(), dst);
    dst += p->numel();
  }
  return out;
}

Tensor slice_dim0(const Tensor& t, std::size_t from, std::size_t to) {
  check(t.ndim() >= 1 && from < to && to <= t.dim(0), "slice_dim0: bad range [{},{}) of {}",
        from, to, shape_str(t));
  std::vector<std::size_t> shape = t.shape();
  shape[0] = to - from;
  const std::size_t inner = t.numel() / t.dim(0);
  Tensor out(shape);
  std::copy(t.data() + from * inner, t.data() + to * inner, out.data());
  return out;
}

}  // namespace varigan::nn
