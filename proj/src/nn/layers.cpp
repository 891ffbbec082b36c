#include "varigan/nn/layers.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "varigan/nn/common.hpp"

namespace varigan::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Pad4 same_pad(std::size_t kernel, std::size_t stride) {
  check(kernel >= stride, "same_pad: kernel {} smaller than stride {}", kernel, stride);
  std::size_t total = kernel - stride;
  Pad4 p;
  p.top = total / 2;
  p.left = total / 2;
  p.bottom = total - p.top;
  p.right = total - p.left;
  return p;
}

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t pad_lo, std::size_t pad_hi) {
  std::size_t padded = in + pad_lo + pad_hi;
  check(padded >= kernel, "conv_out_size: input {} too small for kernel {}", in, kernel);
  check((padded - kernel) % stride == 0,
        "conv_out_size: geometry {}+{}+{} with k={} s={} does not tile evenly", in, pad_lo,
        pad_hi, kernel, stride);
  return (padded - kernel) / stride + 1;
}

Tensor apply_act(Act act, const Tensor& x) {
  Tensor y = x;
  switch (act) {
    case Act::none:
      break;
    case Act::leaky_relu:
      for (double& v : y.raw()) v = v > 0 ? v : kLeakySlope * v;
      break;
    case Act::relu:
      for (double& v : y.raw()) v = v > 0 ? v : 0.0;
      break;
    case Act::tanh:
      for (double& v : y.raw()) v = std::tanh(v);
      break;
    case Act::sigmoid:
      for (double& v : y.raw()) v = 1.0 / (1.0 + std::exp(-v));
      break;
  }
  return y;
}

Tensor act_backward(Act act, const Tensor& y, const Tensor& dy) {
  check(y.same_shape(dy), "act_backward: shape mismatch");
  Tensor dx = dy;
  const std::size_t n = y.numel();
  switch (act) {
    case Act::none:
      break;
    case Act::leaky_relu:
      for (std::size_t i = 0; i < n; ++i)
        if (y[i] <= 0) dx[i] *= kLeakySlope;
      break;
    case Act::relu:
      for (std::size_t i = 0; i < n; ++i)
        if (y[i] <= 0) dx[i] = 0.0;
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < n; ++i) dx[i] *= 1.0 - y[i] * y[i];
      break;
    case Act::sigmoid:
      for (std::size_t i = 0; i < n; ++i) dx[i] *= y[i] * (1.0 - y[i]);
      break;
  }
  return dx;
}

void init_gaussian(Tensor& t, Rng& rng, double stddev) {
  for (double& v : t.raw()) v = rng.normal(0.0, stddev);
}

namespace {

// One sample (C, H, W) -> column matrix (C*k*k, OH*OW), zero padded.
void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            std::size_t stride, Pad4 pad, std::size_t OH, std::size_t OW, double* col) {
  const std::size_t patch = OH * OW;
  for (std::size_t c = 0; c < C; ++c) {
    const double* xc = x + c * H * W;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = col + ((c * k + ki) * k + kj) * patch;
        for (std::size_t oh = 0; oh < OH; ++oh) {
          // padded row index = oh*stride + ki; unpadded = that - pad.top
          std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                              static_cast<std::ptrdiff_t>(pad.top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) {
            for (std::size_t ow = 0; ow < OW; ++ow) row[oh * OW + ow] = 0.0;
            continue;
          }
          const double* xr = xc + static_cast<std::size_t>(ih) * W;
          for (std::size_t ow = 0; ow < OW; ++ow) {
            std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                static_cast<std::ptrdiff_t>(pad.left);
            row[oh * OW + ow] =
                (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) ? 0.0 : xr[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into (C, H, W).
void col2im(const double* col, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            std::size_t stride, Pad4 pad, std::size_t OH, std::size_t OW, double* x) {
  const std::size_t patch = OH * OW;
  for (std::size_t c = 0; c < C; ++c) {
    double* xc = x + c * H * W;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = col + ((c * k + ki) * k + kj) * patch;
        for (std::size_t oh = 0; oh < OH; ++oh) {
          std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                              static_cast<std::ptrdiff_t>(pad.top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          double* xr = xc + static_cast<std::size_t>(ih) * W;
          for (std::size_t ow = 0; ow < OW; ++ow) {
            std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                static_cast<std::ptrdiff_t>(pad.left);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(W)) xr[iw] += row[oh * OW + ow];
          }
        }
      }
    }
  }
}

void require_nchw(const Tensor& x, std::size_t ch, const char* who) {
  check(x.ndim() == 4, "{}: expected rank-4 input, got {}", who, shape_str(x.shape()));
  check(x.dim(1) == ch, "{}: expected {} channels, got {}", who, ch, x.dim(1));
}

}  // namespace

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
               Pad4 pad, Rng& rng)
    : w_({out_ch, in_ch, kernel, kernel}),
      b_({out_ch}, 0.0),
      gw_({out_ch, in_ch, kernel, kernel}, 0.0),
      gb_({out_ch}, 0.0),
      in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {
  init_gaussian(w_, rng);
}

std::size_t Conv2d::out_size(std::size_t in) const {
  return conv_out_size(in, kernel_, stride_, pad_.top, pad_.bottom);
}

Tensor Conv2d::forward(const Tensor& x) const {
  require_nchw(x, in_ch_, "Conv2d");
  const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = conv_out_size(H, kernel_, stride_, pad_.top, pad_.bottom);
  const std::size_t OW = conv_out_size(W, kernel_, stride_, pad_.left, pad_.right);
  const std::size_t K = in_ch_ * kernel_ * kernel_, P = OH * OW;

  Tensor y({N, out_ch_, OH, OW});
  std::vector<double> col(K * P);
  CMapRM wm(w_.data(), static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(K));
  for (std::size_t n = 0; n < N; ++n) {
    im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, kernel_, stride_, pad_, OH, OW,
           col.data());
    CMapRM cm(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    MapRM ym(y.raw().data() + n * out_ch_ * P, static_cast<Eigen::Index>(out_ch_),
             static_cast<Eigen::Index>(P));
    ym.noalias() = wm * cm;
    for (std::size_t c = 0; c < out_ch_; ++c) ym.row(static_cast<Eigen::Index>(c)).array() += b_[c];
  }
  return y;
}

Tensor Conv2d::train_forward(const Tensor& x) {
  cached_x_ = x;
  return forward(x);
}

Tensor Conv2d::backward(const Tensor& dy) {
  const Tensor& x = cached_x_;
  check(!x.empty(), "Conv2d::backward without train_forward");
  const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = dy.dim(2), OW = dy.dim(3);
  const std::size_t K = in_ch_ * kernel_ * kernel_, P = OH * OW;
  require_shape(dy, {N, out_ch_, OH, OW}, "Conv2d::backward dy");

  Tensor dx({N, in_ch_, H, W}, 0.0);
  std::vector<double> col(K * P), dcol(K * P);
  CMapRM wm(w_.data(), static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(K));
  MapRM gwm(gw_.raw().data(), static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(K));
  for (std::size_t n = 0; n < N; ++n) {
    im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, kernel_, stride_, pad_, OH, OW,
           col.data());
    CMapRM cm(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    CMapRM dym(dy.data() + n * out_ch_ * P, static_cast<Eigen::Index>(out_ch_),
               static_cast<Eigen::Index>(P));
    gwm.noalias() += dym * cm.transpose();
    for (std::size_t c = 0; c < out_ch_; ++c)
      gb_[c] += dym.row(static_cast<Eigen::Index>(c)).sum();
    MapRM dcm(dcol.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    dcm.noalias() = wm.transpose() * dym;
    col2im(dcol.data(), in_ch_, H, W, kernel_, stride_, pad_, OH, OW,
           dx.raw().data() + n * in_ch_ * H * W);
  }
  return dx;
}

void Conv2d::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", &w_, &gw_});
  out.push_back({prefix + ".b", &b_, &gb_});
}

ConvTranspose2d::ConvTranspose2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                                 std::size_t stride, std::size_t pad, std::size_t out_pad,
                                 Rng& rng)
    : w_({in_ch, out_ch, kernel, kernel}),
      b_({out_ch}, 0.0),
      gw_({in_ch, out_ch, kernel, kernel}, 0.0),
      gb_({out_ch}, 0.0),
      in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      out_pad_(out_pad) {
  check(out_pad <= pad, "ConvTranspose2d: out_pad {} must not exceed pad {}", out_pad, pad);
  init_gaussian(w_, rng);
}

std::pair<std::size_t, std::size_t> ConvTranspose2d::upsample_geometry(std::size_t kernel,
                                                                       std::size_t stride) {
  // Solve (in-1)*s - 2p + k + op = in*s with op in {0, 1}.
  std::size_t p = (kernel - 1) / 2;
  std::size_t need = 2 * p + stride;
  check(need >= kernel && need - kernel <= 1,
        "upsample_geometry: no (pad, out_pad) for k={} s={}", kernel, stride);
  return {p, need - kernel};
}

std::size_t ConvTranspose2d::out_size(std::size_t in) const {
  return (in - 1) * stride_ + kernel_ + out_pad_ - 2 * pad_;
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  require_nchw(x, in_ch_, "ConvTranspose2d");
  const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const std::size_t CH = (H - 1) * stride_ + kernel_;  // full canvas before cropping
  const std::size_t CW = (W - 1) * stride_ + kernel_;
  const std::size_t OH = out_size(H), OW = out_size(W);
  const std::size_t K2 = out_ch_ * kernel_ * kernel_, P = H * W;

  Tensor y({N, out_ch_, OH, OW});
  std::vector<double> cols(K2 * P);
  std::vector<double> canvas(out_ch_ * CH * CW);
  CMapRM wm(w_.data(), static_cast<Eigen::Index>(in_ch_), static_cast<Eigen::Index>(K2));
  const Pad4 nopad{};
  for (std::size_t n = 0; n < N; ++n) {
    CMapRM xm(x.data() + n * in_ch_ * P, static_cast<Eigen::Index>(in_ch_),
              static_cast<Eigen::Index>(P));
    MapRM cm(cols.data(), static_cast<Eigen::Index>(K2), static_cast<Eigen::Index>(P));
    cm.noalias() = wm.transpose() * xm;
    std::fill(canvas.begin(), canvas.end(), 0.0);
    col2im(cols.data(), out_ch_, CH, CW, kernel_, stride_, nopad, H, W, canvas.data());
    double* yn = y.raw().data() + n * out_ch_ * OH * OW;
    for (std::size_t c = 0; c < out_ch_; ++c) {
      const double* cc = canvas.data() + c * CH * CW;
      for (std::size_t r = 0; r < OH; ++r)
        for (std::size_t q = 0; q < OW; ++q)
          yn[(c * OH + r) * OW + q] = cc[(r + pad_) * CW + (q + pad_)] + b_[c];
    }
  }
  return y;
}

Tensor ConvTranspose2d::train_forward(const Tensor& x) {
  cached_x_ = x;
  return forward(x);
}

Tensor ConvTranspose2d::backward(const Tensor& dy) {
  const Tensor& x = cached_x_;
  check(!x.empty(), "ConvTranspose2d::backward without train_forward");
  const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const std::size_t CH = (H - 1) * stride_ + kernel_;
  const std::size_t CW = (W - 1) * stride_ + kernel_;
  const std::size_t OH = out_size(H), OW = out_size(W);
  const std::size_t K2 = out_ch_ * kernel_ * kernel_, P = H * W;
  require_shape(dy, {N, out_ch_, OH, OW}, "ConvTranspose2d::backward dy");

  Tensor dx({N, in_ch_, H, W});
  std::vector<double> dcanvas(out_ch_ * CH * CW);
  std::vector<double> dcols(K2 * P);
  CMapRM wm(w_.data(), static_cast<Eigen::Index>(in_ch_), static_cast<Eigen::Index>(K2));
  MapRM gwm(gw_.raw().data(), static_cast<Eigen::Index>(in_ch_), static_cast<Eigen::Index>(K2));
  const Pad4 nopad{};
  for (std::size_t n = 0; n < N; ++n) {
    const double* dyn = dy.data() + n * out_ch_ * OH * OW;
    std::fill(dcanvas.begin(), dcanvas.end(), 0.0);
    for (std::size_t c = 0; c < out_ch_; ++c) {
      double* dc = dcanvas.data() + c * CH * CW;
      for (std::size_t r = 0; r < OH; ++r)
        for (std::size_t q = 0; q < OW; ++q) {
          double g = dyn[(c * OH + r) * OW + q];
          dc[(r + pad_) * CW + (q + pad_)] = g;
          gb_[c] += g;
        }
    }
    im2col(dcanvas.data(), out_ch_, CH, CW, kernel_, stride_, nopad, H, W, dcols.data());
    CMapRM dcm(dcols.data(), static_cast<Eigen::Index>(K2), static_cast<Eigen::Index>(P));
    CMapRM xm(x.data() + n * in_ch_ * P, static_cast<Eigen::Index>(in_ch_),
              static_cast<Eigen::Index>(P));
    gwm.noalias() += xm * dcm.transpose();
    MapRM dxm(dx.raw().data() + n * in_ch_ * P, static_cast<Eigen::Index>(in_ch_),
              static_cast<Eigen::Index>(P));
    dxm.noalias() = wm * dcm;
  }
  return dx;
}

void ConvTranspose2d::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", &w_, &gw_});
  out.push_back({prefix + ".b", &b_, &gb_});
}

Dense::Dense(std::size_t in_features, std::size_t out_features, Rng& rng)
    : w_({out_features, in_features}),
      b_({out_features}, 0.0),
      gw_({out_features, in_features}, 0.0),
      gb_({out_features}, 0.0),
      in_f_(in_features),
      out_f_(out_features) {
  init_gaussian(w_, rng);
}

Tensor Dense::forward(const Tensor& x) const {
  check(x.ndim() == 2 && x.dim(1) == in_f_, "Dense: expected (N, {}), got {}", in_f_,
        shape_str(x.shape()));
  const std::size_t N = x.dim(0);
  Tensor y({N, out_f_});
  CMapRM xm(x.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(in_f_));
  CMapRM wm(w_.data(), static_cast<Eigen::Index>(out_f_), static_cast<Eigen::Index>(in_f_));
  MapRM ym(y.raw().data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(out_f_));
  ym.noalias() = xm * wm.transpose();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < out_f_; ++f) y.raw()[n * out_f_ + f] += b_[f];
  return y;
}

Tensor Dense::train_forward(const Tensor& x) {
  cached_x_ = x;
  return forward(x);
}

Tensor Dense::backward(const Tensor& dy) {
  const Tensor& x = cached_x_;
  check(!x.empty(), "Dense::backward without train_forward");
  const std::size_t N = x.dim(0);
  require_shape(dy, {N, out_f_}, "Dense::backward dy");
  CMapRM xm(x.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(in_f_));
  CMapRM dym(dy.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(out_f_));
  MapRM gwm(gw_.raw().data(), static_cast<Eigen::Index>(out_f_),
            static_cast<Eigen::Index>(in_f_));
  gwm.noalias() += dym.transpose() * xm;
  for (std::size_t f = 0; f < out_f_; ++f)
    gb_[f] += dym.col(static_cast<Eigen::Index>(f)).sum();
  Tensor dx({N, in_f_});
  CMapRM wm(w_.data(), static_cast<Eigen::Index>(out_f_), static_cast<Eigen::Index>(in_f_));
  MapRM dxm(dx.raw().data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(in_f_));
  dxm.noalias() = dym * wm;
  return dx;
}

void Dense::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", &w_, &gw_});
  out.push_back({prefix + ".b", &b_, &gb_});
}

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma_({channels}, 1.0),
      beta_({channels}, 0.0),
      ggamma_({channels}, 0.0),
      gbeta_({channels}, 0.0),
      channels_(channels) {}

Tensor BatchNorm2d::norm(const Tensor& x, Tensor* xhat, Tensor* inv_std) const {
  require_nchw(x, channels_, "BatchNorm2d");
  const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const std::size_t plane = H * W, m = N * plane;
  Tensor y(x.shape());
  if (xhat) *xhat = Tensor(x.shape());
  if (inv_std) *inv_std = Tensor({channels_});
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* p = x.data() + (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) mean += p[i];
    }
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* p = x.data() + (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        double d = p[i] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(m);
    double inv = 1.0 / std::sqrt(var + kEps);
    if (inv_std) (*inv_std)[c] = inv;
    for (std::size_t n = 0; n < N; ++n) {
      const double* p = x.data() + (n * channels_ + c) * plane;
      double* q = y.raw().data() + (n * channels_ + c) * plane;
      double* h = xhat ? xhat->raw().data() + (n * channels_ + c) * plane : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        double z = (p[i] - mean) * inv;
        if (h) h[i] = z;
        q[i] = gamma_[c] * z + beta_[c];
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::forward(const Tensor& x) const { return norm(x, nullptr, nullptr); }

Tensor BatchNorm2d::train_forward(const Tensor& x) {
  return norm(x, &cached_xhat_, &cached_inv_);
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const Tensor& xhat = cached_xhat_;
  check(!xhat.empty(), "BatchNorm2d::backward without train_forward");
  check(dy.same_shape(xhat), "BatchNorm2d::backward dy shape mismatch");
  const std::size_t N = dy.dim(0), H = dy.dim(2), W = dy.dim(3);
  const std::size_t plane = H * W;
  const double m = static_cast<double>(N * plane);
  Tensor dx(dy.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dyx = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* g = dy.data() + (n * channels_ + c) * plane;
      const double* h = xhat.data() + (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dyx += g[i] * h[i];
      }
    }
    ggamma_[c] += sum_dyx;
    gbeta_[c] += sum_dy;
    const double scale = gamma_[c] * cached_inv_[c];
    for (std::size_t n = 0; n < N; ++n) {
      const double* g = dy.data() + (n * channels_ + c) * plane;
      const double* h = xhat.data() + (n * channels_ + c) * plane;
      double* d = dx.raw().data() + (n * channels_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        d[i] = scale * (g[i] - sum_dy / m - h[i] * sum_dyx / m);
    }
  }
  return dx;
}

void BatchNorm2d::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".gamma", &gamma_, &ggamma_});
  out.push_back({prefix + ".beta", &beta_, &gbeta_});
}

Embedding::Embedding(std::size_t rows, std::size_t dim, Rng& rng)
    : table_({rows, dim}), gtable_({rows, dim}, 0.0), rows_(rows), dim_(dim) {
  init_gaussian(table_, rng);
}

Tensor Embedding::forward(const std::vector<std::size_t>& ids) const {
  Tensor y({ids.size(), dim_});
  for (std::size_t n = 0; n < ids.size(); ++n) {
    check(ids[n] < rows_, "Embedding: id {} out of range {}", ids[n], rows_);
    std::copy_n(table_.data() + ids[n] * dim_, dim_, y.raw().data() + n * dim_);
  }
  return y;
}

Tensor Embedding::train_forward(const std::vector<std::size_t>& ids) {
  cached_ids_ = ids;
  return forward(ids);
}

void Embedding::backward(const Tensor& dy) {
  require_shape(dy, {cached_ids_.size(), dim_}, "Embedding::backward dy");
  for (std::size_t n = 0; n < cached_ids_.size(); ++n) {
    double* g = gtable_.raw().data() + cached_ids_[n] * dim_;
    const double* d = dy.data() + n * dim_;
    for (std::size_t i = 0; i < dim_; ++i) g[i] += d[i];
  }
}

void Embedding::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".table", &table_, &gtable_});
}

}  // namespace varigan::nn
