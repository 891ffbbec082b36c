#include <cmath>

#include "doctest.h"
#include "varigan/nn/layers.hpp"

using namespace varigan::nn;

namespace {

// Central finite difference of a scalar loss wrt one tensor entry.
template <typename Loss>
double fd(Tensor& t, std::size_t i, Loss loss, double eps = 1e-6) {
  const double keep = t[i];
  t[i] = keep + eps;
  const double hi = loss();
  t[i] = keep - eps;
  const double lo = loss();
  t[i] = keep;
  return (hi - lo) / (2 * eps);
}

double sum_sq(const Tensor& t) {
  double s = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t[i] * t[i];
  return 0.5 * s;
}

// dL/dy for L = 0.5*sum(y^2) is y itself.
void check_grads_close(double a, double b) {
  CHECK(std::abs(a - b) < 1e-4 * std::max({1.0, std::abs(a), std::abs(b)}));
}

}  // namespace

TEST_CASE("same_pad totals k - s with the extra pixel at bottom/right") {
  Pad4 p = same_pad(5, 2);
  CHECK(p.top == 1);
  CHECK(p.bottom == 2);
  CHECK(p.left == 1);
  CHECK(p.right == 2);
  p = same_pad(3, 2);
  CHECK(p.top == 0);
  CHECK(p.bottom == 1);
  p = same_pad(4, 2);
  CHECK(p.top == 1);
  CHECK(p.bottom == 1);
  p = same_pad(4, 1);
  CHECK(p.top == 1);
  CHECK(p.bottom == 2);
}

TEST_CASE("conv_out_size") {
  CHECK(conv_out_size(64, 5, 2, 1, 2) == 32);
  CHECK(conv_out_size(64, 4, 1, 1, 2) == 64);
  CHECK(conv_out_size(4, 4, 1, 0, 0) == 1);
}

TEST_CASE("1x1 identity convolution passes input through") {
  Rng rng(0);
  Conv2d conv(1, 1, 1, 1, Pad4{}, rng);
  conv.w_.fill(1.0);
  conv.b_.zero();
  Tensor x({1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) x[i] = static_cast<double>(i) - 4.0;
  Tensor y = conv.forward(x);
  REQUIRE(y.same_shape(x));
  for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("hand-computed 2x2 valid convolution") {
  Rng rng(0);
  Conv2d conv(1, 1, 2, 1, Pad4{}, rng);
  // kernel [[1,2],[3,4]], bias 0.5
  conv.w_[0] = 1;
  conv.w_[1] = 2;
  conv.w_[2] = 3;
  conv.w_[3] = 4;
  conv.b_[0] = 0.5;
  Tensor x({1, 1, 2, 2});
  x[0] = 1;
  x[1] = -1;
  x[2] = 2;
  x[3] = 0;
  Tensor y = conv.forward(x);
  REQUIRE(y.dim(2) == 1);
  CHECK(y[0] == doctest::Approx(1 * 1 + 2 * -1 + 3 * 2 + 4 * 0 + 0.5));
}

TEST_CASE("strided same-padded conv halves the grid") {
  Rng rng(1);
  Conv2d conv(3, 8, 5, 2, same_pad(5, 2), rng);
  Tensor x({2, 3, 16, 16});
  init_gaussian(x, rng, 1.0);
  Tensor y = conv.forward(x);
  CHECK(y.dim(0) == 2);
  CHECK(y.dim(1) == 8);
  CHECK(y.dim(2) == 8);
  CHECK(y.dim(3) == 8);
}

TEST_CASE("conv backward matches finite differences") {
  Rng rng(2);
  Conv2d conv(2, 3, 3, 2, same_pad(3, 2), rng);
  Tensor x({2, 2, 6, 6});
  init_gaussian(x, rng, 1.0);

  auto loss = [&] { return sum_sq(conv.forward(x)); };
  Tensor y = conv.train_forward(x);
  conv.gw_.zero();
  conv.gb_.zero();
  Tensor dx = conv.backward(y);

  for (std::size_t i : {0UL, 7UL, 30UL, conv.w_.numel() - 1}) {
    check_grads_close(conv.gw_[i], fd(conv.w_, i, loss));
  }
  check_grads_close(conv.gb_[1], fd(conv.b_, 1, loss));
  for (std::size_t i : {0UL, 13UL, x.numel() - 1}) {
    check_grads_close(dx[i], fd(x, i, loss));
  }
}

TEST_CASE("upsample_geometry keeps or doubles the grid") {
  CHECK(ConvTranspose2d::upsample_geometry(3, 1) == std::pair<std::size_t, std::size_t>{1, 0});
  CHECK(ConvTranspose2d::upsample_geometry(5, 1) == std::pair<std::size_t, std::size_t>{2, 0});
  CHECK(ConvTranspose2d::upsample_geometry(4, 2) == std::pair<std::size_t, std::size_t>{1, 0});
  CHECK(ConvTranspose2d::upsample_geometry(5, 2) == std::pair<std::size_t, std::size_t>{2, 1});
}

TEST_CASE("deconv doubles and keeps spatial size as configured") {
  Rng rng(3);
  auto [p2, op2] = ConvTranspose2d::upsample_geometry(5, 2);
  ConvTranspose2d up(4, 2, 5, 2, p2, op2, rng);
  Tensor x({1, 4, 8, 8});
  init_gaussian(x, rng, 1.0);
  Tensor y = up.forward(x);
  CHECK(y.dim(1) == 2);
  CHECK(y.dim(2) == 16);

  auto [p1, op1] = ConvTranspose2d::upsample_geometry(3, 1);
  ConvTranspose2d keep(4, 4, 3, 1, p1, op1, rng);
  Tensor z = keep.forward(x);
  CHECK(z.dim(2) == 8);
}

TEST_CASE("stride-1 deconv with flipped kernel equals conv") {
  // With stride 1 and symmetric padding, transposed convolution is a plain
  // convolution with a 180-degree flipped kernel.
  Rng rng(4);
  ConvTranspose2d up(1, 1, 3, 1, 1, 0, rng);
  Conv2d conv(1, 1, 3, 1, Pad4{1, 1, 1, 1}, rng);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      conv.w_[r * 3 + c] = up.w_[(2 - r) * 3 + (2 - c)];
    }
  }
  conv.b_[0] = up.b_[0];
  Tensor x({1, 1, 5, 5});
  init_gaussian(x, rng, 1.0);
  Tensor a = up.forward(x);
  Tensor b = conv.forward(x);
  REQUIRE(a.same_shape(b));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]));
}

TEST_CASE("deconv backward matches finite differences") {
  Rng rng(5);
  auto [p, op] = ConvTranspose2d::upsample_geometry(4, 2);
  ConvTranspose2d up(2, 2, 4, 2, p, op, rng);
  Tensor x({1, 2, 4, 4});
  init_gaussian(x, rng, 1.0);

  auto loss = [&] { return sum_sq(up.forward(x)); };
  Tensor y = up.train_forward(x);
  up.gw_.zero();
  up.gb_.zero();
  Tensor dx = up.backward(y);

  for (std::size_t i : {0UL, 17UL, up.w_.numel() - 1}) {
    check_grads_close(up.gw_[i], fd(up.w_, i, loss));
  }
  check_grads_close(up.gb_[0], fd(up.b_, 0, loss));
  for (std::size_t i : {0UL, 9UL, x.numel() - 1}) {
    check_grads_close(dx[i], fd(x, i, loss));
  }
}

TEST_CASE("dense forward oracle and backward") {
  Rng rng(6);
  Dense fc(3, 2, rng);
  fc.w_[0] = 1;
  fc.w_[1] = 0;
  fc.w_[2] = -1;  // row 0
  fc.w_[3] = 2;
  fc.w_[4] = 1;
  fc.w_[5] = 0;  // row 1
  fc.b_[0] = 0.5;
  fc.b_[1] = -0.5;
  Tensor x({1, 3});
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  Tensor y = fc.forward(x);
  CHECK(y[0] == doctest::Approx(1 - 3 + 0.5));
  CHECK(y[1] == doctest::Approx(2 + 2 - 0.5));

  auto loss = [&] { return sum_sq(fc.forward(x)); };
  Tensor out = fc.train_forward(x);
  fc.gw_.zero();
  fc.gb_.zero();
  Tensor dx = fc.backward(out);
  for (std::size_t i = 0; i < fc.w_.numel(); ++i) {
    check_grads_close(fc.gw_[i], fd(fc.w_, i, loss));
  }
  for (std::size_t i = 0; i < x.numel(); ++i) check_grads_close(dx[i], fd(x, i, loss));
}

TEST_CASE("batchnorm normalizes per channel over the batch") {
  Rng rng(7);
  BatchNorm2d bn(3);
  Tensor x({4, 3, 5, 5});
  init_gaussian(x, rng, 2.0);
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] += 1.5;
  Tensor y = bn.forward(x);
  const std::size_t m = 4 * 5 * 5;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 25; ++i) mean += y.at4(n, c, i / 5, i % 5);
    }
    mean /= m;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 25; ++i) {
        double d = y.at4(n, c, i / 5, i % 5) - mean;
        var += d * d;
      }
    }
    var /= m;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("batchnorm backward matches finite differences") {
  Rng rng(8);
  BatchNorm2d bn(2);
  bn.gamma_[0] = 1.3;
  bn.gamma_[1] = 0.7;
  bn.beta_[0] = -0.2;
  bn.beta_[1] = 0.4;
  Tensor x({3, 2, 4, 4});
  init_gaussian(x, rng, 1.0);

  Tensor target(x.shape());
  init_gaussian(target, rng, 1.0);
  auto loss = [&] {
    Tensor y = bn.forward(x);
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
    return 0.5 * s;
  };
  Tensor y = bn.train_forward(x);
  Tensor dy(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) dy[i] = y[i] - target[i];
  bn.ggamma_.zero();
  bn.gbeta_.zero();
  Tensor dx = bn.backward(dy);

  check_grads_close(bn.ggamma_[0], fd(bn.gamma_, 0, loss));
  check_grads_close(bn.gbeta_[1], fd(bn.beta_, 1, loss));
  for (std::size_t i : {0UL, 21UL, x.numel() - 1}) {
    check_grads_close(dx[i], fd(x, i, loss));
  }
}

TEST_CASE("embedding lookup and gradient accumulation") {
  Rng rng(9);
  Embedding emb(3, 4, rng);
  Tensor rows = emb.forward({2, 0, 2});
  CHECK(rows.dim(0) == 3);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(rows.at2(0, j) == emb.table_.at2(2, j));
    CHECK(rows.at2(1, j) == emb.table_.at2(0, j));
  }

  emb.train_forward({2, 0, 2});
  Tensor dy({3, 4}, 1.0);
  emb.gtable_.zero();
  emb.backward(dy);
  CHECK(emb.gtable_.at2(2, 0) == doctest::Approx(2.0));  // id 2 used twice
  CHECK(emb.gtable_.at2(0, 0) == doctest::Approx(1.0));
  CHECK(emb.gtable_.at2(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("activations and their output-based derivatives") {
  Tensor x({4});
  x[0] = -2;
  x[1] = -0.5;
  x[2] = 0.5;
  x[3] = 2;

  Tensor l = apply_act(Act::leaky_relu, x);
  CHECK(l[0] == doctest::Approx(-0.4));
  CHECK(l[3] == doctest::Approx(2.0));

  Tensor t = apply_act(Act::tanh, x);
  CHECK(t[3] == doctest::Approx(std::tanh(2.0)));

  Tensor dy({4}, 1.0);
  Tensor dl = act_backward(Act::leaky_relu, l, dy);
  CHECK(dl[0] == doctest::Approx(0.2));
  CHECK(dl[2] == doctest::Approx(1.0));

  Tensor dt = act_backward(Act::tanh, t, dy);
  CHECK(dt[1] == doctest::Approx(1.0 - std::tanh(-0.5) * std::tanh(-0.5)));

  Tensor s = apply_act(Act::sigmoid, x);
  Tensor ds = act_backward(Act::sigmoid, s, dy);
  CHECK(ds[2] == doctest::Approx(s[2] * (1 - s[2])));

  Tensor n = apply_act(Act::none, x);
  for (std::size_t i = 0; i < 4; ++i) CHECK(n[i] == x[i]);
}
