#include <cmath>
#include <set>

#include "doctest.h"
#include "varigan/coarse/coarse.hpp"
#include "varigan/disc/disc.hpp"
#include "varigan/fine/fine.hpp"
#include "varigan/train/trainer.hpp"

using namespace varigan;

namespace {

constexpr double kEps = 1e-5;
constexpr double kRelTol = 1e-3;
constexpr std::size_t kMinChecked = 200;

struct FlatParams {
  nn::ParamList ps;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;

  explicit FlatParams(nn::ParamList params) : ps(std::move(params)) {
    for (const nn::Param& p : ps) {
      offsets.push_back(total);
      total += p.value->numel();
    }
  }
  std::pair<std::size_t, std::size_t> locate(std::size_t flat) const {
    std::size_t t = 0;
    while (t + 1 < ps.size() && offsets[t + 1] <= flat) ++t;
    return {t, flat - offsets[t]};
  }
  double get(std::size_t flat) const {
    auto [t, i] = locate(flat);
    return (*ps[t].value)[i];
  }
  void set(std::size_t flat, double v) {
    auto [t, i] = locate(flat);
    (*ps[t].value)[i] = v;
  }
  double grad(std::size_t flat) const {
    auto [t, i] = locate(flat);
    return (*ps[t].grad)[i];
  }
  void zero_grads() {
    for (nn::Param& p : ps) p.grad->zero();
  }
};

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({1e-6, std::abs(a), std::abs(n)});
}

/// Compares analytic grads (already accumulated) against central differences
/// of loss() at >= kMinChecked distinct parameters.
template <typename Loss>
void check_sampled(FlatParams& flat, Loss loss, std::uint64_t seed) {
  REQUIRE(flat.total >= kMinChecked);
  std::set<std::size_t> picked;
  nn::Rng rng(seed);
  while (picked.size() < std::min(flat.total, kMinChecked + 20)) {
    picked.insert(static_cast<std::size_t>(rng.below(flat.total)));
  }
  std::size_t worst_idx = 0;
  double worst = 0;
  for (std::size_t idx : picked) {
    const double keep = flat.get(idx);
    flat.set(idx, keep + kEps);
    const double hi = loss();
    flat.set(idx, keep - kEps);
    const double lo = loss();
    flat.set(idx, keep);
    const double numeric = (hi - lo) / (2 * kEps);
    const double e = rel_err(flat.grad(idx), numeric);
    if (e > worst) {
      worst = e;
      worst_idx = idx;
    }
  }
  INFO("worst rel err ", worst, " at flat param ", worst_idx);
  CHECK(worst < kRelTol);
}

Tensor random_batch(nn::Rng& rng, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

double l1_of(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.numel());
}

}  // namespace

TEST_CASE("variational objective gradients match finite differences") {
  CoarseNet net(mini_coarse_config(), 1234);
  nn::Rng rng(55);
  CoarseBatch batch;
  batch.cond_hr = random_batch(rng, {2, 3, 16, 16});
  batch.target_hr = random_batch(rng, {2, 3, 16, 16});
  batch.view_ids = {0, 2};
  Tensor noise({2, 8});
  for (std::size_t i = 0; i < noise.numel(); ++i) noise[i] = rng.normal();

  auto loss = [&] { return net.elbo_loss(batch, noise).total; };

  FlatParams flat(net.params());
  flat.zero_grads();
  ElboParts parts = net.elbo_backward(batch, noise);
  CHECK(parts.total == doctest::Approx(loss()).epsilon(1e-10));
  CHECK(parts.total == doctest::Approx(parts.kl * net.config().kl_weight + parts.recon));

  check_sampled(flat, loss, 99);
}

TEST_CASE("refiner adversarial+reconstruction gradients match finite differences") {
  FineNet gen(mini_fine_config(), 77);
  DiscNet disc(mini_disc_config(), 78);
  nn::Rng rng(56);
  Tensor lr = random_batch(rng, {2, 3, 4, 4});
  Tensor cond = random_batch(rng, {2, 3, 8, 8});
  Tensor target = random_batch(rng, {2, 3, 8, 8});
  const double lambda = 0.7;

  auto loss = [&] {
    Tensor fake = gen.fine_forward(lr, cond);
    Tensor probs = disc.forward_probs(cond, fake);
    return mean_adv_loss(probs, false) + lambda * l1_of(fake, target);
  };

  FlatParams flat(gen.params());
  flat.zero_grads();
  Tensor fake = gen.forward_train(lr, cond, {0, 0});
  Tensor probs = disc.forward_train(cond, fake);
  const double analytic_loss = mean_adv_loss(probs, false) + lambda * l1_of(fake, target);
  CHECK(analytic_loss == doctest::Approx(loss()).epsilon(1e-10));

  Tensor d_fake = disc.backward_to_candidate(adv_loss_grad(probs, false));
  const double scale = lambda / static_cast<double>(fake.numel());
  for (std::size_t i = 0; i < fake.numel(); ++i) {
    const double d = fake[i] - target[i];
    if (d > 0) d_fake[i] += scale;
    if (d < 0) d_fake[i] -= scale;
  }
  gen.fine_backward(d_fake);

  check_sampled(flat, loss, 100);
}

TEST_CASE("discriminator objective gradients match finite differences") {
  FineNet gen(mini_fine_config(), 79);
  DiscNet disc(mini_disc_config(), 80);
  nn::Rng rng(57);
  Tensor lr = random_batch(rng, {2, 3, 4, 4});
  Tensor cond = random_batch(rng, {2, 3, 8, 8});
  Tensor real = random_batch(rng, {2, 3, 8, 8});
  Tensor fake = gen.fine_forward(lr, cond);  // constant input to the critic

  // The trained pass scores real and fake in one stacked batch, so the
  // finite-difference loss must do the same (normalization statistics are
  // batch-dependent).
  Tensor cond2 = concat_dim0({&cond, &cond});
  auto loss = [&] {
    Tensor cand = concat_dim0({&real, &fake});
    Tensor probs = disc.forward_probs(cond2, cand);
    Tensor pr = slice_dim0(probs, 0, 2);
    Tensor pf = slice_dim0(probs, 2, 4);
    return -mean_disc_loss(pr, pf);
  };

  FlatParams flat(disc.params());
  flat.zero_grads();
  Tensor cand = concat_dim0({&real, &fake});
  Tensor probs = disc.forward_train(cond2, cand);
  Tensor pr = slice_dim0(probs, 0, 2);
  Tensor pf = slice_dim0(probs, 2, 4);
  CHECK(-mean_disc_loss(pr, pf) == doctest::Approx(loss()).epsilon(1e-10));
  disc.backward_to_candidate(disc_loss_grad(pr, pf));

  check_sampled(flat, loss, 101);
}

TEST_CASE("coarse adversarial decode gradients match finite differences") {
  CoarseNet net(mini_coarse_config(), 81);
  DiscNet aux(lr_disc_config(8, false), 82);
  // full-size critic channels would dwarf the mini generator; shrink it
  DiscConfig aux_cfg = mini_disc_config();
  DiscNet critic(aux_cfg, 83);
  nn::Rng rng(58);
  Tensor cond_hr = random_batch(rng, {2, 3, 16, 16});
  Tensor target_lr = random_batch(rng, {2, 3, 8, 8});
  Tensor cond_lr = random_batch(rng, {2, 3, 8, 8});
  Tensor z({2, 8});
  for (std::size_t i = 0; i < z.numel(); ++i) z[i] = rng.normal();
  const std::vector<std::size_t> ids = {1, 2};
  const double lambda = 0.5;

  auto loss = [&] {
    Tensor fake = net.generate_batch(cond_hr, ids, z);
    Tensor probs = critic.forward_probs(cond_lr, fake);
    return mean_adv_loss(probs, false) + lambda * l1_of(fake, target_lr);
  };

  FlatParams flat(net.params());
  flat.zero_grads();
  Tensor fake = net.decode_forward_train(cond_hr, ids, z);
  Tensor probs = critic.forward_train(cond_lr, fake);
  CHECK(mean_adv_loss(probs, false) + lambda * l1_of(fake, target_lr) ==
        doctest::Approx(loss()).epsilon(1e-10));
  Tensor d_fake = critic.backward_to_candidate(adv_loss_grad(probs, false));
  const double scale = lambda / static_cast<double>(fake.numel());
  for (std::size_t i = 0; i < fake.numel(); ++i) {
    const double d = fake[i] - target_lr[i];
    if (d > 0) d_fake[i] += scale;
    if (d < 0) d_fake[i] -= scale;
  }
  net.decode_backward_train(d_fake);

  check_sampled(flat, loss, 102);
}
