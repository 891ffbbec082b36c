#include "varigan/train/trainer.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "varigan/nn/adam.hpp"
#include "varigan/nn/common.hpp"
#include "varigan/nn/image_ops.hpp"

namespace varigan {

namespace {

constexpr double kProbLo = 1e-7;
constexpr double kProbHi = 1.0 - 1e-7;

// d/dp of log(clamp(p)) and log(1 - clamp(p)); zero where the clamp is flat.
double dlog(double p) { return (p < kProbLo || p > kProbHi) ? 0.0 : 1.0 / p; }
double dlog1m(double p) { return (p < kProbLo || p > kProbHi) ? 0.0 : -1.0 / (1.0 - p); }

Tensor normal_tensor(nn::Rng& rng, const std::vector<std::size_t>& shape) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

struct Prepared {
  Tensor cond_hr;
  Tensor target_hr;
  std::size_t view_id;
};

std::vector<Prepared> prepare_samples(const std::vector<TrainingSample>& samples,
                                      std::size_t hr) {
  check(!samples.empty(), "trainer: no training samples");
  std::vector<Prepared> out;
  out.reserve(samples.size());
  for (const TrainingSample& s : samples) {
    out.push_back({scale_image_to(s.cond_image, hr), scale_image_to(s.target_image, hr),
                   view_index(s.target_view)});
  }
  return out;
}

CoarseBatch gather_batch(const std::vector<Prepared>& data, const std::vector<std::size_t>& order,
                         std::size_t lo, std::size_t hi) {
  const std::size_t n = hi - lo;
  const std::size_t side = data[order[lo]].cond_hr.dim(1);
  CoarseBatch b;
  b.cond_hr = Tensor({n, 3, side, side});
  b.target_hr = Tensor({n, 3, side, side});
  const std::size_t stride = 3 * side * side;
  for (std::size_t i = 0; i < n; ++i) {
    const Prepared& p = data[order[lo + i]];
    std::copy(p.cond_hr.data(), p.cond_hr.data() + stride, b.cond_hr.data() + i * stride);
    std::copy(p.target_hr.data(), p.target_hr.data() + stride, b.target_hr.data() + i * stride);
    b.view_ids.push_back(p.view_id);
  }
  return b;
}

void check_finite(double v, const char* what, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(v)) {
    throw std::runtime_error(
        fmt::format("non-finite {} at epoch {}, batch {}; aborting", what, epoch + 1, batch));
  }
}

std::map<std::string, Tensor> sub_store(const std::map<std::string, Tensor>& named,
                                        const std::string& prefix) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : named) {
    if (name.rfind(prefix, 0) == 0) out.emplace(name.substr(prefix.size()), t);
  }
  return out;
}

void merge_prefixed(std::map<std::string, Tensor>& into,
                    const std::map<std::string, Tensor>& from, const std::string& prefix) {
  for (const auto& [name, t] : from) into.emplace(prefix + name, t);
}

double l1_mean(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.numel());
}

// d(lambda * mean|fake - target|)/d(fake), added onto grad in place.
void add_l1_grad(Tensor& grad, const Tensor& fake, const Tensor& target, double lambda) {
  if (lambda == 0.0) return;
  const double scale = lambda / static_cast<double>(fake.numel());
  for (std::size_t i = 0; i < fake.numel(); ++i) {
    const double d = fake[i] - target[i];
    if (d > 0) {
      grad[i] += scale;
    } else if (d < 0) {
      grad[i] -= scale;
    }
  }
}

std::pair<Tensor, Tensor> split_probs(const Tensor& probs2n) {
  const std::size_t n = probs2n.dim(0) / 2;
  Tensor r({n}), f({n});
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = probs2n[i];
    f[i] = probs2n[n + i];
  }
  return {std::move(r), std::move(f)};
}

nn::AdamConfig adam_config(const TrainConfig& cfg) {
  return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8};
}

void check_resume(const Checkpoint& resume, const std::string& stage, const TrainConfig& cfg,
                  const AblationFlags& flags) {
  check(resume.stage == stage, "resume: checkpoint stage '{}' does not match '{}'",
        resume.stage, stage);
  check(resume.train_config.desk_scale == cfg.desk_scale,
        "resume: desk_scale mismatch with checkpoint");
  check(resume.flags.no_variational == flags.no_variational &&
            resume.flags.no_unet == flags.no_unet && resume.flags.no_l1 == flags.no_l1 &&
            resume.flags.no_cdisc == flags.no_cdisc,
        "resume: ablation flags do not match checkpoint");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  for (int i = 0; i < 8; ++i) {
    h ^= (seed >> (8 * i)) & 0xffULL;
    h *= 1099511628211ULL;
  }
  return h;
}

Tensor scale_image_to(const Tensor& image, std::size_t size) {
  check(image.ndim() == 3 || image.ndim() == 4, "scale_image_to: rank {} input", image.ndim());
  const bool single = image.ndim() == 3;
  Tensor x = single ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
  check(x.dim(2) == x.dim(3), "scale_image_to: non-square {}x{}", x.dim(2), x.dim(3));
  check(x.dim(2) >= size, "scale_image_to: cannot scale {} up to {}", x.dim(2), size);
  while (x.dim(2) > size) {
    check(x.dim(2) % 2 == 0, "scale_image_to: {} not reducible to {}", x.dim(2), size);
    x = downsample_box2x(x);
  }
  return single ? x.reshaped({x.dim(1), x.dim(2), x.dim(3)}) : x;
}

double mean_disc_loss(const Tensor& probs_real, const Tensor& probs_fake) {
  const std::size_t n = probs_real.dim(0);
  check(probs_fake.dim(0) == n, "mean_disc_loss: {} real vs {} fake", n, probs_fake.dim(0));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += discriminator_loss(probs_real[i], probs_fake[i]);
  return s / static_cast<double>(n);
}

double mean_adv_loss(const Tensor& probs_fake, bool non_saturating) {
  const Tensor one({1}, 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < probs_fake.dim(0); ++i) {
    s += generator_loss(probs_fake[i], one, one, 0.0, non_saturating).adv;
  }
  return s / static_cast<double>(probs_fake.dim(0));
}

Tensor disc_loss_grad(const Tensor& probs_real, const Tensor& probs_fake) {
  const std::size_t n = probs_real.dim(0);
  const double inv = 1.0 / static_cast<double>(n);
  Tensor d({2 * n});
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = -inv * dlog(probs_real[i]);
    d[n + i] = -inv * dlog1m(probs_fake[i]);
  }
  return d;
}

Tensor adv_loss_grad(const Tensor& probs_fake, bool non_saturating) {
  const std::size_t n = probs_fake.dim(0);
  const double inv = 1.0 / static_cast<double>(n);
  Tensor d({n});
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = non_saturating ? -inv * dlog(probs_fake[i]) : inv * dlog1m(probs_fake[i]);
  }
  return d;
}

Checkpoint train_coarse(const std::vector<TrainingSample>& samples, const TrainConfig& cfg,
                        const AblationFlags& flags, const Checkpoint* resume) {
  PipelineConfigs pc = make_pipeline_configs(cfg, flags);
  std::vector<Prepared> data = prepare_samples(samples, pc.coarse.hr_size);

  CoarseNet net(pc.coarse, derive_seed(cfg.seed, "coarse_init"));
  nn::Adam opt_g(adam_config(cfg), net.params());
  DiscNet aux(pc.aux_disc, derive_seed(cfg.seed, "coarse_aux_disc"));
  nn::Adam opt_d(adam_config(cfg), aux.params());
  nn::Rng rng(derive_seed(cfg.seed, "coarse_train"));

  Checkpoint ckpt;
  ckpt.stage = "coarse";
  ckpt.train_config = cfg;
  ckpt.flags = flags;
  ckpt.coarse_config = pc.coarse;
  ckpt.fine_config = pc.fine;
  ckpt.disc_config = flags.no_variational ? pc.aux_disc : pc.disc;

  std::size_t start_epoch = 0;
  if (resume) {
    check_resume(*resume, "coarse", cfg, flags);
    net.load_named_tensors(resume->tensors);
    opt_g.load_state(resume->tensors, "opt_g");
    if (flags.no_variational) {
      aux.load_named_tensors(sub_store(resume->tensors, "aux_disc/"));
      opt_d.load_state(resume->tensors, "opt_d");
    }
    rng.restore_state(resume->rng_state);
    start_epoch = resume->epoch;
    ckpt.loss_history = resume->loss_history;
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const double lambda = flags.no_l1 ? 0.0 : cfg.lambda_l1;

  for (std::size_t epoch = start_epoch; epoch < cfg.coarse_epochs; ++epoch) {
    rng.shuffle(order);
    double sum_a = 0, sum_b = 0, sum_c = 0, sum_d = 0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      CoarseBatch batch = gather_batch(data, order, lo, hi);
      const std::size_t n = hi - lo;
      Tensor z = normal_tensor(rng, {n, pc.coarse.latent_dim});

      if (!flags.no_variational) {
        opt_g.zero_grad();
        ElboParts parts = net.elbo_backward(batch, z);
        check_finite(parts.total, "elbo", epoch, batches);
        opt_g.step();
        sum_a += parts.total;
        sum_b += parts.kl;
        sum_c += parts.recon;
      } else {
        Tensor cond_lr = downsample_box2x(batch.cond_hr);
        Tensor target_lr = downsample_box2x(batch.target_hr);
        Tensor fake = net.decode_forward_train(batch.cond_hr, batch.view_ids, z);

        opt_d.zero_grad();
        Tensor probs2n = aux.forward_train(concat_dim0({&cond_lr, &cond_lr}),
                                           concat_dim0({&target_lr, &fake}));
        auto [pr, pf] = split_probs(probs2n);
        const double d_loss = mean_disc_loss(pr, pf);
        check_finite(d_loss, "critic loss", epoch, batches);
        aux.backward_to_candidate(disc_loss_grad(pr, pf));
        opt_d.step();
        ckpt.step_log.push_back("D");

        opt_g.zero_grad();
        Tensor probs_f = aux.forward_train(cond_lr, fake);
        const double adv = mean_adv_loss(probs_f, cfg.non_saturating);
        const double l1 = l1_mean(fake, target_lr);
        check_finite(adv + lambda * l1, "generator loss", epoch, batches);
        Tensor d_fake = aux.backward_to_candidate(adv_loss_grad(probs_f, cfg.non_saturating));
        add_l1_grad(d_fake, fake, target_lr, lambda);
        net.decode_backward_train(d_fake);
        opt_g.step();
        ckpt.step_log.push_back("G");

        sum_a += adv + lambda * l1;
        sum_b += adv;
        sum_c += l1;
        sum_d += d_loss;
      }
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    EpochStats row;
    row.epoch = epoch + 1;
    if (!flags.no_variational) {
      row.values = {{"elbo", sum_a * inv}, {"kl", sum_b * inv}, {"recon", sum_c * inv}};
    } else {
      row.values = {{"g_total", sum_a * inv},
                    {"g_adv", sum_b * inv},
                    {"g_l1", sum_c * inv},
                    {"d_loss", sum_d * inv}};
    }
    ckpt.loss_history.push_back(std::move(row));
  }

  ckpt.epoch = cfg.coarse_epochs;
  ckpt.rng_state = rng.save_state();
  ckpt.tensors = net.named_tensors();
  merge_prefixed(ckpt.tensors, opt_g.state("opt_g"), "");
  if (flags.no_variational) {
    merge_prefixed(ckpt.tensors, aux.named_tensors(), "aux_disc/");
    merge_prefixed(ckpt.tensors, opt_d.state("opt_d"), "");
  }
  return ckpt;
}

Checkpoint train_fine(const std::vector<TrainingSample>& samples, const Checkpoint& coarse_ckpt,
                      const TrainConfig& cfg, const AblationFlags& flags,
                      const Checkpoint* resume) {
  PipelineConfigs pc = make_pipeline_configs(cfg, flags);
  check(coarse_ckpt.stage == "coarse", "train_fine: expected a coarse checkpoint, got '{}'",
        coarse_ckpt.stage);
  check(coarse_ckpt.coarse_config.lr_size == pc.fine.lr_size() &&
            coarse_ckpt.coarse_config.hr_size == pc.fine.hr_size,
        "train_fine: coarse {}->{} does not feed refiner {}->{}",
        coarse_ckpt.coarse_config.hr_size, coarse_ckpt.coarse_config.lr_size,
        pc.fine.lr_size(), pc.fine.hr_size);

  CoarseNet coarse = coarse_net_from(coarse_ckpt);
  std::vector<Prepared> data = prepare_samples(samples, pc.fine.hr_size);

  FineNet gen(pc.fine, derive_seed(cfg.seed, "fine_gen"));
  DiscNet disc(pc.disc, derive_seed(cfg.seed, "fine_disc"));
  nn::Adam opt_g(adam_config(cfg), gen.params());
  nn::Adam opt_d(adam_config(cfg), disc.params());
  nn::Rng rng(derive_seed(cfg.seed, "fine_train"));

  Checkpoint ckpt;
  ckpt.stage = "fine";
  ckpt.train_config = cfg;
  ckpt.flags = flags;
  ckpt.coarse_config = coarse_ckpt.coarse_config;
  ckpt.fine_config = pc.fine;
  ckpt.disc_config = pc.disc;

  std::size_t start_epoch = 0;
  if (resume) {
    check_resume(*resume, "fine", cfg, flags);
    gen.load_named_tensors(sub_store(resume->tensors, "gen/"));
    disc.load_named_tensors(sub_store(resume->tensors, "disc/"));
    opt_g.load_state(resume->tensors, "opt_g");
    opt_d.load_state(resume->tensors, "opt_d");
    rng.restore_state(resume->rng_state);
    start_epoch = resume->epoch;
    ckpt.loss_history = resume->loss_history;
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const double lambda = flags.no_l1 ? 0.0 : cfg.lambda_l1;

  for (std::size_t epoch = start_epoch; epoch < cfg.fine_epochs; ++epoch) {
    rng.shuffle(order);
    double sum_d = 0, sum_adv = 0, sum_l1 = 0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      CoarseBatch batch = gather_batch(data, order, lo, hi);
      const std::size_t n = hi - lo;

      Tensor z = normal_tensor(rng, {n, coarse_ckpt.coarse_config.latent_dim});
      Tensor fake_lr = coarse.generate_batch(batch.cond_hr, batch.view_ids, z);
      Tensor fake_hr = gen.forward_train(fake_lr, batch.cond_hr, batch.view_ids);

      opt_d.zero_grad();
      Tensor probs2n = disc.forward_train(concat_dim0({&batch.cond_hr, &batch.cond_hr}),
                                          concat_dim0({&batch.target_hr, &fake_hr}));
      auto [pr, pf] = split_probs(probs2n);
      const double d_loss = mean_disc_loss(pr, pf);
      check_finite(d_loss, "discriminator loss", epoch, batches);
      disc.backward_to_candidate(disc_loss_grad(pr, pf));
      opt_d.step();
      ckpt.step_log.push_back("D");

      opt_g.zero_grad();
      Tensor probs_f = disc.forward_train(batch.cond_hr, fake_hr);
      const double adv = mean_adv_loss(probs_f, cfg.non_saturating);
      const double l1 = l1_mean(fake_hr, batch.target_hr);
      check_finite(adv + lambda * l1, "refiner loss", epoch, batches);
      Tensor d_fake = disc.backward_to_candidate(adv_loss_grad(probs_f, cfg.non_saturating));
      add_l1_grad(d_fake, fake_hr, batch.target_hr, lambda);
      gen.fine_backward(d_fake);
      opt_g.step();
      ckpt.step_log.push_back("G");

      sum_d += d_loss;
      sum_adv += adv;
      sum_l1 += l1;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    EpochStats row;
    row.epoch = epoch + 1;
    row.values = {{"d_loss", sum_d * inv},
                  {"g_adv", sum_adv * inv},
                  {"g_l1", sum_l1 * inv},
                  {"g_total", (sum_adv + lambda * sum_l1) * inv}};
    ckpt.loss_history.push_back(std::move(row));
  }

  ckpt.epoch = cfg.fine_epochs;
  ckpt.rng_state = rng.save_state();
  merge_prefixed(ckpt.tensors, gen.named_tensors(), "gen/");
  merge_prefixed(ckpt.tensors, disc.named_tensors(), "disc/");
  merge_prefixed(ckpt.tensors, opt_g.state("opt_g"), "");
  merge_prefixed(ckpt.tensors, opt_d.state("opt_d"), "");
  return ckpt;
}

CoarseNet coarse_net_from(const Checkpoint& ckpt) {
  check(ckpt.stage == "coarse", "coarse_net_from: checkpoint holds stage '{}'", ckpt.stage);
  CoarseNet net(ckpt.coarse_config, derive_seed(ckpt.train_config.seed, "coarse_init"));
  net.load_named_tensors(ckpt.tensors);
  return net;
}

FineNet fine_net_from(const Checkpoint& ckpt) {
  check(ckpt.stage == "fine", "fine_net_from: checkpoint holds stage '{}'", ckpt.stage);
  FineNet net(ckpt.fine_config, derive_seed(ckpt.train_config.seed, "fine_gen"));
  net.load_named_tensors(sub_store(ckpt.tensors, "gen/"));
  return net;
}

InferResult infer(const Tensor& cond_image, ViewLabel target_view, const Checkpoint& coarse_ckpt,
                  const Checkpoint& fine_ckpt, const Tensor& noise) {
  check(coarse_ckpt.coarse_config.lr_size == fine_ckpt.fine_config.lr_size() &&
            coarse_ckpt.coarse_config.hr_size == fine_ckpt.fine_config.hr_size,
        "infer: coarse checkpoint {}->{} does not feed refiner {}->{}",
        coarse_ckpt.coarse_config.hr_size, coarse_ckpt.coarse_config.lr_size,
        fine_ckpt.fine_config.lr_size(), fine_ckpt.fine_config.hr_size);
  CoarseNet coarse = coarse_net_from(coarse_ckpt);
  FineNet fine = fine_net_from(fine_ckpt);
  Tensor cond = scale_image_to(cond_image, coarse_ckpt.coarse_config.hr_size);
  require_shape(noise, {coarse_ckpt.coarse_config.latent_dim}, "infer noise");
  InferResult out;
  out.coarse = coarse.generate_coarse(cond, target_view, noise);
  out.fine = fine.fine_forward(out.coarse, cond, target_view);
  return out;
}

}  // namespace varigan
