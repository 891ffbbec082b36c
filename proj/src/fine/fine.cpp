#include "varigan/fine/fine.hpp"

#include <cmath>

#include "varigan/nn/common.hpp"
#include "varigan/nn/image_ops.hpp"

namespace varigan {

using nn::Act;
using nn::act_backward;
using nn::apply_act;
using nn::BatchNorm2d;
using nn::Conv2d;
using nn::ConvTranspose2d;
using nn::same_pad;

void FineConfig::validate() const {
  check(encoder_channels.size() == decoder_channels.size(),
        "fine config: encoder/decoder stage counts differ");
  check(stages() >= 2, "fine config: need at least 2 stages");
  check(decoder_channels.back() == 3, "fine config: decoder must end in 3 channels");
  check(encoder_channels.back() == bottleneck_dim,
        "fine config: last encoder channels {} must equal bottleneck_dim {}",
        encoder_channels.back(), bottleneck_dim);
  check(stride == 2, "fine config: stride plan is fixed at 2");
  check(filter_size >= stride, "fine config: filter smaller than stride");
  std::size_t s = hr_size >> stages();
  check(s >= 1 && (s << stages()) == hr_size,
        "fine config: hr_size {} not divisible by {} halvings", hr_size, stages());
  check(hr_size % 2 == 0, "fine config: hr_size must be even");
}

FineConfig desk_fine_config() {
  FineConfig cfg;
  cfg.bottleneck_dim = 64;
  cfg.hr_size = 64;
  cfg.encoder_channels = {16, 32, 64};
  cfg.decoder_channels = {32, 16, 3};
  return cfg;
}

FineConfig mini_fine_config() {
  FineConfig cfg;
  cfg.bottleneck_dim = 8;
  cfg.hr_size = 8;
  cfg.encoder_channels = {4, 4, 8};
  cfg.decoder_channels = {4, 4, 3};
  return cfg;
}

GenLossParts generator_loss(double d_score_fake, const Tensor& fake, const Tensor& target,
                            double lambda_l1, bool non_saturating) {
  if (!(d_score_fake > 0.0 && d_score_fake < 1.0))
    throw std::domain_error(
        fmt::format("generator_loss: d_score_fake {} outside (0,1)", d_score_fake));
  check(fake.same_shape(target), "generator_loss: fake/target shape mismatch");
  const double d = std::clamp(d_score_fake, 1e-7, 1.0 - 1e-7);
  GenLossParts parts;
  parts.adv = non_saturating ? -std::log(d) : std::log(1.0 - d);
  for (std::size_t i = 0; i < fake.numel(); ++i) parts.l1 += std::abs(fake[i] - target[i]);
  parts.l1 /= static_cast<double>(fake.numel());
  parts.total = parts.adv + lambda_l1 * parts.l1;
  return parts;
}

namespace {

FineConfig validated(FineConfig cfg) {
  cfg.validate();
  return cfg;
}

Tensor as_batch3(const Tensor& t) {
  if (t.ndim() == 4) return t;
  return t.reshaped({std::size_t{1}, t.dim(0), t.dim(1), t.dim(2)});
}

}  // namespace

std::size_t FineNet::decoder_in_channels(std::size_t stage) const {
  if (stage == 0) {
    std::size_t ch = 2 * cfg_.bottleneck_dim;
    if (cfg_.view_conditioning) ch += cfg_.bottleneck_dim;
    return ch;
  }
  std::size_t ch = cfg_.decoder_channels[stage - 1];
  if (cfg_.skips_enabled) ch += 2 * cfg_.encoder_channels[cfg_.stages() - 1 - stage];
  return ch;
}

FineNet::FineNet(FineConfig cfg, std::uint64_t init_seed)
    : cfg_(validated(std::move(cfg))), init_rng_(init_seed) {
  auto build_path = [&](Path& p) {
    std::size_t spatial = cfg_.hr_size;
    for (std::size_t i = 0; i < cfg_.stages(); ++i) {
      std::size_t in_ch = i == 0 ? 3 : cfg_.encoder_channels[i - 1];
      Conv2d conv(in_ch, cfg_.encoder_channels[i], cfg_.filter_size, 2,
                  same_pad(cfg_.filter_size, 2), init_rng_);
      spatial /= 2;
      std::unique_ptr<BatchNorm2d> bn;
      if (i > 0 && spatial > 1) bn = std::make_unique<BatchNorm2d>(cfg_.encoder_channels[i]);
      p.stages.push_back({std::move(conv), std::move(bn)});
    }
  };
  build_path(lr_path_);
  build_path(cond_path_);

  if (cfg_.view_conditioning)
    view_emb_ = std::make_unique<nn::Embedding>(3, cfg_.bottleneck_dim, init_rng_);

  std::size_t spatial = cfg_.bottleneck_spatial();
  for (std::size_t j = 0; j < cfg_.stages(); ++j) {
    auto [pad, out_pad] = ConvTranspose2d::upsample_geometry(cfg_.filter_size, 2);
    ConvTranspose2d deconv(decoder_in_channels(j), cfg_.decoder_channels[j], cfg_.filter_size,
                           2, pad, out_pad, init_rng_);
    spatial *= 2;
    bool last = j + 1 == cfg_.stages();
    std::unique_ptr<BatchNorm2d> bn;
    if (!last && spatial > 1)
      bn = std::make_unique<BatchNorm2d>(cfg_.decoder_channels[j]);
    dec_.push_back({std::move(deconv), std::move(bn), last ? Act::tanh : Act::relu});
  }
  check(spatial == cfg_.hr_size, "fine decoder plan produced {} instead of {}", spatial,
        cfg_.hr_size);
}

std::vector<Tensor> FineNet::encode_path(const Path& p, const Tensor& x) const {
  std::vector<Tensor> acts;
  Tensor h = x;
  for (const Stage& s : p.stages) {
    h = s.conv.forward(h);
    if (s.bn) h = s.bn->forward(h);
    h = apply_act(Act::leaky_relu, h);
    acts.push_back(h);
  }
  return acts;
}

void FineNet::encode_path_train(Path& p, const Tensor& x, std::vector<Tensor>& acts) {
  acts.clear();
  Tensor h = x;
  for (Stage& s : p.stages) {
    h = s.conv.train_forward(h);
    if (s.bn) h = s.bn->train_forward(h);
    h = apply_act(Act::leaky_relu, h);
    acts.push_back(h);
  }
}

Tensor FineNet::view_tile(const std::vector<std::size_t>& ids) const {
  Tensor rows = view_emb_->forward(ids);  // (N, M_h)
  const std::size_t n = rows.dim(0), c = rows.dim(1), s = cfg_.bottleneck_spatial();
  Tensor out({n, c, s, s});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < s * s; ++k)
        out.raw()[(i * c + ch) * s * s + k] = rows.raw()[i * c + ch];
  return out;
}

Tensor FineNet::fine_forward(const Tensor& lr_image, const Tensor& cond_image,
                             ViewLabel view) const {
  const bool single = lr_image.ndim() == 3;
  Tensor lr = as_batch3(lr_image), cond = as_batch3(cond_image);
  require_shape(lr, {lr.dim(0), 3, cfg_.lr_size(), cfg_.lr_size()}, "fine_forward lr_image");
  require_shape(cond, {lr.dim(0), 3, cfg_.hr_size, cfg_.hr_size}, "fine_forward cond_image");

  std::vector<Tensor> lr_acts = encode_path(lr_path_, upsample_nearest2x(lr));
  std::vector<Tensor> cond_acts = encode_path(cond_path_, cond);

  Tensor h;
  if (cfg_.view_conditioning) {
    Tensor vt = view_tile(std::vector<std::size_t>(lr.dim(0), view_index(view)));
    h = concat_dim1({&lr_acts.back(), &cond_acts.back(), &vt});
  } else {
    h = concat_dim1({&lr_acts.back(), &cond_acts.back()});
  }
  const std::size_t m = cfg_.stages();
  for (std::size_t j = 0; j < m; ++j) {
    if (j >= 1 && cfg_.skips_enabled) {
      const Tensor& a = lr_acts[m - 1 - j];
      const Tensor& b = cond_acts[m - 1 - j];
      h = concat_dim1({&h, &a, &b});
    }
    h = dec_[j].deconv.forward(h);
    if (dec_[j].bn) h = dec_[j].bn->forward(h);
    h = apply_act(dec_[j].act, h);
  }
  if (single) return h.reshaped({h.dim(1), h.dim(2), h.dim(3)});
  return h;
}

Tensor FineNet::forward_train(const Tensor& lr_batch, const Tensor& cond_batch,
                              const std::vector<std::size_t>& view_ids) {
  const std::size_t n = lr_batch.dim(0);
  require_shape(lr_batch, {n, 3, cfg_.lr_size(), cfg_.lr_size()}, "forward_train lr_batch");
  require_shape(cond_batch, {n, 3, cfg_.hr_size, cfg_.hr_size}, "forward_train cond_batch");
  cache_view_ids_ = view_ids;

  encode_path_train(lr_path_, upsample_nearest2x(lr_batch), cache_lr_acts_);
  encode_path_train(cond_path_, cond_batch, cache_cond_acts_);

  Tensor h;
  if (cfg_.view_conditioning) {
    Tensor vt = view_tile(view_ids);
    h = concat_dim1({&cache_lr_acts_.back(), &cache_cond_acts_.back(), &vt});
  } else {
    h = concat_dim1({&cache_lr_acts_.back(), &cache_cond_acts_.back()});
  }
  cache_dec_acts_.clear();
  const std::size_t m = cfg_.stages();
  for (std::size_t j = 0; j < m; ++j) {
    if (j >= 1 && cfg_.skips_enabled) {
      const Tensor& a = cache_lr_acts_[m - 1 - j];
      const Tensor& b = cache_cond_acts_[m - 1 - j];
      h = concat_dim1({&h, &a, &b});
    }
    h = dec_[j].deconv.train_forward(h);
    if (dec_[j].bn) h = dec_[j].bn->train_forward(h);
    h = apply_act(dec_[j].act, h);
    cache_dec_acts_.push_back(h);
  }
  return h;
}

void FineNet::path_backward(Path& p, const std::vector<Tensor>& acts,
                            std::vector<Tensor>& stage_grads) {
  Tensor d = stage_grads.back();
  for (std::size_t i = p.stages.size(); i-- > 0;) {
    d = act_backward(Act::leaky_relu, acts[i], d);
    if (p.stages[i].bn) d = p.stages[i].bn->backward(d);
    d = p.stages[i].conv.backward(d);
    if (i > 0)
      for (std::size_t k = 0; k < d.numel(); ++k) d[k] += stage_grads[i - 1][k];
  }
}

void FineNet::fine_backward(const Tensor& d_out) {
  const std::size_t m = cfg_.stages();
  // per-stage gradient accumulators for both encoder paths
  std::vector<Tensor> lr_grads, cond_grads;
  for (std::size_t i = 0; i < m; ++i) {
    lr_grads.emplace_back(cache_lr_acts_[i].shape(), 0.0);
    cond_grads.emplace_back(cache_cond_acts_[i].shape(), 0.0);
  }

  Tensor d = d_out;
  for (std::size_t j = m; j-- > 0;) {
    d = act_backward(dec_[j].act, cache_dec_acts_[j], d);
    if (dec_[j].bn) d = dec_[j].bn->backward(d);
    d = dec_[j].deconv.backward(d);
    if (j >= 1) {
      if (cfg_.skips_enabled) {
        std::size_t enc_w = cfg_.encoder_channels[m - 1 - j];
        auto parts = split_dim1(d, {cfg_.decoder_channels[j - 1], enc_w, enc_w});
        d = std::move(parts[0]);
        lr_grads[m - 1 - j] = std::move(parts[1]);
        cond_grads[m - 1 - j] = std::move(parts[2]);
      }
    } else {
      std::vector<std::size_t> widths = {cfg_.bottleneck_dim, cfg_.bottleneck_dim};
      if (cfg_.view_conditioning) widths.push_back(cfg_.bottleneck_dim);
      auto parts = split_dim1(d, widths);
      for (std::size_t k = 0; k < parts[0].numel(); ++k) {
        lr_grads[m - 1][k] += parts[0][k];
        cond_grads[m - 1][k] += parts[1][k];
      }
      if (cfg_.view_conditioning) {
        // collapse the tiled embedding gradient back to per-row vectors
        const Tensor& vt = parts[2];
        const std::size_t n = vt.dim(0), c = vt.dim(1), sp = vt.dim(2) * vt.dim(3);
        Tensor drows({n, c}, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t k = 0; k < sp; ++k)
              drows.raw()[i * c + ch] += vt.data()[(i * c + ch) * sp + k];
        view_emb_->train_forward(cache_view_ids_);
        view_emb_->backward(drows);
      }
    }
  }
  path_backward(lr_path_, cache_lr_acts_, lr_grads);
  path_backward(cond_path_, cache_cond_acts_, cond_grads);
}

std::vector<Tensor> FineNet::decoder_stage_inputs(const Tensor& lr_image,
                                                  const Tensor& cond_image,
                                                  ViewLabel view) const {
  Tensor lr = as_batch3(lr_image), cond = as_batch3(cond_image);
  std::vector<Tensor> lr_acts = encode_path(lr_path_, upsample_nearest2x(lr));
  std::vector<Tensor> cond_acts = encode_path(cond_path_, cond);

  std::vector<Tensor> inputs;
  Tensor h;
  if (cfg_.view_conditioning) {
    Tensor vt = view_tile(std::vector<std::size_t>(lr.dim(0), view_index(view)));
    h = concat_dim1({&lr_acts.back(), &cond_acts.back(), &vt});
  } else {
    h = concat_dim1({&lr_acts.back(), &cond_acts.back()});
  }
  const std::size_t m = cfg_.stages();
  for (std::size_t j = 0; j < m; ++j) {
    if (j >= 1 && cfg_.skips_enabled) {
      const Tensor& a = lr_acts[m - 1 - j];
      const Tensor& b = cond_acts[m - 1 - j];
      h = concat_dim1({&h, &a, &b});
    }
    inputs.push_back(h);
    h = dec_[j].deconv.forward(h);
    if (dec_[j].bn) h = dec_[j].bn->forward(h);
    h = apply_act(dec_[j].act, h);
  }
  return inputs;
}

nn::ParamList FineNet::params() {
  nn::ParamList out;
  for (std::size_t i = 0; i < lr_path_.stages.size(); ++i) {
    lr_path_.stages[i].conv.collect_params(fmt::format("lr_enc{}", i), out);
    if (lr_path_.stages[i].bn)
      lr_path_.stages[i].bn->collect_params(fmt::format("lr_enc{}.bn", i), out);
  }
  for (std::size_t i = 0; i < cond_path_.stages.size(); ++i) {
    cond_path_.stages[i].conv.collect_params(fmt::format("cond_enc{}", i), out);
    if (cond_path_.stages[i].bn)
      cond_path_.stages[i].bn->collect_params(fmt::format("cond_enc{}.bn", i), out);
  }
  if (view_emb_) view_emb_->collect_params("view_emb", out);
  for (std::size_t j = 0; j < dec_.size(); ++j) {
    dec_[j].deconv.collect_params(fmt::format("dec{}", j), out);
    if (dec_[j].bn) dec_[j].bn->collect_params(fmt::format("dec{}.bn", j), out);
  }
  return out;
}

std::map<std::string, Tensor> FineNet::named_tensors() {
  std::map<std::string, Tensor> out;
  for (const nn::Param& p : params()) out.emplace(p.name, *p.value);
  return out;
}

void FineNet::load_named_tensors(const std::map<std::string, Tensor>& named) {
  for (nn::Param& p : params()) {
    auto it = named.find(p.name);
    check(it != named.end(), "fine load: missing tensor {}", p.name);
    check(it->second.same_shape(*p.value), "fine load: shape mismatch for {}", p.name);
    *p.value = it->second;
  }
}

std::size_t FineNet::param_count() {
  std::size_t n = 0;
  for (const nn::Param& p : params()) n += p.value->numel();
  return n;
}

}  // namespace varigan
