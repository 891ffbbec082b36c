#include "varigan/disc/disc.hpp"

#include <cmath>

#include "varigan/nn/common.hpp"

namespace varigan {

using nn::Act;
using nn::act_backward;
using nn::apply_act;
using nn::BatchNorm2d;
using nn::Conv2d;
using nn::same_pad;

void DiscConfig::validate() const {
  check(channels.size() == strides.size(), "disc config: channel/stride lists differ");
  check(channels.size() >= 2, "disc config: need at least 2 stages");
  check(channels.back() == 1, "disc config: final stage must have 1 channel");
  std::size_t s = input_size;
  for (std::size_t i = 0; i < strides.size(); ++i) {
    check(strides[i] == 1 || strides[i] == 2, "disc config: stride must be 1 or 2");
    check(s % strides[i] == 0, "disc config: extent {} not divisible at stage {}", s, i);
    s /= strides[i];
  }
  check(s >= 1, "disc config: strides collapse the input");
  check(filter_size >= 2, "disc config: filter too small");
}

DiscConfig desk_disc_config() {
  DiscConfig cfg;
  cfg.channels = {16, 32, 64, 128, 1};
  cfg.input_size = 64;
  return cfg;
}

DiscConfig mini_disc_config() {
  DiscConfig cfg;
  cfg.channels = {4, 8, 1};
  cfg.strides = {2, 2, 1};
  cfg.input_size = 8;
  return cfg;
}

DiscConfig lr_disc_config(std::size_t lr_size, bool desk) {
  DiscConfig cfg = desk ? desk_disc_config() : DiscConfig{};
  cfg.input_size = lr_size;
  return cfg;
}

double discriminator_loss(double d_real, double d_fake) {
  if (!(d_real > 0.0 && d_real < 1.0) || !(d_fake > 0.0 && d_fake < 1.0))
    throw std::domain_error(fmt::format(
        "discriminator_loss: probabilities ({}, {}) outside (0,1)", d_real, d_fake));
  const double r = std::clamp(d_real, 1e-7, 1.0 - 1e-7);
  const double f = std::clamp(d_fake, 1e-7, 1.0 - 1e-7);
  return std::log(r) + std::log(1.0 - f);
}

namespace {

DiscConfig validated(DiscConfig cfg) {
  cfg.validate();
  return cfg;
}

Tensor as_batch3(const Tensor& t) {
  if (t.ndim() == 4) return t;
  return t.reshaped({std::size_t{1}, t.dim(0), t.dim(1), t.dim(2)});
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

DiscNet::DiscNet(DiscConfig cfg, std::uint64_t init_seed)
    : cfg_(validated(std::move(cfg))), init_rng_(init_seed) {
  std::size_t spatial = cfg_.input_size;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    std::size_t in_ch = i == 0 ? cfg_.input_channels() : cfg_.channels[i - 1];
    std::size_t stride = cfg_.strides[i];
    Conv2d conv(in_ch, cfg_.channels[i], cfg_.filter_size, stride,
                same_pad(cfg_.filter_size, stride), init_rng_);
    spatial /= stride;
    bool last = i + 1 == cfg_.channels.size();
    std::unique_ptr<BatchNorm2d> bn;
    if (i > 0 && !last && spatial > 1) bn = std::make_unique<BatchNorm2d>(cfg_.channels[i]);
    stages_.push_back({std::move(conv), std::move(bn)});
  }
}

std::size_t DiscNet::patch_side() const {
  std::size_t s = cfg_.input_size;
  for (std::size_t st : cfg_.strides) s /= st;
  return s;
}

Tensor DiscNet::stack_input(const Tensor& cond_batch, const Tensor& cand_batch) const {
  Tensor cand = as_batch3(cand_batch);
  require_shape(cand, {cand.dim(0), 3, cfg_.input_size, cfg_.input_size}, "disc candidate");
  if (!cfg_.conditional) return cand;
  Tensor cond = as_batch3(cond_batch);
  require_shape(cond, {cand.dim(0), 3, cfg_.input_size, cfg_.input_size}, "disc condition");
  return concat_dim1({&cond, &cand});
}

Tensor DiscNet::logits_apply(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    h = stages_[i].conv.forward(h);
    if (stages_[i].bn) h = stages_[i].bn->forward(h);
    if (i + 1 < stages_.size()) h = apply_act(Act::leaky_relu, h);
  }
  return h;
}

Tensor DiscNet::patch_logits(const Tensor& cond_batch, const Tensor& cand_batch) const {
  return logits_apply(stack_input(cond_batch, cand_batch));
}

Tensor DiscNet::forward_probs(const Tensor& cond_batch, const Tensor& cand_batch) const {
  Tensor logits = patch_logits(cond_batch, cand_batch);
  const std::size_t n = logits.dim(0), p = logits.dim(2) * logits.dim(3);
  Tensor probs({n});
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t k = 0; k < p; ++k) m += logits.data()[i * p + k];
    probs[i] = sigmoid(m / static_cast<double>(p));
  }
  return probs;
}

double DiscNet::discriminate(const Tensor& cond_image, const Tensor& candidate) const {
  return forward_probs(cond_image, candidate)[0];
}

Tensor DiscNet::forward_train(const Tensor& cond_batch, const Tensor& cand_batch) {
  Tensor x = stack_input(cond_batch, cand_batch);
  cache_acts_.clear();
  Tensor h = x;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    h = stages_[i].conv.train_forward(h);
    if (stages_[i].bn) h = stages_[i].bn->train_forward(h);
    if (i + 1 < stages_.size()) h = apply_act(Act::leaky_relu, h);
    cache_acts_.push_back(h);
  }
  cache_logit_map_ = h;
  const std::size_t n = h.dim(0), p = h.dim(2) * h.dim(3);
  cache_probs_ = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t k = 0; k < p; ++k) m += h.data()[i * p + k];
    cache_probs_[i] = sigmoid(m / static_cast<double>(p));
  }
  return cache_probs_;
}

Tensor DiscNet::backward_to_candidate(const Tensor& d_probs) {
  check(!cache_logit_map_.empty(), "DiscNet::backward without forward_train");
  const std::size_t n = cache_logit_map_.dim(0);
  const std::size_t p = cache_logit_map_.dim(2) * cache_logit_map_.dim(3);
  require_shape(d_probs, {n}, "disc backward d_probs");

  Tensor d(cache_logit_map_.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double prob = cache_probs_[i];
    double dlogit = d_probs[i] * prob * (1.0 - prob) / static_cast<double>(p);
    for (std::size_t k = 0; k < p; ++k) d.raw()[i * p + k] = dlogit;
  }

  for (std::size_t i = stages_.size(); i-- > 0;) {
    if (i + 1 < stages_.size()) d = act_backward(Act::leaky_relu, cache_acts_[i], d);
    if (stages_[i].bn) d = stages_[i].bn->backward(d);
    d = stages_[i].conv.backward(d);
  }
  if (!cfg_.conditional) return d;
  auto parts = split_dim1(d, {3, 3});
  return std::move(parts[1]);
}

nn::ParamList DiscNet::params() {
  nn::ParamList out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    stages_[i].conv.collect_params(fmt::format("disc{}", i), out);
    if (stages_[i].bn) stages_[i].bn->collect_params(fmt::format("disc{}.bn", i), out);
  }
  return out;
}

std::map<std::string, Tensor> DiscNet::named_tensors() {
  std::map<std::string, Tensor> out;
  for (const nn::Param& p : params()) out.emplace(p.name, *p.value);
  return out;
}

void DiscNet::load_named_tensors(const std::map<std::string, Tensor>& named) {
  for (nn::Param& p : params()) {
    auto it = named.find(p.name);
    check(it != named.end(), "disc load: missing tensor {}", p.name);
    check(it->second.same_shape(*p.value), "disc load: shape mismatch for {}", p.name);
    *p.value = it->second;
  }
}

std::size_t DiscNet::param_count() {
  std::size_t n = 0;
  for (const nn::Param& p : params()) n += p.value->numel();
  return n;
}

}  // namespace varigan
