#include "varigan/coarse/coarse.hpp"

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
using nn::Pad4;
using nn::same_pad;

void CoarseConfig::validate() const {
  check(encoder_channels.size() == encoder_filters.size(),
        "coarse config: encoder channel/filter lists differ in length");
  check(decoder_channels.size() == decoder_filters.size(),
        "coarse config: decoder channel/filter lists differ in length");
  check(encoder_channels.size() >= 2, "coarse config: need at least 2 encoder stages");
  check(decoder_channels.size() >= 4, "coarse config: need at least 4 decoder stages");
  check(decoder_channels.back() == 3, "coarse config: decoder must end in 3 channels");
  check(latent_dim == fc_width, "coarse config: latent_dim must equal fc_width");
  check(lr_size % 8 == 0 && lr_size >= 8, "coarse config: lr_size must be a multiple of 8");
  check(hr_size == 2 * lr_size, "coarse config: hr_size must be twice lr_size");
  const std::size_t n = encoder_channels.size();
  const std::size_t spatial = hr_size >> (n - 1);
  check(spatial << (n - 1) == hr_size, "coarse config: hr_size not divisible by strides");
  check(encoder_filters.back() == spatial,
        "coarse config: final encoder filter {} must equal remaining extent {}",
        encoder_filters.back(), spatial);
}

CoarseConfig desk_coarse_config() {
  CoarseConfig cfg;
  cfg.latent_dim = 128;
  cfg.lr_size = 32;
  cfg.hr_size = 64;
  cfg.encoder_channels = {16, 32, 64, 64, 128};
  cfg.encoder_filters = {5, 5, 3, 3, 4};
  cfg.decoder_channels = {64, 64, 64, 32, 16, 3};
  cfg.decoder_filters = {3, 5, 5, 5, 5, 5};
  cfg.fc_width = 128;
  return cfg;
}

CoarseConfig mini_coarse_config() {
  CoarseConfig cfg;
  cfg.latent_dim = 8;
  cfg.lr_size = 8;
  cfg.hr_size = 16;
  cfg.encoder_channels = {8, 8};
  cfg.encoder_filters = {5, 8};
  cfg.decoder_channels = {8, 8, 8, 3};
  cfg.decoder_filters = {3, 5, 5, 5};
  cfg.fc_width = 8;
  return cfg;
}

Tensor kl_terms(const LatentPosterior& p) {
  check(p.mean.same_shape(p.log_variance), "kl_terms: mean/log_variance shape mismatch");
  Tensor t(p.mean.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    double mu = p.mean[i], lv = p.log_variance[i];
    t[i] = 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
  }
  return t;
}

double kl_divergence(const LatentPosterior& p) {
  Tensor t = kl_terms(p);
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t[i];
  if (p.mean.ndim() == 2) s /= static_cast<double>(p.mean.dim(0));
  return s;
}

Tensor sample_latent(const LatentPosterior& p, const Tensor& noise) {
  check(p.mean.same_shape(noise), "sample_latent: noise shape {} != mean shape {}",
        shape_str(noise), shape_str(p.mean));
  Tensor z(p.mean.shape());
  for (std::size_t i = 0; i < z.numel(); ++i)
    z[i] = p.mean[i] + std::exp(0.5 * p.log_variance[i]) * noise[i];
  return z;
}

namespace {

// Decoder stride plan: first stage preserves the seed, the next three double
// it (lr_size = 8 * seed), any remaining stages preserve resolution.
std::size_t decoder_stride(std::size_t stage) { return stage >= 1 && stage <= 3 ? 2 : 1; }

Tensor as_batch(const Tensor& t, std::size_t rank) {
  if (t.ndim() == rank + 1) return t;
  std::vector<std::size_t> shape = {1};
  for (std::size_t d = 0; d < t.ndim(); ++d) shape.push_back(t.dim(d));
  return t.reshaped(shape);
}

Tensor squeeze0(const Tensor& t) {
  std::vector<std::size_t> shape(t.shape().begin() + 1, t.shape().end());
  return t.reshaped(shape);
}

CoarseConfig validated(CoarseConfig cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

CoarseNet::CoarseNet(CoarseConfig cfg, std::uint64_t init_seed)
    : cfg_(validated(std::move(cfg))),
      init_rng_(init_seed),
      enc_fc_(cfg_.encoder_channels.back(), cfg_.fc_width, init_rng_),
      view_emb_(3, cfg_.latent_dim, init_rng_),
      post_head_(3 * cfg_.latent_dim, 2 * cfg_.latent_dim, init_rng_),
      dec_fc_(3 * cfg_.latent_dim,
              cfg_.decoder_channels[0] * cfg_.decoder_seed() * cfg_.decoder_seed(),
              init_rng_) {
  const auto& ech = cfg_.encoder_channels;
  const auto& efl = cfg_.encoder_filters;
  std::size_t spatial = cfg_.hr_size;
  for (std::size_t i = 0; i < ech.size(); ++i) {
    std::size_t in_ch = i == 0 ? 3 : ech[i - 1];
    bool last = i + 1 == ech.size();
    Conv2d conv = last ? Conv2d(in_ch, ech[i], efl[i], 1, Pad4{}, init_rng_)
                       : Conv2d(in_ch, ech[i], efl[i], 2, same_pad(efl[i], 2), init_rng_);
    spatial = last ? 1 : spatial / 2;
    // no normalization on the first stage or on 1x1 maps (a 1x1 map with
    // batch statistics would erase the representation at batch size 1)
    std::unique_ptr<BatchNorm2d> bn;
    if (i > 0 && spatial > 1) bn = std::make_unique<BatchNorm2d>(ech[i]);
    enc_.push_back({std::move(conv), std::move(bn)});
  }

  const auto& dch = cfg_.decoder_channels;
  const auto& dfl = cfg_.decoder_filters;
  spatial = cfg_.decoder_seed();
  for (std::size_t i = 0; i < dch.size(); ++i) {
    std::size_t in_ch = i == 0 ? dch[0] : dch[i - 1];
    std::size_t stride = decoder_stride(i);
    auto [pad, out_pad] = ConvTranspose2d::upsample_geometry(dfl[i], stride);
    ConvTranspose2d deconv(in_ch, dch[i], dfl[i], stride, pad, out_pad, init_rng_);
    spatial *= stride;
    bool last = i + 1 == dch.size();
    std::unique_ptr<BatchNorm2d> bn;
    if (!last && spatial > 1) bn = std::make_unique<BatchNorm2d>(dch[i]);
    dec_.push_back({std::move(deconv), std::move(bn), last ? Act::tanh : Act::relu});
  }
  check(spatial == cfg_.lr_size, "coarse decoder plan produced {} instead of {}", spatial,
        cfg_.lr_size);
}

Tensor CoarseNet::encode_batch(const Tensor& x) const {
  Tensor h = x;
  for (const EncStage& s : enc_) {
    h = s.conv.forward(h);
    if (s.bn) h = s.bn->forward(h);
    h = apply_act(Act::leaky_relu, h);
  }
  h = h.reshaped({h.dim(0), h.dim(1)});
  return apply_act(Act::leaky_relu, enc_fc_.forward(h));
}

Tensor CoarseNet::encode_batch_train(const Tensor& x) {
  cache_enc_act_.clear();
  Tensor h = x;
  for (EncStage& s : enc_) {
    h = s.conv.train_forward(h);
    if (s.bn) h = s.bn->train_forward(h);
    h = apply_act(Act::leaky_relu, h);
    cache_enc_act_.push_back(h);
  }
  h = h.reshaped({h.dim(0), h.dim(1)});
  cache_fc_out_ = apply_act(Act::leaky_relu, enc_fc_.train_forward(h));
  return cache_fc_out_;
}

Tensor CoarseNet::encoder_backward(const Tensor& d_repr) {
  Tensor d = act_backward(Act::leaky_relu, cache_fc_out_, d_repr);
  d = enc_fc_.backward(d);
  d = d.reshaped({d.dim(0), d.dim(1), std::size_t{1}, std::size_t{1}});
  for (std::size_t i = enc_.size(); i-- > 0;) {
    d = act_backward(Act::leaky_relu, cache_enc_act_[i], d);
    if (enc_[i].bn) d = enc_[i].bn->backward(d);
    d = enc_[i].conv.backward(d);
  }
  return d;
}

Tensor CoarseNet::decode_batch(const Tensor& z, const Tensor& cond_repr,
                               const Tensor& view_emb) const {
  Tensor in = concat_dim1({&z, &cond_repr, &view_emb});
  Tensor h = apply_act(Act::relu, dec_fc_.forward(in));
  const std::size_t s = cfg_.decoder_seed();
  h = h.reshaped({h.dim(0), cfg_.decoder_channels[0], s, s});
  for (const DecStage& st : dec_) {
    h = st.deconv.forward(h);
    if (st.bn) h = st.bn->forward(h);
    h = apply_act(st.act, h);
  }
  return h;
}

Tensor CoarseNet::decode_batch_train(const Tensor& z, const Tensor& cond_repr,
                                     const Tensor& view_emb) {
  cache_dec_act_.clear();
  Tensor in = concat_dim1({&z, &cond_repr, &view_emb});
  cache_dec_fc_out_ = apply_act(Act::relu, dec_fc_.train_forward(in));
  const std::size_t s = cfg_.decoder_seed();
  Tensor h = cache_dec_fc_out_.reshaped({in.dim(0), cfg_.decoder_channels[0], s, s});
  for (DecStage& st : dec_) {
    h = st.deconv.train_forward(h);
    if (st.bn) h = st.bn->train_forward(h);
    h = apply_act(st.act, h);
    cache_dec_act_.push_back(h);
  }
  cache_out_ = h;
  return h;
}

std::array<Tensor, 3> CoarseNet::decoder_backward(const Tensor& d_out) {
  Tensor d = d_out;
  for (std::size_t i = dec_.size(); i-- > 0;) {
    d = act_backward(dec_[i].act, cache_dec_act_[i], d);
    if (dec_[i].bn) d = dec_[i].bn->backward(d);
    d = dec_[i].deconv.backward(d);
  }
  d = d.reshaped({d.dim(0), d.numel() / d.dim(0)});
  d = act_backward(Act::relu, cache_dec_fc_out_, d);
  d = dec_fc_.backward(d);
  auto parts = split_dim1(d, {cfg_.latent_dim, cfg_.latent_dim, cfg_.latent_dim});
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

Tensor CoarseNet::encode_image(const Tensor& image) const {
  const bool single = image.ndim() == 3;
  Tensor x = as_batch(image, 3);
  require_shape(x, {x.dim(0), 3, cfg_.hr_size, cfg_.hr_size}, "encode_image input");
  Tensor r = encode_batch(x);
  return single ? squeeze0(r) : r;
}

Tensor CoarseNet::embed_view(ViewLabel view) const {
  return squeeze0(view_emb_.forward({view_index(view)}));
}

LatentPosterior CoarseNet::infer_posterior(const Tensor& target_repr, const Tensor& cond_repr,
                                           const Tensor& view_emb) const {
  const bool single = target_repr.ndim() == 1;
  Tensor t = as_batch(target_repr, 1), c = as_batch(cond_repr, 1), v = as_batch(view_emb, 1);
  require_shape(t, {t.dim(0), cfg_.latent_dim}, "infer_posterior target_repr");
  require_shape(c, {t.dim(0), cfg_.latent_dim}, "infer_posterior cond_repr");
  require_shape(v, {t.dim(0), cfg_.latent_dim}, "infer_posterior view_emb");
  Tensor in = concat_dim1({&t, &c, &v});
  Tensor out = post_head_.forward(in);
  auto parts = split_dim1(out, {cfg_.latent_dim, cfg_.latent_dim});
  LatentPosterior p{std::move(parts[0]), std::move(parts[1])};
  for (double& lv : p.log_variance.raw())
    lv = std::clamp(lv, -cfg_.logvar_clamp, cfg_.logvar_clamp);
  if (single) {
    p.mean = squeeze0(p.mean);
    p.log_variance = squeeze0(p.log_variance);
  }
  return p;
}

Tensor CoarseNet::decode_coarse(const Tensor& z, const Tensor& cond_repr,
                                const Tensor& view_emb) const {
  const bool single = z.ndim() == 1;
  Tensor zb = as_batch(z, 1), c = as_batch(cond_repr, 1), v = as_batch(view_emb, 1);
  require_shape(zb, {zb.dim(0), cfg_.latent_dim}, "decode_coarse z");
  require_shape(c, {zb.dim(0), cfg_.latent_dim}, "decode_coarse cond_repr");
  require_shape(v, {zb.dim(0), cfg_.latent_dim}, "decode_coarse view_emb");
  Tensor out = decode_batch(zb, c, v);
  return single ? squeeze0(out) : out;
}

Tensor CoarseNet::generate_coarse(const Tensor& cond_image, ViewLabel view,
                                  const Tensor& noise) const {
  Tensor repr = encode_image(cond_image);
  if (cond_image.ndim() == 3) {
    return decode_coarse(noise, repr, embed_view(view));
  }
  const std::size_t n = cond_image.dim(0);
  Tensor emb = view_emb_.forward(std::vector<std::size_t>(n, view_index(view)));
  return decode_coarse(noise, repr, emb);
}

Tensor CoarseNet::generate_batch(const Tensor& cond_hr,
                                 const std::vector<std::size_t>& view_ids,
                                 const Tensor& z) const {
  const std::size_t n = cond_hr.dim(0);
  check(view_ids.size() == n, "generate_batch: {} view ids for batch of {}",
        view_ids.size(), n);
  require_shape(z, {n, cfg_.latent_dim}, "generate_batch z");
  Tensor repr = encode_batch(cond_hr);
  Tensor emb = view_emb_.forward(view_ids);
  return decode_batch(z, repr, emb);
}

ElboParts CoarseNet::elbo_loss(const TrainingSample& sample, const Tensor& noise) const {
  CoarseBatch batch;
  batch.cond_hr = as_batch(sample.cond_image, 3);
  batch.target_hr = as_batch(sample.target_image, 3);
  batch.view_ids = {view_index(sample.target_view)};
  return elbo_loss(batch, as_batch(noise, 1));
}

namespace {

struct ElboEval {
  double kl, recon;
};

ElboEval elbo_terms(const Tensor& out, const Tensor& target_lr, const LatentPosterior& p) {
  double recon = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) recon += std::abs(out[i] - target_lr[i]);
  recon /= static_cast<double>(out.numel());
  return {kl_divergence(p), recon};
}

}  // namespace

ElboParts CoarseNet::elbo_loss(const CoarseBatch& batch, const Tensor& noise) const {
  const std::size_t n = batch.cond_hr.dim(0);
  require_shape(noise, {n, cfg_.latent_dim}, "elbo noise");
  Tensor stacked = concat_dim0({&batch.target_hr, &batch.cond_hr});
  Tensor reprs = encode_batch(stacked);
  Tensor t_repr = slice_dim0(reprs, 0, n), c_repr = slice_dim0(reprs, n, 2 * n);
  Tensor v = view_emb_.forward(batch.view_ids);
  LatentPosterior p = infer_posterior(t_repr, c_repr, v);
  Tensor z = sample_latent(p, noise);
  Tensor out = decode_batch(z, c_repr, v);
  Tensor target_lr = downsample_box2x(batch.target_hr);
  ElboEval e = elbo_terms(out, target_lr, p);
  return {cfg_.kl_weight * e.kl + e.recon, e.kl, e.recon};
}

ElboParts CoarseNet::elbo_backward(const CoarseBatch& batch, const Tensor& noise) {
  const std::size_t n = batch.cond_hr.dim(0);
  const std::size_t M = cfg_.latent_dim;
  require_shape(noise, {n, M}, "elbo noise");
  require_shape(batch.target_hr, {n, 3, cfg_.hr_size, cfg_.hr_size}, "elbo target_hr");
  require_shape(batch.cond_hr, {n, 3, cfg_.hr_size, cfg_.hr_size}, "elbo cond_hr");
  check(batch.view_ids.size() == n, "elbo: view_ids size mismatch");

  Tensor stacked = concat_dim0({&batch.target_hr, &batch.cond_hr});
  Tensor reprs = encode_batch_train(stacked);
  Tensor t_repr = slice_dim0(reprs, 0, n), c_repr = slice_dim0(reprs, n, 2 * n);
  Tensor v = view_emb_.train_forward(batch.view_ids);

  Tensor head_in = concat_dim1({&t_repr, &c_repr, &v});
  Tensor head_out = post_head_.train_forward(head_in);
  auto mv = split_dim1(head_out, {M, M});
  cache_mean_ = std::move(mv[0]);
  cache_lv_raw_ = std::move(mv[1]);
  cache_lv_ = cache_lv_raw_;
  for (double& lv : cache_lv_.raw()) lv = std::clamp(lv, -cfg_.logvar_clamp, cfg_.logvar_clamp);
  LatentPosterior p{cache_mean_, cache_lv_};

  cache_noise_ = noise;
  Tensor z = sample_latent(p, noise);
  Tensor out = decode_batch_train(z, c_repr, v);

  Tensor target_lr = downsample_box2x(batch.target_hr);
  ElboEval e = elbo_terms(out, target_lr, p);

  // d recon / d out: sign of the residual, averaged over batch and pixels
  Tensor d_out(out.shape());
  const double inv = 1.0 / static_cast<double>(out.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double r = out[i] - target_lr[i];
    d_out[i] = r > 0 ? inv : (r < 0 ? -inv : 0.0);
  }

  auto [dz, dc1, dv1] = decoder_backward(d_out);

  Tensor dmean = dz;
  Tensor dlv({n, M});
  for (std::size_t i = 0; i < dlv.numel(); ++i)
    dlv[i] = dz[i] * noise[i] * 0.5 * std::exp(0.5 * cache_lv_[i]);

  // closed-form KL gradients, batch-mean scaled
  const double kw = cfg_.kl_weight / static_cast<double>(n);
  for (std::size_t i = 0; i < dmean.numel(); ++i) {
    dmean[i] += kw * cache_mean_[i];
    dlv[i] += kw * 0.5 * (std::exp(cache_lv_[i]) - 1.0);
  }
  // clamp is flat outside its range
  for (std::size_t i = 0; i < dlv.numel(); ++i)
    if (std::abs(cache_lv_raw_[i]) > cfg_.logvar_clamp) dlv[i] = 0.0;

  Tensor d_head_out = concat_dim1({&dmean, &dlv});
  Tensor d_head_in = post_head_.backward(d_head_out);
  auto dparts = split_dim1(d_head_in, {M, M, M});

  Tensor dv = dv1;
  for (std::size_t i = 0; i < dv.numel(); ++i) dv[i] += dparts[2][i];
  view_emb_.backward(dv);

  Tensor d_reprs({2 * n, M});
  for (std::size_t i = 0; i < n * M; ++i) {
    d_reprs[i] = dparts[0][i];                       // target path
    d_reprs[n * M + i] = dc1[i] + dparts[1][i];      // condition path
  }
  encoder_backward(d_reprs);

  return {cfg_.kl_weight * e.kl + e.recon, e.kl, e.recon};
}

Tensor CoarseNet::decode_forward_train(const Tensor& cond_hr,
                                       const std::vector<std::size_t>& view_ids,
                                       const Tensor& z) {
  const std::size_t n = cond_hr.dim(0);
  require_shape(z, {n, cfg_.latent_dim}, "decode_forward_train z");
  Tensor c_repr = encode_batch_train(cond_hr);
  Tensor v = view_emb_.train_forward(view_ids);
  cache_n_ = n;
  return decode_batch_train(z, c_repr, v);
}

void CoarseNet::decode_backward_train(const Tensor& d_out) {
  auto [dz, dc, dv] = decoder_backward(d_out);
  (void)dz;  // z is external noise, nothing upstream of it
  view_emb_.backward(dv);
  encoder_backward(dc);
}

nn::ParamList CoarseNet::params() {
  nn::ParamList out;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    enc_[i].conv.collect_params(fmt::format("enc{}", i), out);
    if (enc_[i].bn) enc_[i].bn->collect_params(fmt::format("enc{}.bn", i), out);
  }
  enc_fc_.collect_params("enc_fc", out);
  view_emb_.collect_params("view_emb", out);
  post_head_.collect_params("post_head", out);
  dec_fc_.collect_params("dec_fc", out);
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    dec_[i].deconv.collect_params(fmt::format("dec{}", i), out);
    if (dec_[i].bn) dec_[i].bn->collect_params(fmt::format("dec{}.bn", i), out);
  }
  return out;
}

std::map<std::string, Tensor> CoarseNet::named_tensors() {
  std::map<std::string, Tensor> out;
  for (const nn::Param& p : params()) out.emplace(p.name, *p.value);
  return out;
}

void CoarseNet::load_named_tensors(const std::map<std::string, Tensor>& named) {
  for (nn::Param& p : params()) {
    auto it = named.find(p.name);
    check(it != named.end(), "coarse load: missing tensor {}", p.name);
    check(it->second.same_shape(*p.value), "coarse load: shape mismatch for {}", p.name);
    *p.value = it->second;
  }
}

std::size_t CoarseNet::param_count() {
  std::size_t n = 0;
  for (const nn::Param& p : params()) n += p.value->numel();
  return n;
}

CoarseNet::Probes CoarseNet::probe_activations(const Tensor& cond_image, ViewLabel view,
                                               const Tensor& noise) const {
  Probes probes;
  Tensor h = as_batch(cond_image, 3);
  for (const EncStage& s : enc_) {
    h = s.conv.forward(h);
    if (s.bn) h = s.bn->forward(h);
    h = apply_act(Act::leaky_relu, h);
    probes.encoder.push_back(squeeze0(h));
  }
  Tensor flat = h.reshaped({h.dim(0), h.dim(1)});
  Tensor repr = apply_act(Act::leaky_relu, enc_fc_.forward(flat));

  Tensor z = as_batch(noise, 1);
  Tensor v = view_emb_.forward({view_index(view)});
  Tensor in = concat_dim1({&z, &repr, &v});
  Tensor d = apply_act(Act::relu, dec_fc_.forward(in));
  const std::size_t s = cfg_.decoder_seed();
  d = d.reshaped({std::size_t{1}, cfg_.decoder_channels[0], s, s});
  for (const DecStage& st : dec_) {
    d = st.deconv.forward(d);
    if (st.bn) d = st.bn->forward(d);
    d = apply_act(st.act, d);
    probes.decoder.push_back(squeeze0(d));
  }
  return probes;
}

}  // namespace varigan
