#include "varigan/metrics/classifier.hpp"

#include <cmath>
#include <numeric>

#include "varigan/nn/adam.hpp"
#include "varigan/nn/common.hpp"
#include "varigan/nn/image_ops.hpp"
#include "varigan/nn/store.hpp"

namespace varigan {

namespace {

constexpr std::size_t kInputSide = 32;
constexpr std::size_t kFeatChannels = 64;
constexpr std::size_t kFeatSide = 4;

Tensor to_input(const Tensor& images) {
  Tensor x = images.ndim() == 3
                 ? images.reshaped({1, images.dim(0), images.dim(1), images.dim(2)})
                 : images;
  check(x.ndim() == 4 && x.dim(2) == x.dim(3), "classifier: expected square images, got {}",
        shape_str(x));
  check(x.dim(2) >= kInputSide, "classifier: input side {} below {}", x.dim(2), kInputSide);
  while (x.dim(2) > kInputSide) {
    check(x.dim(2) % 2 == 0, "classifier: side {} not reducible to {}", x.dim(2), kInputSide);
    x = downsample_box2x(x);
  }
  return x;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor p(logits.shape());
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits[i * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits[i * k + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits[i * k + j] - mx);
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] = std::exp(logits[i * k + j] - mx) / z;
  }
  return p;
}

}  // namespace

ShapeClassifier::ShapeClassifier(std::uint64_t init_seed, std::size_t num_classes)
    : num_classes_(num_classes),
      init_rng_(init_seed),
      conv0_(3, 16, 4, 2, nn::same_pad(4, 2), init_rng_),
      conv1_(16, 32, 4, 2, nn::same_pad(4, 2), init_rng_),
      conv2_(32, kFeatChannels, 4, 2, nn::same_pad(4, 2), init_rng_),
      bn1_(32),
      bn2_(kFeatChannels),
      head_(kFeatChannels * kFeatSide * kFeatSide, num_classes, init_rng_) {
  check(num_classes >= 2, "classifier: need at least two classes");
}

Tensor ShapeClassifier::features(const Tensor& batch) const {
  Tensor h = nn::apply_act(nn::Act::leaky_relu, conv0_.forward(batch));
  h = nn::apply_act(nn::Act::leaky_relu, bn1_.forward(conv1_.forward(h)));
  h = nn::apply_act(nn::Act::leaky_relu, bn2_.forward(conv2_.forward(h)));
  return h.reshaped({h.dim(0), kFeatChannels * kFeatSide * kFeatSide});
}

Tensor ShapeClassifier::predict(const Tensor& image) const {
  Tensor p = predict_batch(to_input(image));
  return p.reshaped({num_classes_});
}

Tensor ShapeClassifier::predict_batch(const Tensor& images) const {
  Tensor x = to_input(images);
  const std::size_t n = x.dim(0);
  Tensor out({n, num_classes_});
  const std::size_t stride = 3 * kInputSide * kInputSide;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor one({1, 3, kInputSide, kInputSide});
    std::copy(x.data() + i * stride, x.data() + (i + 1) * stride, one.data());
    Tensor p = softmax_rows(head_.forward(features(one)));
    std::copy(p.data(), p.data() + num_classes_, out.data() + i * num_classes_);
  }
  return out;
}

double ShapeClassifier::fit(const std::vector<Tensor>& images,
                            const std::vector<std::size_t>& labels, std::size_t epochs,
                            std::size_t batch_size, double lr, std::uint64_t seed) {
  check(!images.empty() && images.size() == labels.size(),
        "classifier fit: {} images vs {} labels", images.size(), labels.size());
  for (std::size_t l : labels) check(l < num_classes_, "classifier fit: label {} out of range", l);

  nn::Adam opt({lr, 0.9, 0.999, 1e-8}, params());
  nn::Rng rng(seed);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);

  double last_epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
      const std::size_t hi = std::min(order.size(), lo + batch_size);
      const std::size_t n = hi - lo;
      Tensor x({n, 3, kInputSide, kInputSide});
      const std::size_t stride = 3 * kInputSide * kInputSide;
      for (std::size_t i = 0; i < n; ++i) {
        Tensor img = to_input(images[order[lo + i]]);
        std::copy(img.data(), img.data() + stride, x.data() + i * stride);
      }

      opt.zero_grad();
      Tensor a0 = nn::apply_act(nn::Act::leaky_relu, conv0_.train_forward(x));
      Tensor a1 = nn::apply_act(nn::Act::leaky_relu, bn1_.train_forward(conv1_.train_forward(a0)));
      Tensor a2 = nn::apply_act(nn::Act::leaky_relu, bn2_.train_forward(conv2_.train_forward(a1)));
      Tensor logits =
          head_.train_forward(a2.reshaped({n, kFeatChannels * kFeatSide * kFeatSide}));
      Tensor p = softmax_rows(logits);

      double loss = 0.0;
      Tensor dlogits({n, num_classes_});
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = labels[order[lo + i]];
        loss -= std::log(std::max(p[i * num_classes_ + y], 1e-12));
        for (std::size_t j = 0; j < num_classes_; ++j) {
          dlogits[i * num_classes_ + j] =
              (p[i * num_classes_ + j] - (j == y ? 1.0 : 0.0)) / static_cast<double>(n);
        }
      }
      loss /= static_cast<double>(n);

      Tensor d = head_.backward(dlogits).reshaped({n, kFeatChannels, kFeatSide, kFeatSide});
      d = conv2_.backward(bn2_.backward(nn::act_backward(nn::Act::leaky_relu, a2, d)));
      d = conv1_.backward(bn1_.backward(nn::act_backward(nn::Act::leaky_relu, a1, d)));
      conv0_.backward(nn::act_backward(nn::Act::leaky_relu, a0, d));
      opt.step();

      sum += loss;
      ++batches;
    }
    last_epoch_loss = sum / static_cast<double>(batches);
  }
  return last_epoch_loss;
}

double ShapeClassifier::accuracy(const std::vector<Tensor>& images,
                                 const std::vector<std::size_t>& labels) const {
  check(!images.empty() && images.size() == labels.size(), "classifier accuracy: size mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Tensor p = predict(images[i]);
    std::size_t best = 0;
    for (std::size_t j = 1; j < num_classes_; ++j) {
      if (p[j] > p[best]) best = j;
    }
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

nn::ParamList ShapeClassifier::params() {
  nn::ParamList out;
  conv0_.collect_params("cls0", out);
  conv1_.collect_params("cls1", out);
  bn1_.collect_params("cls1.bn", out);
  conv2_.collect_params("cls2", out);
  bn2_.collect_params("cls2.bn", out);
  head_.collect_params("cls_head", out);
  return out;
}

std::map<std::string, Tensor> ShapeClassifier::named_tensors() {
  std::map<std::string, Tensor> out;
  for (const nn::Param& p : params()) out.emplace(p.name, *p.value);
  return out;
}

void ShapeClassifier::load_named_tensors(const std::map<std::string, Tensor>& named) {
  for (nn::Param& p : params()) {
    auto it = named.find(p.name);
    check(it != named.end(), "classifier load: missing tensor {}", p.name);
    check(it->second.same_shape(*p.value), "classifier load: shape mismatch for {}", p.name);
    *p.value = it->second;
  }
}

void ShapeClassifier::save(const std::string& path) const {
  nn::save_tensors(path, const_cast<ShapeClassifier*>(this)->named_tensors());
}

void ShapeClassifier::load(const std::string& path) {
  load_named_tensors(nn::load_tensors(path));
}

ClassifierHandle make_handle(const ShapeClassifier& cls) {
  ClassifierHandle h;
  h.num_classes = cls.num_classes();
  h.predict_batch = [&cls](const Tensor& images) { return cls.predict_batch(images); };
  return h;
}

}  // namespace varigan
