#include "varigan/nn/adam.hpp"

#include <cmath>

#include "varigan/nn/common.hpp"

namespace varigan::nn {

Adam::Adam(AdamConfig cfg, const ParamList& params) : cfg_(cfg), params_(params) {
  for (const Param& p : params_) {
    check(p.value && p.grad, "Adam: null param {}", p.name);
    check(p.value->same_shape(*p.grad), "Adam: grad shape mismatch for {}", p.name);
    m_.emplace(p.name, Tensor(p.value->shape(), 0.0));
    v_.emplace(p.name, Tensor(p.value->shape(), 0.0));
  }
  check(m_.size() == params_.size(), "Adam: duplicate param names");
}

void Adam::zero_grad() {
  for (const Param& p : params_) p.grad->zero();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const Param& p : params_) {
    Tensor& m = m_.at(p.name);
    Tensor& v = v_.at(p.name);
    const std::size_t n = p.value->numel();
    for (std::size_t i = 0; i < n; ++i) {
      double g = (*p.grad)[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[i] / c1;
      double vhat = v[i] / c2;
      (*p.value)[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

std::map<std::string, Tensor> Adam::state(const std::string& prefix) const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : m_) out.emplace(prefix + "/m/" + name, t);
  for (const auto& [name, t] : v_) out.emplace(prefix + "/v/" + name, t);
  Tensor steps({1});
  steps[0] = static_cast<double>(t_);
  out.emplace(prefix + "/t", steps);
  return out;
}

void Adam::load_state(const std::map<std::string, Tensor>& named,
                      const std::string& prefix) {
  auto it = named.find(prefix + "/t");
  check(it != named.end(), "Adam::load_state: missing {}/t", prefix);
  t_ = static_cast<std::int64_t>(it->second[0]);
  for (auto& [name, t] : m_) {
    auto mit = named.find(prefix + "/m/" + name);
    check(mit != named.end(), "Adam::load_state: missing {}/m/{}", prefix, name);
    check(mit->second.same_shape(t), "Adam::load_state: shape mismatch for {}", name);
    t = mit->second;
  }
  for (auto& [name, t] : v_) {
    auto vit = named.find(prefix + "/v/" + name);
    check(vit != named.end(), "Adam::load_state: missing {}/v/{}", prefix, name);
    t = vit->second;
  }
}

}  // namespace varigan::nn
