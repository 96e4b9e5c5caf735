#include "uibd/optim.hpp"

#include <cmath>

#include "uibd/common.hpp"

namespace uibd {

OptConfig OptConfig::sgd(double lr) {
  OptConfig c;
  c.kind = Kind::kSgd;
  c.lr = lr;
  return c;
}

OptConfig OptConfig::adam(double lr) {
  OptConfig c;
  c.kind = Kind::kAdam;
  c.lr = lr;
  return c;
}

OptConfig OptConfig::parse(const std::string& kind, double lr) {
  if (kind == "sgd") return sgd(lr);
  if (kind == "adam") return adam(lr);
  fail("unknown optimizer kind '" + kind + "' (want sgd|adam)");
}

void Optimizer::step(ModelParams& params, const ModelParams& grads) {
  require(params.count() == grads.count(), "optimizer: gradient container mismatch");
  if (cfg_.kind == OptConfig::Kind::kSgd) {
    for (size_t i = 0; i < params.count(); ++i) {
      Tensor& p = params.tensors[i];
      const Tensor& g = grads.tensors[i];
      require(p.same_shape(g), "optimizer: gradient shape mismatch");
      for (size_t k = 0; k < p.size(); ++k) p[k] -= cfg_.lr * g[k];
    }
    ++step_count_;
    return;
  }
  if (m_.empty()) {
    for (const auto& t : params.tensors) {
      m_.emplace_back(t.shape());
      v_.emplace_back(t.shape());
    }
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_count_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_count_);
  for (size_t i = 0; i < params.count(); ++i) {
    Tensor& p = params.tensors[i];
    const Tensor& g = grads.tensors[i];
    require(p.same_shape(g), "optimizer: gradient shape mismatch");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace uibd
