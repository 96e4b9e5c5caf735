#ifndef UIBD_OPTIM_HPP_
#define UIBD_OPTIM_HPP_

#include <string>
#include <vector>

#include "uibd/nn.hpp"

namespace uibd {

struct OptConfig {
  enum class Kind { kSgd, kAdam };
  Kind kind = Kind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptConfig sgd(double lr);
  static OptConfig adam(double lr);
  static OptConfig parse(const std::string& kind, double lr);
};

class Optimizer {
 public:
  explicit Optimizer(OptConfig cfg) : cfg_(cfg) {}

  const OptConfig& config() const { return cfg_; }
  int step_count() const { return step_count_; }

  // In-place update from accumulated gradients. Moment buffers are created
  // lazily on the first step.
  void step(ModelParams& params, const ModelParams& grads);

 private:
  OptConfig cfg_;
  int step_count_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace uibd

#endif  // UIBD_OPTIM_HPP_
