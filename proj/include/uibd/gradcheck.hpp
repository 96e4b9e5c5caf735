#ifndef UIBD_GRADCHECK_HPP_
#define UIBD_GRADCHECK_HPP_

#include <functional>

#include "uibd/nn.hpp"
#include "uibd/rng.hpp"

namespace uibd {

// Scalar loss of the current model parameters. The closure must be
// deterministic (freeze any rng before capturing) and report the smallest
// kink margin (distance of relu inputs / maxpool gaps from their
// nondifferentiable points) seen during evaluation.
using LossClosure = std::function<double(double* kink_margin)>;

struct GradCheckOptions {
  double step = 1e-5;
  int coords_per_tensor = 64;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
  int skipped = 0;  // coordinates sitting on a kink
};

// Central finite differences against the supplied analytic gradients over a
// sampled subset of coordinates (all coordinates for small tensors).
// Coordinates whose +/- evaluations pass within `step` of a kink are skipped.
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check(ModelParams& params, const ModelParams& analytic,
                           const LossClosure& loss, const GradCheckOptions& opt,
                           Rng& rng);

}  // namespace uibd

#endif  // UIBD_GRADCHECK_HPP_
