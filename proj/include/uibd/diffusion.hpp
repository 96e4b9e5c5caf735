#ifndef UIBD_DIFFUSION_HPP_
#define UIBD_DIFFUSION_HPP_

#include <functional>

#include "uibd/nn.hpp"
#include "uibd/rng.hpp"
#include "uibd/schedule.hpp"

namespace uibd {

// Noise predictor eps_hat(x_t, t). Samplers are written against this
// signature so exact plug-in predictors can drive them in oracle tests.
using EpsFn = std::function<Tensor(const Tensor&, int)>;

EpsFn model_eps_fn(const Model& model);

// x_t = alpha_hat(t) x0 + beta_hat(t) eps.
Tensor forward_diffuse_clean(const Tensor& x0, int t, const Tensor& eps,
                             const NoiseSchedule& sched);

// Mean squared error between eps and the model's noise prediction at
// x_t(x0, eps), averaged over elements. If `grads` is non-null, parameter
// gradients are accumulated into it. `kink_margin`, when non-null, receives
// the min of its current value and the forward pass margin (callers seed it
// with +inf).
double clean_loss(const Model& model, const Tensor& x0, int t, const Tensor& eps,
                  const NoiseSchedule& sched, ModelParams* grads,
                  double* kink_margin = nullptr);

// Noise-predictor epsilon-parameterization: x0_hat = (x_t - beta_hat eps_hat) / alpha_hat,
// clamped to [-1.5, 1.5] against early-step blowup.
Tensor predict_x0(const EpsFn& eps, const NoiseSchedule& sched, const Tensor& xt, int t);

// Stochastic reverse chain (fresh noise each step); requires zeta == 1.
// Iterates t = T..2 with the posterior mean a(t) x_t + b(t) x0_hat plus
// sqrt(s2) noise, and returns x0_hat at t = 1.
Tensor sample_ancestral(const EpsFn& eps, const NoiseSchedule& sched,
                        const Tensor& xT, Rng& rng);
Tensor sample_ancestral(const Model& model, const NoiseSchedule& sched,
                        const Tensor& xT, Rng& rng);

// Deterministic reverse jump over an evenly strided timestep subsequence;
// requires zeta == 0. x_{t'} = alpha_hat(t') x0_hat + beta_hat(t') eps_hat.
Tensor sample_ddim(const EpsFn& eps, const NoiseSchedule& sched,
                   const Tensor& xT, int substeps);
Tensor sample_ddim(const Model& model, const NoiseSchedule& sched,
                   const Tensor& xT, int substeps);

// Dispatch on sched.zeta: ancestral when 1, ddim when 0.
Tensor sample_native(const Model& model, const NoiseSchedule& sched,
                     const Tensor& xT, int ddim_substeps, Rng& rng);

// The shared toy denoiser architecture: time-embedding inject, conv stack
// with one residual block, conv head back to the image channels.
Model make_denoiser(int image_channels, int image_size, int width);

}  // namespace uibd

#endif  // UIBD_DIFFUSION_HPP_
