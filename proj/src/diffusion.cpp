#include "uibd/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "uibd/common.hpp"

namespace uibd {

namespace {

constexpr double kX0Clamp = 1.5;

void clamp_inplace(Tensor& t, double lo, double hi) {
  for (size_t i = 0; i < t.size(); ++i) t[i] = std::clamp(t[i], lo, hi);
}

}  // namespace

Tensor forward_diffuse_clean(const Tensor& x0, int t, const Tensor& eps,
                             const NoiseSchedule& sched) {
  require(t >= 1 && t <= sched.T, "forward_diffuse_clean: t out of range");
  require(x0.same_shape(eps), "forward_diffuse_clean: eps shape mismatch");
  Tensor xt = x0;
  xt *= sched.alpha_hat[t];
  return axpy(xt, sched.beta_hat[t], eps);
}

double clean_loss(const Model& model, const Tensor& x0, int t, const Tensor& eps,
                  const NoiseSchedule& sched, ModelParams* grads,
                  double* kink_margin) {
  const Tensor xt = forward_diffuse_clean(x0, t, eps, sched);
  Tape tape;
  const Tensor out = model_forward(model, xt, time_arg(model, t), tape);
  if (kink_margin) *kink_margin = std::min(*kink_margin, tape.kink_margin);
  const double n = static_cast<double>(out.size());
  double loss = 0.0;
  for (size_t i = 0; i < out.size(); ++i) {
    const double d = eps[i] - out[i];
    loss += d * d;
  }
  loss /= n;
  if (grads) {
    Tensor upstream(out.shape());
    for (size_t i = 0; i < out.size(); ++i) upstream[i] = 2.0 * (out[i] - eps[i]) / n;
    Tensor input_grad;
    model_backward(model, tape, upstream, *grads, input_grad);
  }
  require(std::isfinite(loss), "clean_loss: non-finite loss");
  return loss;
}

EpsFn model_eps_fn(const Model& model) {
  return [&model](const Tensor& x, int t) { return model_forward(model, x, time_arg(model, t)); };
}

Tensor predict_x0(const EpsFn& eps, const NoiseSchedule& sched, const Tensor& xt, int t) {
  const Tensor eps_hat = eps(xt, t);
  Tensor x0 = axpy(xt, -sched.beta_hat[t], eps_hat);
  x0 *= 1.0 / sched.alpha_hat[t];
  clamp_inplace(x0, -kX0Clamp, kX0Clamp);
  return x0;
}

Tensor sample_ancestral(const EpsFn& eps, const NoiseSchedule& sched,
                        const Tensor& xT, Rng& rng) {
  require(sched.zeta == 1.0, "sample_ancestral: schedule was built for the ode family (zeta=0)");
  Tensor x = xT;
  for (int t = sched.T; t >= 2; --t) {
    const Tensor x0 = predict_x0(eps, sched, x, t);
    const PosteriorCoeffs pc = posterior_coefficients(sched, t);
    Tensor mean = x;
    mean *= pc.a;
    mean += pc.b * x0;
    const double sd = std::sqrt(pc.s2);
    for (size_t i = 0; i < mean.size(); ++i) mean[i] += sd * rng.gaussian();
    x = std::move(mean);
    if (!std::isfinite(norm_linf(x)))
      fail("sample_ancestral: non-finite state at t=" + std::to_string(t));
  }
  Tensor out = predict_x0(eps, sched, x, 1);
  out.ensure_finite("sample_ancestral");
  return out;
}

Tensor sample_ancestral(const Model& model, const NoiseSchedule& sched,
                        const Tensor& xT, Rng& rng) {
  return sample_ancestral(model_eps_fn(model), sched, xT, rng);
}

Tensor sample_ddim(const EpsFn& eps, const NoiseSchedule& sched,
                   const Tensor& xT, int substeps) {
  require(substeps >= 1 && substeps <= sched.T, "sample_ddim: substeps must be in [1, T]");
  require(sched.zeta == 0.0, "sample_ddim: schedule was built for the sde family (zeta=1)");
  // Evenly strided subsequence T = t_1 > t_2 > ... > t_S >= 1.
  std::vector<int> ts(substeps);
  for (int i = 0; i < substeps; ++i) {
    ts[i] = sched.T - static_cast<int>(std::llround(
                          static_cast<double>(i) * (sched.T - 1) / std::max(1, substeps - 1)));
  }
  Tensor x = xT;
  for (int i = 0; i < substeps; ++i) {
    const int t = ts[i];
    const Tensor eps_hat = eps(x, t);
    Tensor x0 = axpy(x, -sched.beta_hat[t], eps_hat);
    x0 *= 1.0 / sched.alpha_hat[t];
    clamp_inplace(x0, -kX0Clamp, kX0Clamp);
    if (i + 1 == substeps) {
      x0.ensure_finite("sample_ddim");
      return x0;
    }
    const int tn = ts[i + 1];
    Tensor next = x0;
    next *= sched.alpha_hat[tn];
    next = axpy(next, sched.beta_hat[tn], eps_hat);
    if (!std::isfinite(norm_linf(next)))
      fail("sample_ddim: non-finite state at t=" + std::to_string(tn));
    x = std::move(next);
  }
  return x;  // unreachable
}

Tensor sample_ddim(const Model& model, const NoiseSchedule& sched,
                   const Tensor& xT, int substeps) {
  return sample_ddim(model_eps_fn(model), sched, xT, substeps);
}

Tensor sample_native(const Model& model, const NoiseSchedule& sched,
                     const Tensor& xT, int ddim_substeps, Rng& rng) {
  if (sched.zeta == 1.0) return sample_ancestral(model, sched, xT, rng);
  return sample_ddim(model, sched, xT, ddim_substeps);
}

Model make_denoiser(int image_channels, int image_size, int width) {
  const int c = image_channels;
  std::vector<LayerSpec> spec;
  spec.push_back(LayerSpec::conv2d(c, width, 3, 1, 1));
  spec.push_back(LayerSpec::time_embed(32));
  spec.push_back(LayerSpec::relu());
  spec.push_back(LayerSpec::conv2d(width, width, 3, 1, 1));
  spec.push_back(LayerSpec::time_embed(32));
  spec.push_back(LayerSpec::relu());
  spec.push_back(LayerSpec::residual({
      LayerSpec::conv2d(width, width, 3, 1, 1),
      LayerSpec::relu(),
      LayerSpec::conv2d(width, width, 3, 1, 1),
  }));
  spec.push_back(LayerSpec::relu());
  spec.push_back(LayerSpec::conv2d(width, c, 3, 1, 1));
  return Model(std::move(spec), {c, image_size, image_size});
}

}  // namespace uibd
