#include "uibd/defense.hpp"

#include <cmath>
#include <fstream>

#include "uibd/common.hpp"
#include "uibd/diffusion.hpp"
#include "uibd/metrics.hpp"

namespace uibd {

Trigger invert_trigger(const Model& model, const NoiseSchedule& sched,
                       const InversionConfig& cfg, Rng& rng) {
  require(cfg.iterations >= 1, "invert_trigger: iterations must be >= 1");
  const int t = cfg.timestep > 0 ? cfg.timestep : sched.T;
  const double kappa = shortcut_coefficient(sched, t);
  const std::vector<int> shape = model.input_shape();
  const double n = static_cast<double>(shape_numel(shape));

  Tensor tau_hat(shape);
  ModelParams holder;
  holder.names = {"tau_hat"};
  holder.tensors = {tau_hat};
  Optimizer opt(OptConfig::adam(cfg.lr));
  ModelParams grad = holder.like_zeros();
  ModelParams scratch = model.params.like_zeros();

  for (int it = 0; it < cfg.iterations; ++it) {
    grad.zero();
    double loss = 0.0;
    Tensor& th = holder.tensors[0];
    for (int b = 0; b < cfg.probe_batch; ++b) {
      const Tensor eps = gaussian_sample(shape, rng);
      const Tensor input = eps + th;
      Tape tape;
      const Tensor out = model_forward(model, input, time_arg(model, t), tape);
      // e = out - (eps - kappa tau_hat)
      Tensor e = out;
      e -= eps;
      e = axpy(e, kappa, th);
      loss += dot(e, e) / n;
      Tensor upstream = e;
      upstream *= 2.0 / n;
      scratch.zero();
      Tensor dinput;
      model_backward(model, tape, upstream, scratch, dinput);
      // d/dtau of ||out(eps+tau) - eps + kappa tau||^2: through the model
      // input and through the kappa tau term
      Tensor& g = grad.tensors[0];
      for (size_t i = 0; i < g.size(); ++i)
        g[i] += dinput[i] + kappa * upstream[i];
    }
    const double invb = 1.0 / cfg.probe_batch;
    loss *= invb;
    Tensor& g = grad.tensors[0];
    for (size_t i = 0; i < g.size(); ++i) {
      g[i] *= invb;
      g[i] += cfg.lambda_reg / n * (th[i] > 0 ? 1.0 : (th[i] < 0 ? -1.0 : 0.0));
    }
    require(std::isfinite(loss), "invert_trigger: diverged (non-finite loss)");
    opt.step(holder, grad);
  }
  holder.tensors[0].ensure_finite("invert_trigger");

  Trigger inv;
  inv.kind = TriggerKind::kInverted;
  inv.tau = holder.tensors[0];
  inv.strength = 1.0;
  return inv;
}

double inverted_trigger_asr(const Model& model, const NoiseSchedule& sched,
                            const Trigger& tau_hat, const Tensor& target, int n_samples,
                            double delta_asr, int ddim_substeps, Rng& rng) {
  require(n_samples >= 1, "inverted_trigger_asr: need at least one sample");
  const Tensor stamp = activation_stamp(tau_hat);
  std::vector<Tensor> outs;
  outs.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const Tensor eps = gaussian_sample(model.input_shape(), rng);
    outs.push_back(sample_native(model, sched, eps + stamp, ddim_substeps, rng));
  }
  return asr(outs, target, delta_asr);
}

DetectionVerdict detect_backdoor(const Model& model, const NoiseSchedule& sched,
                                 const Trigger& tau_hat, const DetectionConfig& cfg,
                                 Rng& rng) {
  require(cfg.m_samples >= 2, "detect_backdoor: need at least 2 samples per side");
  const Tensor stamp = activation_stamp(tau_hat);
  std::vector<Tensor> triggered, clean;
  for (int i = 0; i < cfg.m_samples; ++i) {
    const Tensor eps = gaussian_sample(model.input_shape(), rng);
    triggered.push_back(sample_native(model, sched, eps + stamp, cfg.ddim_substeps, rng));
  }
  for (int i = 0; i < cfg.m_samples; ++i) {
    const Tensor eps = gaussian_sample(model.input_shape(), rng);
    clean.push_back(sample_native(model, sched, eps, cfg.ddim_substeps, rng));
  }
  DetectionVerdict v;
  v.triggered_pairwise_ssim = mean_pairwise_ssim(triggered);
  v.clean_pairwise_ssim = mean_pairwise_ssim(clean);
  v.score = v.triggered_pairwise_ssim - v.clean_pairwise_ssim;
  v.threshold = cfg.threshold;
  v.is_backdoored = v.score > cfg.threshold;
  return v;
}

void removal_finetune(Model& model, const Trigger& tau_hat,
                      const std::vector<Tensor>& clean_subset, const NoiseSchedule& sched,
                      const RemovalConfig& cfg, Rng& rng) {
  require(!clean_subset.empty(), "removal_finetune: empty clean subset");
  const Tensor stamp = activation_stamp(tau_hat);
  Model frozen = model;  // reference copy for the nullification target
  Optimizer opt(cfg.opt);
  ModelParams grads = model.params.like_zeros();
  const double n = static_cast<double>(shape_numel(model.input_shape()));

  std::vector<int> order(clean_subset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  double initial = -1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch) {
      const size_t stop = std::min(order.size(), start + cfg.batch);
      grads.zero();
      for (size_t bi = start; bi < stop; ++bi) {
        const int i = order[bi];
        const double u = rng.uniform();
        const int t = 1 + static_cast<int>(u * sched.T);
        const Tensor eps = gaussian_sample(model.input_shape(), rng);
        double loss = clean_loss(model, clean_subset[i], t, eps, sched, &grads);
        if (cfg.mu > 0.0) {
          // nullification: pin the triggered response to the frozen clean one
          const Tensor eps2 = gaussian_sample(model.input_shape(), rng);
          const int t2 = 1 + static_cast<int>(rng.uniform() * sched.T);
          const Tensor ref = model_forward(frozen, eps2, time_arg(frozen, t2));
          Tape tape;
          const Tensor out = model_forward(model, eps2 + stamp, time_arg(model, t2), tape);
          Tensor e = out;
          e -= ref;
          loss += cfg.mu * dot(e, e) / n;
          Tensor upstream = e;
          upstream *= 2.0 * cfg.mu / n;
          Tensor dinput;
          model_backward(model, tape, upstream, grads, dinput);
        }
        epoch_loss += loss;
        ++seen;
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grads.tensors)
        for (size_t k = 0; k < g.size(); ++k) g[k] *= inv;
      opt.step(model.params, grads);
    }
    const double mean_loss = epoch_loss / static_cast<double>(seen);
    if (epoch == 0) initial = mean_loss;
    require(std::isfinite(mean_loss) && mean_loss <= 100.0 * std::max(initial, 1.0),
            "removal_finetune: diverged");
  }
}

ShiftProfile shift_profile(const Model& model, const NoiseSchedule& sched,
                           const Trigger& trigger, const std::vector<Tensor>& images,
                           int n_draws, Rng& rng) {
  require(!images.empty(), "shift_profile: need clean images");
  require(n_draws >= 1, "shift_profile: need at least one draw");
  const Tensor stamp = activation_stamp(trigger);
  const double stamp_norm = norm_l2(stamp);
  require(stamp_norm > 0.0, "shift_profile: zero trigger (norm is 0)");

  ShiftProfile prof;
  const int stride = std::max(1, sched.T / 16);
  for (int t = stride; t <= sched.T; t += stride) {
    double acc = 0.0;
    for (int d = 0; d < n_draws; ++d) {
      const Tensor& x0 = images[rng.uniform_int(0, static_cast<int>(images.size()) - 1)];
      const Tensor eps = gaussian_sample(x0.shape(), rng);
      const Tensor xt = forward_diffuse_clean(x0, t, eps, sched);
      const Tensor base = model_forward(model, xt, time_arg(model, t));
      const Tensor shifted = model_forward(model, xt + stamp, time_arg(model, t));
      Tensor diff = shifted;
      diff -= base;
      acc += norm_l2(diff) / stamp_norm;
    }
    prof.t.push_back(t);
    prof.shift.push_back(acc / n_draws);
  }
  return prof;
}

void write_shift_profile_csv(const ShiftProfile& prof, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  require(os.good(), "write_shift_profile_csv: cannot open '" + path + "'");
  os << "t,shift\n";
  os.precision(17);
  for (size_t i = 0; i < prof.t.size(); ++i)
    os << prof.t[i] << ',' << prof.shift[i] << '\n';
}

}  // namespace uibd
