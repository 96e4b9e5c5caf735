#include "uibd/backdoor.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "uibd/checkpoint.hpp"
#include "uibd/common.hpp"

using nlohmann::json;

namespace uibd {

std::string trigger_kind_name(TriggerKind k) {
  switch (k) {
    case TriggerKind::kGenerated: return "generated";
    case TriggerKind::kMaskedPattern: return "masked-pattern";
    case TriggerKind::kInverted: return "inverted";
  }
  fail("trigger_kind_name: bad kind");
}

TriggerKind trigger_kind_from_name(const std::string& name) {
  if (name == "generated") return TriggerKind::kGenerated;
  if (name == "masked-pattern") return TriggerKind::kMaskedPattern;
  if (name == "inverted") return TriggerKind::kInverted;
  fail("trigger_kind_from_name: unknown kind '" + name + "'");
}

Tensor inject_trigger_additive(const Tensor& x, const Trigger& trig) {
  require(trig.kind != TriggerKind::kMaskedPattern,
          "inject_trigger_additive: masked-pattern triggers use the masked blend");
  require(x.same_shape(trig.tau), "inject_trigger_additive: shape mismatch");
  require(trig.strength >= 0.0, "inject_trigger_additive: strength must be >= 0");
  return axpy(x, trig.strength, trig.tau);
}

Tensor inject_trigger_masked(const Tensor& x, const Tensor& mask, const Tensor& g) {
  require(x.same_shape(mask) && x.same_shape(g), "inject_trigger_masked: shape mismatch");
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) {
    const double m = mask[i];
    require(m == 0.0 || m == 1.0, "inject_trigger_masked: mask must be binary");
    out[i] = m * g[i] + (1.0 - m) * x[i];
  }
  return out;
}

Tensor stamp_image(const Tensor& x, const Trigger& trig) {
  if (trig.kind == TriggerKind::kMaskedPattern)
    return inject_trigger_masked(x, trig.mask, trig.pattern);
  return inject_trigger_additive(x, trig);
}

Tensor activation_stamp(const Trigger& trig) {
  if (trig.kind == TriggerKind::kMaskedPattern) {
    Tensor s = trig.pattern;
    for (size_t i = 0; i < s.size(); ++i) s[i] *= trig.mask[i];
    return s;
  }
  Tensor s = trig.tau;
  s *= trig.strength;
  return s;
}

Trigger make_box_trigger(int image_size, int box, double value) {
  require(box >= 1 && box + 1 < image_size, "make_box_trigger: box does not fit");
  Trigger t;
  t.kind = TriggerKind::kMaskedPattern;
  t.strength = 1.0;
  t.mask = Tensor({1, image_size, image_size});
  t.pattern = Tensor({1, image_size, image_size});
  for (int y = 1; y <= box; ++y)
    for (int x = 1; x <= box; ++x) {
      t.mask.at(0, y, x) = 1.0;
      t.pattern.at(0, y, x) = value;
    }
  t.tau = activation_stamp(t);
  return t;
}

std::vector<int> PoisonedDataset::poisoned_indices() const {
  std::vector<int> out;
  for (size_t i = 0; i < poisoned.size(); ++i)
    if (poisoned[i]) out.push_back(static_cast<int>(i));
  return out;
}

PoisonedDataset poison_dataset(const LabeledDataset& clean, const PoisonSpec& spec, Rng& rng) {
  require(spec.rate >= 0.0 && spec.rate <= 1.0, "poison_dataset: rate must be in [0,1]");
  const size_t n = clean.size();
  require(spec.rate == 0.0 || n > 0, "poison_dataset: cannot poison an empty dataset");
  const size_t n_poison = static_cast<size_t>(std::ceil(spec.rate * static_cast<double>(n)));

  PoisonedDataset out;
  out.images = clean.images;
  out.poisoned.assign(n, 0);
  out.stamped.resize(n);
  out.target = spec.target;
  out.eta_c = spec.eta_c;
  out.eta_p = spec.eta_p;
  out.seed = rng.seed();

  // a zero-strength additive trigger stamps nothing: no sample is actually
  // poisoned and training degenerates to the clean loop
  const bool inert = spec.trigger.kind != TriggerKind::kMaskedPattern &&
                     (spec.trigger.strength == 0.0 || norm_linf(spec.trigger.tau) == 0.0);

  if (n_poison > 0 && !inert) {
    std::vector<int> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    for (size_t i = 0; i < n_poison; ++i) {
      const int j = idx[i];
      out.poisoned[j] = 1;
      out.stamped[j] = stamp_image(clean.images[j], spec.trigger);
    }
  }
  return out;
}

Tensor forward_diffuse_backdoor(const Tensor& y, const Tensor& r, int t,
                                const Tensor& eps, const NoiseSchedule& sched) {
  require(t >= 1 && t <= sched.T, "forward_diffuse_backdoor: t out of range");
  require(y.same_shape(r) && y.same_shape(eps), "forward_diffuse_backdoor: shape mismatch");
  Tensor xt = y;
  xt *= sched.alpha_hat[t];
  xt = axpy(xt, sched.rho_hat[t], r);
  return axpy(xt, sched.beta_hat[t], eps);
}

double backdoor_loss(const Model& model, const Tensor& y, const Tensor& r, int t,
                     const Tensor& eps, const NoiseSchedule& sched, ModelParams* grads,
                     double* kink_margin) {
  const double kappa = shortcut_coefficient(sched, t);
  const Tensor xt = forward_diffuse_backdoor(y, r, t, eps, sched);
  const Tensor target = axpy(eps, -kappa, r);
  Tape tape;
  const Tensor out = model_forward(model, xt, time_arg(model, t), tape);
  if (kink_margin) *kink_margin = std::min(*kink_margin, tape.kink_margin);
  const double n = static_cast<double>(out.size());
  double loss = 0.0;
  for (size_t i = 0; i < out.size(); ++i) {
    const double d = target[i] - out[i];
    loss += d * d;
  }
  loss /= n;
  if (grads) {
    Tensor upstream(out.shape());
    for (size_t i = 0; i < out.size(); ++i) upstream[i] = 2.0 * (out[i] - target[i]) / n;
    Tensor input_grad;
    model_backward(model, tape, upstream, *grads, input_grad);
  }
  require(std::isfinite(loss), "backdoor_loss: non-finite loss");
  return loss;
}

double combined_loss(const Model& model, const Tensor& x, bool is_poisoned,
                     const Tensor& r, const Tensor& y, int t, const Tensor& eps,
                     const NoiseSchedule& sched, double eta_c, double eta_p,
                     ModelParams* grads, double* kink_margin) {
  require(eta_c >= 0.0 && eta_p >= 0.0 && (eta_c > 0.0 || eta_p > 0.0),
          "combined_loss: weights must be >= 0 and not both 0");
  double loss = 0.0;
  // scale the upstream through a temporary gradient container per term
  auto add_weighted = [&](double weight, bool backdoor_term) {
    if (weight == 0.0) return;
    if (!grads) {
      loss += weight * (backdoor_term
                            ? backdoor_loss(model, y, r, t, eps, sched, nullptr, kink_margin)
                            : clean_loss(model, x, t, eps, sched, nullptr, kink_margin));
      return;
    }
    ModelParams part = grads->like_zeros();
    const double l = backdoor_term
                         ? backdoor_loss(model, y, r, t, eps, sched, &part, kink_margin)
                         : clean_loss(model, x, t, eps, sched, &part, kink_margin);
    loss += weight * l;
    for (size_t i = 0; i < grads->count(); ++i) {
      Tensor& dst = grads->tensors[i];
      const Tensor& src = part.tensors[i];
      for (size_t k = 0; k < dst.size(); ++k) dst[k] += weight * src[k];
    }
  };
  add_weighted(eta_c, false);
  if (is_poisoned) add_weighted(eta_p, true);
  return loss;
}

void save_trigger(const std::string& path, const Trigger& trig, const TriggerFileMeta& meta) {
  ModelParams p;
  p.names.push_back("tau");
  p.tensors.push_back(trig.tau);
  if (trig.kind == TriggerKind::kMaskedPattern) {
    p.names.push_back("mask");
    p.tensors.push_back(trig.mask);
    p.names.push_back("pattern");
    p.tensors.push_back(trig.pattern);
  }
  save_checkpoint(path, p);
  json side;
  side["kind"] = trigger_kind_name(trig.kind);
  side["strength"] = trig.strength;
  side["xi"] = meta.xi;
  side["gamma_budget"] = meta.gamma_budget;
  side["seed"] = meta.seed;
  side["guide_checksum"] = meta.guide_checksum;
  std::ofstream os(path + ".json");
  require(os.good(), "save_trigger: cannot write sidecar");
  os << side.dump(2) << "\n";
}

Trigger load_trigger(const std::string& path, TriggerFileMeta* meta) {
  ModelParams p = load_checkpoint(path);
  std::ifstream is(path + ".json");
  require(is.good(), "load_trigger: missing sidecar for '" + path + "'");
  json side = json::parse(is);
  Trigger t;
  t.kind = trigger_kind_from_name(side.at("kind").get<std::string>());
  t.strength = side.at("strength").get<double>();
  t.tau = p.find("tau");
  if (t.kind == TriggerKind::kMaskedPattern) {
    t.mask = p.find("mask");
    t.pattern = p.find("pattern");
  }
  if (meta) {
    meta->xi = side.value("xi", 0.0);
    meta->gamma_budget = side.value("gamma_budget", 0.0);
    meta->seed = side.value("seed", 0ULL);
    meta->guide_checksum = side.value("guide_checksum", "");
  }
  return t;
}

}  // namespace uibd
