#ifndef UIBD_BACKDOOR_HPP_
#define UIBD_BACKDOOR_HPP_

#include <string>
#include <vector>

#include "uibd/dataset.hpp"
#include "uibd/diffusion.hpp"
#include "uibd/nn.hpp"
#include "uibd/schedule.hpp"

namespace uibd {

enum class TriggerKind { kGenerated, kMaskedPattern, kInverted };

std::string trigger_kind_name(TriggerKind k);
TriggerKind trigger_kind_from_name(const std::string& name);

// A backdoor trigger. For additive kinds tau is the perturbation and
// `strength` the injection multiplier; for masked patterns tau caches the
// activation stamp M*g while mask/pattern hold the Eq-style blend inputs.
struct Trigger {
  TriggerKind kind = TriggerKind::kGenerated;
  Tensor tau;
  double strength = 0.1;
  Tensor mask;     // masked-pattern only, binary
  Tensor pattern;  // masked-pattern only
};

// r = x + strength * tau (no clamping; the linear algebra of the shortcut
// derivation stays exact).
Tensor inject_trigger_additive(const Tensor& x, const Trigger& trig);

// r = M * g + (1 - M) * x.
Tensor inject_trigger_masked(const Tensor& x, const Tensor& mask, const Tensor& g);

// Dispatch on kind.
Tensor stamp_image(const Tensor& x, const Trigger& trig);

// What gets added to sampled noise to fire the backdoor: strength * tau for
// additive kinds, M * g for masked patterns.
Tensor activation_stamp(const Trigger& trig);

// Builds the masked gray-box baseline trigger: `box` x `box` square of value
// `value` at the top-left corner with a 1px margin.
Trigger make_box_trigger(int image_size, int box, double value);

struct PoisonSpec {
  double rate = 0.1;
  Tensor target;
  Trigger trigger;
  double eta_c = 1.0;  // weight of the clean term (all samples)
  double eta_p = 1.0;  // weight of the shortcut term (poisoned samples)
};

struct PoisonedDataset {
  std::vector<Tensor> images;
  std::vector<char> poisoned;       // per-sample flag
  std::vector<Tensor> stamped;      // r, aligned with images, empty when clean
  Tensor target;                    // y
  double eta_c = 1.0, eta_p = 1.0;
  uint64_t seed = 0;
  std::vector<int> poisoned_indices() const;
};

// Selects ceil(rate*N) indices without replacement and stamps them.
PoisonedDataset poison_dataset(const LabeledDataset& clean, const PoisonSpec& spec, Rng& rng);

// x'_t = alpha_hat(t) y + rho_hat(t) r + beta_hat(t) eps.
Tensor forward_diffuse_backdoor(const Tensor& y, const Tensor& r, int t,
                                const Tensor& eps, const NoiseSchedule& sched);

// || eps - kappa(t) r - eps_theta(x'_t(y, r, eps), t) ||^2 / numel, with
// kappa from shortcut_coefficient. Defined for t in [2, T].
double backdoor_loss(const Model& model, const Tensor& y, const Tensor& r, int t,
                     const Tensor& eps, const NoiseSchedule& sched, ModelParams* grads,
                     double* kink_margin = nullptr);

// eta_c L_c(x) for clean samples; eta_c L_c(x) + eta_p L_p(y, r) for
// poisoned ones, sharing (t, eps) across both terms.
double combined_loss(const Model& model, const Tensor& x, bool is_poisoned,
                     const Tensor& r, const Tensor& y, int t, const Tensor& eps,
                     const NoiseSchedule& sched, double eta_c, double eta_p,
                     ModelParams* grads, double* kink_margin = nullptr);

// Trigger file IO: tensor container + json sidecar (kind, strength, budgets,
// seed, guide checksum).
struct TriggerFileMeta {
  double xi = 0.0, gamma_budget = 0.0;
  uint64_t seed = 0;
  std::string guide_checksum;
};
void save_trigger(const std::string& path, const Trigger& trig, const TriggerFileMeta& meta);
Trigger load_trigger(const std::string& path, TriggerFileMeta* meta = nullptr);

}  // namespace uibd

#endif  // UIBD_BACKDOOR_HPP_
