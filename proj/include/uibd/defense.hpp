#ifndef UIBD_DEFENSE_HPP_
#define UIBD_DEFENSE_HPP_

#include <vector>

#include "uibd/backdoor.hpp"
#include "uibd/optim.hpp"
#include "uibd/training.hpp"

namespace uibd {

struct InversionConfig {
  int iterations = 200;
  double lr = 0.05;
  double lambda_reg = 0.5;   // l1 sparsity weight
  int probe_batch = 8;       // probe noises per step
  int timestep = -1;         // -1: use T
};

// Optimizes a free stamp tau_hat so the model's terminal-step response is
// self-consistent with the shortcut it would encode for that stamp:
//   min E_eps || eps_theta(eps + tau_hat, t) - (eps - kappa(t) tau_hat) ||^2
//       + lambda * mean|tau_hat|.
// A backdoored model admits a solution near its training stamp; a clean one
// drives tau_hat to ~0.
Trigger invert_trigger(const Model& model, const NoiseSchedule& sched,
                       const InversionConfig& cfg, Rng& rng);

// Samples n outputs from x_T = eps + stamp(tau_hat) through the model's
// native sampler and scores them against the target.
double inverted_trigger_asr(const Model& model, const NoiseSchedule& sched,
                            const Trigger& tau_hat, const Tensor& target, int n_samples,
                            double delta_asr, int ddim_substeps, Rng& rng);

struct DetectionConfig {
  int m_samples = 16;
  double threshold = 0.5;
  int ddim_substeps = 20;
};

struct DetectionVerdict {
  bool is_backdoored = false;
  double score = 0.0;  // triggered-collapse minus clean-collapse pairwise ssim
  double threshold = 0.0;
  double triggered_pairwise_ssim = 0.0;
  double clean_pairwise_ssim = 0.0;
};

DetectionVerdict detect_backdoor(const Model& model, const NoiseSchedule& sched,
                                 const Trigger& tau_hat, const DetectionConfig& cfg,
                                 Rng& rng);

struct RemovalConfig {
  int epochs = 5;
  int batch = 16;
  OptConfig opt = OptConfig::adam(1e-3);
  double mu = 1.0;  // shift-nullification weight
};

// Fine-tunes on clean data plus a nullification term pinning the triggered
// response to the frozen model's clean response.
void removal_finetune(Model& model, const Trigger& tau_hat,
                      const std::vector<Tensor>& clean_subset, const NoiseSchedule& sched,
                      const RemovalConfig& cfg, Rng& rng);

// Per-timestep relative response displacement
//   E || eps_theta(x_t + stamp, t) - eps_theta(x_t, t) ||_2 / ||stamp||_2
// over clean forward-diffused x_t; one row per strided timestep.
struct ShiftProfile {
  std::vector<int> t;
  std::vector<double> shift;
};

ShiftProfile shift_profile(const Model& model, const NoiseSchedule& sched,
                           const Trigger& trigger, const std::vector<Tensor>& images,
                           int n_draws, Rng& rng);

void write_shift_profile_csv(const ShiftProfile& prof, const std::string& path);

}  // namespace uibd

#endif  // UIBD_DEFENSE_HPP_
