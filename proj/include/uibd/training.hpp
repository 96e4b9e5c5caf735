#ifndef UIBD_TRAINING_HPP_
#define UIBD_TRAINING_HPP_

#include "uibd/backdoor.hpp"
#include "uibd/optim.hpp"

namespace uibd {

struct TrainConfig {
  int epochs = 40;
  int batch = 16;
  OptConfig opt = OptConfig::adam(2e-3);
  double divergence_factor = 10.0;
  int divergence_patience = 3;
};

struct TrainCurves {
  std::vector<double> total;     // per-epoch mean combined loss
  std::vector<double> clean;     // per-epoch mean clean term
  std::vector<double> backdoor;  // per-epoch mean shortcut term (poisoned samples)
};

// Minibatch loop over (x, t, eps) draws, stepping on the combined loss.
// Clean samples draw t in [1, T]; poisoned samples map the same uniform draw
// onto [2, T], so the rng stream is identical whether or not poisoning is
// active (rate 0 reproduces clean training bitwise).
TrainCurves train_denoiser(Model& model, const PoisonedDataset& data,
                           const NoiseSchedule& sched, const TrainConfig& cfg, Rng& rng);

// Clean pipeline entry: wraps the dataset with no poisoned samples.
TrainCurves train_clean(Model& model, const LabeledDataset& data,
                        const NoiseSchedule& sched, const TrainConfig& cfg, Rng& rng);

}  // namespace uibd

#endif  // UIBD_TRAINING_HPP_
