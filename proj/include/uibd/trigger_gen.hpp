#ifndef UIBD_TRIGGER_GEN_HPP_
#define UIBD_TRIGGER_GEN_HPP_

#include <optional>
#include <string>
#include <vector>

#include "uibd/backdoor.hpp"
#include "uibd/dataset.hpp"
#include "uibd/nn.hpp"
#include "uibd/optim.hpp"
#include "uibd/rng.hpp"

namespace uibd {

// ---- guide classifier ----

// 3 conv blocks + dense head over the glyph classes.
Model make_classifier(int channels, int image_size, int n_classes);

struct ClassifierConfig {
  int epochs = 40;
  int batch = 16;
  OptConfig opt = OptConfig::adam(1e-3);
  double holdout_fraction = 0.2;
  double min_accuracy_factor = 1.5;  // times chance, else the guide is unusable
};

struct ClassifierReport {
  double holdout_accuracy = 0.0;
  double train_accuracy = 0.0;
};

ClassifierReport train_classifier(Model& clf, const LabeledDataset& data,
                                  const ClassifierConfig& cfg, Rng& rng);

double softmax_cross_entropy(const Tensor& logits, int label, Tensor* dlogits);
int argmax_class(const Tensor& logits);
int classify(const Model& clf, const Tensor& img);

// ---- differentiable warp ----

struct WarpTape {
  Tensor x, f;
  // distance of sample points from bilinear kinks (integer grid lines) and
  // from the clamped border; used to skip fd checks at nondifferentiable spots
  double margin = 0.0;
  bool valid = false;
};

// Bilinear resample out(p) = x(p + f(p)) with border clamping. f has shape
// (2, H, W): channel 0 = dx, channel 1 = dy in pixel units.
Tensor warp(const Tensor& x, const Tensor& f, WarpTape* tape = nullptr);
void warp_backward(const WarpTape& tape, const Tensor& upstream, Tensor* dx, Tensor* df);

// ---- budgets and projections ----

struct UapBudget {
  double xi = 0.4;           // additive linf budget
  double gamma_budget = 1.0; // flow budget
  double theta = 0.7;        // target fooling rate
};

// sqrt of the summed 4x4-maxpooled squared flow magnitudes.
double flow_statistic(const Tensor& f);

// Scales so the statistic is <= budget; identity when already within it.
Tensor project_flow(const Tensor& f_raw, double gamma_budget);

// Scales to linf == xi exactly; errors on an identically zero input.
Tensor project_trigger(const Tensor& tau_raw, double xi);

// ---- generator ----

// Shared encoder/bottleneck/decoder trunk with a flow head (2 channels) and
// a tanh-bounded trigger head (image channels).
struct GeneratorNet {
  Model trunk;
  Model flow_head;
  Model trig_head;
  int z_dim = 64;
  int image_size = 16;

  GeneratorNet(int image_channels, int image_size, int z_dim);
  void init(Rng& rng);

  // z (z_dim) -> reshaped/tiled encoder input.
  Tensor broadcast_z(const Tensor& z) const;
};

struct GeneratorForward {
  Tensor f_raw, tau_raw;
  Tape trunk_tape, flow_tape, trig_tape;
};

void generator_forward(const GeneratorNet& gen, const Tensor& z, GeneratorForward* fwd);
// Accumulates parameter grads for trunk + heads from head-output gradients.
void generator_backward(const GeneratorNet& gen, const GeneratorForward& fwd,
                        const Tensor& df_raw, const Tensor& dtau_raw,
                        ModelParams* trunk_g, ModelParams* flow_g, ModelParams* trig_g);

// ---- losses / training ----

// L_G = -mean cross-entropy of C(warp(x, f) + tau) against the clean
// pseudo-labels argmax C(x). Returns gradients wrt f and tau when requested,
// and the min kink margin across classifier and warp evaluations.
double generator_loss(const Model& clf, const std::vector<Tensor>& batch,
                      const Tensor& f, const Tensor& tau, Tensor* df, Tensor* dtau,
                      double* kink_margin = nullptr);

struct TriggerGenConfig {
  int epochs = 15;        // M
  int n_images = 48;      // n, per epoch
  UapBudget budget;
  OptConfig opt = OptConfig::adam(3e-4);
  double strength = 0.1;  // recorded on the emitted trigger
};

struct TriggerGenResult {
  Trigger trigger;
  Tensor flow;               // final projected flow field
  double fooling_train = 0.0;
  double fooling_holdout = 0.0;
  bool met_theta = true;     // warning flag, not fatal
  std::vector<double> loss_curve;
};

TriggerGenResult train_trigger_generator(const Model& clf, const LabeledDataset& train,
                                         const LabeledDataset& holdout,
                                         const TriggerGenConfig& cfg, Rng& rng);

// Original iterative-linearization baseline: accumulates minimal
// boundary-crossing steps and clips to the linf ball of radius xi.
struct DeepFoolConfig {
  double xi = 0.4;
  int max_inner_iters = 50;
  double overshoot = 0.02;
  int max_passes = 10;
  double theta = 0.7;
  double strength = 0.1;
};

struct DeepFoolResult {
  Trigger trigger;
  double fooling = 0.0;
  int skipped = 0;  // images whose inner loop did not converge
};

DeepFoolResult deepfool_uap(const Model& clf, const std::vector<Tensor>& images,
                            const DeepFoolConfig& cfg);

// Single-image minimal boundary-crossing perturbation (one DeepFool inner
// run from v = 0), exposed for the linear-classifier oracle.
Tensor deepfool_step(const Model& clf, const Tensor& x, int max_iters, double overshoot,
                     bool* converged);

// Fraction of images whose prediction changes under (optional warp, then
// additive tau).
double fooling_rate(const Model& clf, const std::vector<Tensor>& images,
                    const Tensor& tau, const Tensor* f = nullptr);

}  // namespace uibd

#endif  // UIBD_TRIGGER_GEN_HPP_
