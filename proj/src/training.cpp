#include "uibd/training.hpp"

#include <cmath>

#include "uibd/common.hpp"

namespace uibd {

namespace {

void check_image_range(const std::vector<Tensor>& images) {
  for (const Tensor& im : images)
    for (size_t i = 0; i < im.size(); ++i)
      require(im[i] >= -1.0 && im[i] <= 1.0, "train: images must lie in [-1, 1]");
}

}  // namespace

TrainCurves train_denoiser(Model& model, const PoisonedDataset& data,
                           const NoiseSchedule& sched, const TrainConfig& cfg, Rng& rng) {
  require(!data.images.empty(), "train: dataset must be non-empty");
  require(cfg.epochs >= 0 && cfg.batch >= 1, "train: bad epoch/batch config");
  check_image_range(data.images);

  const size_t n = data.images.size();
  Optimizer opt(cfg.opt);
  TrainCurves curves;
  ModelParams grads = model.params.like_zeros();
  ModelParams part = model.params.like_zeros();  // reused weighted-term buffer

  double initial_loss = 0.0;
  int diverged_epochs = 0;

  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);

  // Accumulates weight * dL into grads, reusing `part` when weight != 1.
  auto add_scaled = [&](double weight, auto&& loss_fn) -> double {
    if (weight == 0.0) return 0.0;
    if (weight == 1.0) return loss_fn(&grads);
    part.zero();
    const double l = loss_fn(&part);
    for (size_t i = 0; i < grads.count(); ++i) {
      Tensor& dst = grads.tensors[i];
      const Tensor& src = part.tensors[i];
      for (size_t k = 0; k < dst.size(); ++k) dst[k] += weight * src[k];
    }
    return l;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_total = 0.0, epoch_clean = 0.0, epoch_backdoor = 0.0;
    size_t seen = 0, poisoned_seen = 0;

    for (size_t start = 0; start < n; start += cfg.batch) {
      const size_t stop = std::min(n, start + cfg.batch);
      grads.zero();
      double batch_loss = 0.0;
      for (size_t bi = start; bi < stop; ++bi) {
        const int i = order[bi];
        const bool pois = data.poisoned[i] != 0;
        // one uniform draw mapped onto [1,T] or [2,T]: identical rng
        // consumption on both branches
        const double u = rng.uniform();
        const int t = pois ? 2 + static_cast<int>(u * (sched.T - 1))
                           : 1 + static_cast<int>(u * sched.T);
        const Tensor eps = gaussian_sample(data.images[i].shape(), rng);
        const double clean_part = add_scaled(data.eta_c, [&](ModelParams* g) {
          return clean_loss(model, data.images[i], t, eps, sched, g);
        });
        double backdoor_part = 0.0;
        if (pois) {
          backdoor_part = add_scaled(data.eta_p, [&](ModelParams* g) {
            return backdoor_loss(model, data.target, data.stamped[i], t, eps, sched, g);
          });
          ++poisoned_seen;
        }
        batch_loss += data.eta_c * clean_part + data.eta_p * backdoor_part;
        epoch_clean += clean_part;
        epoch_backdoor += backdoor_part;
        ++seen;
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grads.tensors)
        for (size_t k = 0; k < g.size(); ++k) g[k] *= inv;
      opt.step(model.params, grads);
      epoch_total += batch_loss;
    }

    const double mean_total = epoch_total / static_cast<double>(seen);
    curves.total.push_back(mean_total);
    curves.clean.push_back(epoch_clean / static_cast<double>(seen));
    curves.backdoor.push_back(
        poisoned_seen ? epoch_backdoor / static_cast<double>(poisoned_seen) : 0.0);

    if (epoch == 0) initial_loss = mean_total;
    if (epoch > 0 && mean_total > cfg.divergence_factor * initial_loss) {
      if (++diverged_epochs >= cfg.divergence_patience)
        fail("train: loss diverged (epoch mean " + std::to_string(mean_total) +
             " vs initial " + std::to_string(initial_loss) + " for " +
             std::to_string(diverged_epochs) + " consecutive epochs)");
    } else {
      diverged_epochs = 0;
    }
  }
  return curves;
}

TrainCurves train_clean(Model& model, const LabeledDataset& data,
                        const NoiseSchedule& sched, const TrainConfig& cfg, Rng& rng) {
  PoisonedDataset wrapped;
  wrapped.images = data.images;
  wrapped.poisoned.assign(data.images.size(), 0);
  wrapped.stamped.resize(data.images.size());
  wrapped.eta_c = 1.0;
  wrapped.eta_p = 0.0;
  wrapped.seed = rng.seed();
  return train_denoiser(model, wrapped, sched, cfg, rng);
}

}  // namespace uibd
