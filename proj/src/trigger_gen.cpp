#include "uibd/trigger_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uibd/common.hpp"

namespace uibd {

// ---- classifier ----

Model make_classifier(int channels, int image_size, int n_classes) {
  require(image_size % 8 == 0, "make_classifier: image size must be divisible by 8");
  const int s = image_size / 8;
  std::vector<LayerSpec> spec;
  spec.push_back(LayerSpec::conv2d(channels, 12, 3, 2, 1));
  spec.push_back(LayerSpec::relu());
  spec.push_back(LayerSpec::conv2d(12, 24, 3, 2, 1));
  spec.push_back(LayerSpec::relu());
  spec.push_back(LayerSpec::conv2d(24, 32, 3, 2, 1));
  spec.push_back(LayerSpec::relu());
  spec.push_back(LayerSpec::dense(32 * s * s, n_classes));
  return Model(std::move(spec), {channels, image_size, image_size});
}

double softmax_cross_entropy(const Tensor& logits, int label, Tensor* dlogits) {
  require(label >= 0 && label < static_cast<int>(logits.size()),
          "softmax_cross_entropy: label out of range");
  double mx = logits[0];
  for (size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
  const double logz = std::log(z) + mx;
  const double loss = logz - logits[label];
  if (dlogits) {
    *dlogits = Tensor(logits.shape());
    for (size_t i = 0; i < logits.size(); ++i)
      (*dlogits)[i] = std::exp(logits[i] - logz) - (static_cast<int>(i) == label ? 1.0 : 0.0);
  }
  return loss;
}

int argmax_class(const Tensor& logits) {
  int best = 0;
  for (size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  return best;
}

int classify(const Model& clf, const Tensor& img) {
  return argmax_class(model_forward(clf, img, -1));
}

ClassifierReport train_classifier(Model& clf, const LabeledDataset& data,
                                  const ClassifierConfig& cfg, Rng& rng) {
  int n_classes = 0;
  for (int l : data.labels) n_classes = std::max(n_classes, l + 1);
  {
    std::vector<int> seen(n_classes, 0);
    for (int l : data.labels) seen[l] = 1;
    int distinct = 0;
    for (int s : seen) distinct += s;
    require(distinct >= 2, "train_classifier: need at least 2 classes");
  }

  LabeledDataset train, holdout;
  split_dataset(data, cfg.holdout_fraction, &train, &holdout);

  Optimizer opt(cfg.opt);
  ModelParams grads = clf.params.like_zeros();
  std::vector<int> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += cfg.batch) {
      const size_t stop = std::min(order.size(), start + cfg.batch);
      grads.zero();
      for (size_t bi = start; bi < stop; ++bi) {
        const int i = order[bi];
        Tape tape;
        const Tensor logits = model_forward(clf, train.images[i], -1, tape);
        Tensor dlogits;
        softmax_cross_entropy(logits, train.labels[i], &dlogits);
        dlogits *= 1.0 / static_cast<double>(stop - start);
        Tensor input_grad;
        model_backward(clf, tape, dlogits, grads, input_grad);
      }
      opt.step(clf.params, grads);
    }
  }

  auto accuracy = [&](const LabeledDataset& ds) {
    int hits = 0;
    for (size_t i = 0; i < ds.size(); ++i)
      if (classify(clf, ds.images[i]) == ds.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ds.size());
  };
  ClassifierReport rep;
  rep.train_accuracy = accuracy(train);
  rep.holdout_accuracy = accuracy(holdout);
  const double chance = 1.0 / static_cast<double>(n_classes);
  require(rep.holdout_accuracy >= cfg.min_accuracy_factor * chance,
          "train_classifier: held-out accuracy " + std::to_string(rep.holdout_accuracy) +
              " below " + std::to_string(cfg.min_accuracy_factor) +
              "x chance; the guide classifier is unusable");
  return rep;
}

// ---- warp ----

Tensor warp(const Tensor& x, const Tensor& f, WarpTape* tape) {
  require(x.rank() == 3, "warp: image must be (C,H,W)");
  require(f.rank() == 3 && f.dim(0) == 2 && f.dim(1) == x.dim(1) && f.dim(2) == x.dim(2),
          "warp: flow must be (2,H,W) matching the image");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor out({C, H, W});
  double margin = std::numeric_limits<double>::infinity();

  auto axis_margin = [&](double raw, int limit) {
    if (raw < 0.0) return -raw;
    if (raw > limit) return raw - limit;
    const double fr = raw - std::floor(raw);
    return std::min(fr, 1.0 - fr);
  };

  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      const double raw_xs = xx + f.at(0, y, xx);
      const double raw_ys = y + f.at(1, y, xx);
      margin = std::min(margin, axis_margin(raw_xs, W - 1));
      margin = std::min(margin, axis_margin(raw_ys, H - 1));
      const double xs = std::clamp(raw_xs, 0.0, static_cast<double>(W - 1));
      const double ys = std::clamp(raw_ys, 0.0, static_cast<double>(H - 1));
      const int x0 = static_cast<int>(std::floor(xs));
      const int y0 = static_cast<int>(std::floor(ys));
      const int x1 = std::min(x0 + 1, W - 1);
      const int y1 = std::min(y0 + 1, H - 1);
      const double fx = xs - x0, fy = ys - y0;
      for (int c = 0; c < C; ++c) {
        const double v00 = x.at(c, y0, x0), v01 = x.at(c, y0, x1);
        const double v10 = x.at(c, y1, x0), v11 = x.at(c, y1, x1);
        out.at(c, y, xx) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                           fy * ((1 - fx) * v10 + fx * v11);
      }
    }
  }
  if (tape) {
    tape->x = x;
    tape->f = f;
    tape->margin = margin;
    tape->valid = true;
  }
  return out;
}

void warp_backward(const WarpTape& tape, const Tensor& upstream, Tensor* dx, Tensor* df) {
  require(tape.valid, "warp_backward: tape not produced by warp");
  const Tensor& x = tape.x;
  const Tensor& f = tape.f;
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(upstream.same_shape(x), "warp_backward: upstream shape mismatch");
  if (dx) *dx = Tensor({C, H, W});
  if (df) *df = Tensor({2, H, W});

  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      const double raw_xs = xx + f.at(0, y, xx);
      const double raw_ys = y + f.at(1, y, xx);
      const bool clamped_x = raw_xs < 0.0 || raw_xs > W - 1;
      const bool clamped_y = raw_ys < 0.0 || raw_ys > H - 1;
      const double xs = std::clamp(raw_xs, 0.0, static_cast<double>(W - 1));
      const double ys = std::clamp(raw_ys, 0.0, static_cast<double>(H - 1));
      const int x0 = static_cast<int>(std::floor(xs));
      const int y0 = static_cast<int>(std::floor(ys));
      const int x1 = std::min(x0 + 1, W - 1);
      const int y1 = std::min(y0 + 1, H - 1);
      const double fx = xs - x0, fy = ys - y0;
      double gx = 0.0, gy = 0.0;
      for (int c = 0; c < C; ++c) {
        const double g = upstream.at(c, y, xx);
        const double v00 = x.at(c, y0, x0), v01 = x.at(c, y0, x1);
        const double v10 = x.at(c, y1, x0), v11 = x.at(c, y1, x1);
        if (dx) {
          dx->at(c, y0, x0) += g * (1 - fy) * (1 - fx);
          dx->at(c, y0, x1) += g * (1 - fy) * fx;
          dx->at(c, y1, x0) += g * fy * (1 - fx);
          dx->at(c, y1, x1) += g * fy * fx;
        }
        gx += g * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
        gy += g * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
      }
      if (df) {
        df->at(0, y, xx) = clamped_x ? 0.0 : gx;
        df->at(1, y, xx) = clamped_y ? 0.0 : gy;
      }
    }
  }
}

// ---- budgets / projections ----

double flow_statistic(const Tensor& f) {
  require(f.rank() == 3 && f.dim(0) == 2, "flow_statistic: expects a (2,H,W) flow");
  const int H = f.dim(1), W = f.dim(2);
  const int PH = (H + 3) / 4, PW = (W + 3) / 4;
  double total = 0.0;
  for (int py = 0; py < PH; ++py) {
    for (int px = 0; px < PW; ++px) {
      double best = 0.0;
      for (int y = py * 4; y < std::min(H, py * 4 + 4); ++y)
        for (int x = px * 4; x < std::min(W, px * 4 + 4); ++x) {
          const double dx = f.at(0, y, x), dy = f.at(1, y, x);
          best = std::max(best, dx * dx + dy * dy);
        }
      total += best;
    }
  }
  return std::sqrt(total);
}

Tensor project_flow(const Tensor& f_raw, double gamma_budget) {
  require(gamma_budget > 0.0, "project_flow: budget must be positive");
  const double stat = flow_statistic(f_raw);
  if (stat <= gamma_budget) return f_raw;
  Tensor f = f_raw;
  f *= gamma_budget / stat;
  return f;
}

Tensor project_trigger(const Tensor& tau_raw, double xi) {
  require(xi > 0.0, "project_trigger: xi must be positive");
  const double m = norm_linf(tau_raw);
  require(m > 0.0, "project_trigger: zero trigger has no direction");
  Tensor tau = tau_raw;
  tau *= xi / m;
  return tau;
}

// ---- generator ----

namespace {

std::vector<LayerSpec> generator_trunk_spec() {
  return {
      LayerSpec::conv2d(4, 16, 3, 1, 1),
      LayerSpec::relu(),
      LayerSpec::conv2d(16, 32, 4, 2, 1),  // encoder downsample
      LayerSpec::relu(),
      LayerSpec::residual({LayerSpec::conv2d(32, 32, 3, 1, 1), LayerSpec::relu(),
                           LayerSpec::conv2d(32, 32, 3, 1, 1)}),
      LayerSpec::relu(),
      LayerSpec::residual({LayerSpec::conv2d(32, 32, 3, 1, 1), LayerSpec::relu(),
                           LayerSpec::conv2d(32, 32, 3, 1, 1)}),
      LayerSpec::relu(),
      LayerSpec::tconv2d(32, 16, 4, 2, 1),  // decoder upsample
      LayerSpec::relu(),
  };
}

}  // namespace

GeneratorNet::GeneratorNet(int image_channels, int image_size_, int z_dim_)
    : trunk(generator_trunk_spec(), {4, image_size_, image_size_}),
      flow_head({LayerSpec::conv2d(16, 2, 3, 1, 1)}, {16, image_size_, image_size_}),
      trig_head({LayerSpec::conv2d(16, image_channels, 3, 1, 1), LayerSpec::tanh_act()},
                {16, image_size_, image_size_}),
      z_dim(z_dim_),
      image_size(image_size_) {
  require(z_dim == 64, "GeneratorNet: z dim is fixed at 64 (reshaped to 4x4x4)");
  require(image_size % 4 == 0, "GeneratorNet: image size must be divisible by 4");
}

void GeneratorNet::init(Rng& rng) {
  trunk.init_params(rng);
  flow_head.init_params(rng);
  trig_head.init_params(rng);
  // soften the heads so tanh starts in its linear zone and flows start small
  for (auto& t : flow_head.params.tensors)
    for (size_t i = 0; i < t.size(); ++i) t[i] *= 0.2;
  for (auto& t : trig_head.params.tensors)
    for (size_t i = 0; i < t.size(); ++i) t[i] *= 0.2;
}

Tensor GeneratorNet::broadcast_z(const Tensor& z) const {
  require(static_cast<int>(z.size()) == z_dim, "broadcast_z: z size mismatch");
  const int tile = image_size / 4;
  Tensor in({4, image_size, image_size});
  for (int c = 0; c < 4; ++c)
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x)
        in.at(c, y, x) = z[(static_cast<size_t>(c) * 4 + y / tile) * 4 + x / tile];
  return in;
}

void generator_forward(const GeneratorNet& gen, const Tensor& z, GeneratorForward* fwd) {
  const Tensor in = gen.broadcast_z(z);
  const Tensor feat = model_forward(gen.trunk, in, -1, fwd->trunk_tape);
  fwd->f_raw = model_forward(gen.flow_head, feat, -1, fwd->flow_tape);
  fwd->tau_raw = model_forward(gen.trig_head, feat, -1, fwd->trig_tape);
}

void generator_backward(const GeneratorNet& gen, const GeneratorForward& fwd,
                        const Tensor& df_raw, const Tensor& dtau_raw,
                        ModelParams* trunk_g, ModelParams* flow_g, ModelParams* trig_g) {
  Tensor gfeat_flow, gfeat_trig;
  model_backward(gen.flow_head, fwd.flow_tape, df_raw, *flow_g, gfeat_flow);
  model_backward(gen.trig_head, fwd.trig_tape, dtau_raw, *trig_g, gfeat_trig);
  gfeat_flow += gfeat_trig;
  Tensor gin;
  model_backward(gen.trunk, fwd.trunk_tape, gfeat_flow, *trunk_g, gin);
}

// ---- losses / training ----

double generator_loss(const Model& clf, const std::vector<Tensor>& batch,
                      const Tensor& f, const Tensor& tau, Tensor* df, Tensor* dtau,
                      double* kink_margin) {
  require(!batch.empty(), "generator_loss: empty batch");
  const double invb = 1.0 / static_cast<double>(batch.size());
  if (df) *df = Tensor(f.shape());
  if (dtau) *dtau = Tensor(tau.shape());
  ModelParams scratch = clf.params.like_zeros();  // guide stays frozen
  double loss = 0.0;
  for (const Tensor& x : batch) {
    const int label = classify(clf, x);
    WarpTape wtape;
    const Tensor warped = warp(x, f, &wtape);
    Tensor input = warped;
    input += tau;
    Tape tape;
    const Tensor logits = model_forward(clf, input, -1, tape);
    if (kink_margin)
      *kink_margin = std::min({*kink_margin, tape.kink_margin, wtape.margin});
    Tensor dlogits;
    const double ce = softmax_cross_entropy(logits, label, &dlogits);
    loss -= invb * ce;
    if (df || dtau) {
      dlogits *= -invb;  // maximizing misclassification
      Tensor dinput;
      model_backward(clf, tape, dlogits, scratch, dinput);
      if (dtau) *dtau += dinput;
      if (df) {
        Tensor dfi;
        warp_backward(wtape, dinput, nullptr, &dfi);
        *df += dfi;
      }
    }
  }
  require(std::isfinite(loss), "generator_loss: non-finite loss");
  return loss;
}

TriggerGenResult train_trigger_generator(const Model& clf, const LabeledDataset& train,
                                         const LabeledDataset& holdout,
                                         const TriggerGenConfig& cfg, Rng& rng) {
  require(!train.images.empty(), "train_trigger_generator: empty image set");
  require(cfg.n_images <= static_cast<int>(train.size()),
          "train_trigger_generator: n exceeds the image set");
  GeneratorNet gen(train.images[0].dim(0), train.image_size, 64);
  gen.init(rng);
  Optimizer opt_trunk(cfg.opt), opt_flow(cfg.opt), opt_trig(cfg.opt);
  ModelParams g_trunk = gen.trunk.params.like_zeros();
  ModelParams g_flow = gen.flow_head.params.like_zeros();
  ModelParams g_trig = gen.trig_head.params.like_zeros();

  TriggerGenResult res;
  GeneratorForward fwd;
  // one latent draw for the whole run: the generator reparameterizes a
  // single universal perturbation rather than a distribution of them
  const Tensor z = gaussian_sample({gen.z_dim}, rng);
  for (int m = 0; m < cfg.epochs; ++m) {
    double epoch_loss = 0.0;
    for (int i = 0; i < cfg.n_images; ++i) {
      const int idx = rng.uniform_int(0, static_cast<int>(train.size()) - 1);
      generator_forward(gen, z, &fwd);

      const double stat = flow_statistic(fwd.f_raw);
      const double s_f = stat > cfg.budget.gamma_budget ? cfg.budget.gamma_budget / stat : 1.0;
      Tensor f = fwd.f_raw;
      f *= s_f;
      const Tensor tau = project_trigger(fwd.tau_raw, cfg.budget.xi);
      const double s_tau = cfg.budget.xi / norm_linf(fwd.tau_raw);

      Tensor df, dtau;
      epoch_loss += generator_loss(clf, {train.images[idx]}, f, tau, &df, &dtau);
      // projections backpropagate as constant scales
      df *= s_f;
      dtau *= s_tau;
      g_trunk.zero();
      g_flow.zero();
      g_trig.zero();
      generator_backward(gen, fwd, df, dtau, &g_trunk, &g_flow, &g_trig);
      opt_trunk.step(gen.trunk.params, g_trunk);
      opt_flow.step(gen.flow_head.params, g_flow);
      opt_trig.step(gen.trig_head.params, g_trig);
    }
    res.loss_curve.push_back(epoch_loss / cfg.n_images);
  }

  // Emit the trigger from the trained generator at the same latent.
  generator_forward(gen, z, &fwd);
  res.flow = project_flow(fwd.f_raw, cfg.budget.gamma_budget);
  res.trigger.kind = TriggerKind::kGenerated;
  res.trigger.tau = project_trigger(fwd.tau_raw, cfg.budget.xi);
  res.trigger.strength = cfg.strength;
  res.fooling_train = fooling_rate(clf, train.images, res.trigger.tau, &res.flow);
  res.fooling_holdout = holdout.images.empty()
                            ? 0.0
                            : fooling_rate(clf, holdout.images, res.trigger.tau, &res.flow);
  res.met_theta = res.fooling_holdout >= cfg.budget.theta;
  return res;
}

// ---- deepfool baseline ----

Tensor deepfool_step(const Model& clf, const Tensor& x, int max_iters, double overshoot,
                     bool* converged) {
  const int n_classes = clf.output_shape()[0];
  const int l0 = classify(clf, x);
  Tensor r_tot(x.shape());
  ModelParams scratch = clf.params.like_zeros();
  if (converged) *converged = false;

  for (int it = 0; it < max_iters; ++it) {
    Tensor point = axpy(x, 1.0 + overshoot, r_tot);
    Tape tape;
    const Tensor logits = model_forward(clf, point, -1, tape);
    if (argmax_class(logits) != l0) {
      if (converged) *converged = true;
      break;
    }
    // per-class input gradients
    std::vector<Tensor> grads(n_classes);
    for (int k = 0; k < n_classes; ++k) {
      Tensor onehot({n_classes});
      onehot[k] = 1.0;
      scratch.zero();
      model_backward(clf, tape, onehot, scratch, grads[k]);
    }
    double best_ratio = std::numeric_limits<double>::infinity();
    int best_k = -1;
    double best_fk = 0.0, best_w2 = 0.0;
    Tensor best_w;
    for (int k = 0; k < n_classes; ++k) {
      if (k == l0) continue;
      Tensor w = grads[k];
      w -= grads[l0];
      const double w2 = dot(w, w);
      if (w2 < 1e-20) continue;
      const double fk = logits[k] - logits[l0];
      const double ratio = std::fabs(fk) / std::sqrt(w2);
      if (ratio < best_ratio) {
        best_ratio = ratio;
        best_k = k;
        best_fk = fk;
        best_w2 = w2;
        best_w = std::move(w);
      }
    }
    if (best_k < 0) break;
    const double scale = (std::fabs(best_fk) + 1e-6) / best_w2;
    r_tot = axpy(r_tot, scale, best_w);
  }
  r_tot *= 1.0 + overshoot;
  return r_tot;
}

DeepFoolResult deepfool_uap(const Model& clf, const std::vector<Tensor>& images,
                            const DeepFoolConfig& cfg) {
  require(!images.empty(), "deepfool_uap: empty image set");
  DeepFoolResult res;
  Tensor v(images[0].shape());
  std::vector<int> labels(images.size());
  for (size_t i = 0; i < images.size(); ++i) labels[i] = classify(clf, images[i]);

  for (int pass = 0; pass < cfg.max_passes; ++pass) {
    for (size_t i = 0; i < images.size(); ++i) {
      const Tensor stamped = images[i] + v;
      if (classify(clf, stamped) != labels[i]) continue;
      bool converged = false;
      const Tensor dv = deepfool_step(clf, stamped, cfg.max_inner_iters, cfg.overshoot,
                                      &converged);
      if (!converged) {
        ++res.skipped;
        continue;
      }
      v += dv;
      for (size_t k = 0; k < v.size(); ++k) v[k] = std::clamp(v[k], -cfg.xi, cfg.xi);
    }
    res.fooling = fooling_rate(clf, images, v);
    if (res.fooling >= cfg.theta) break;
  }
  res.trigger.kind = TriggerKind::kGenerated;
  res.trigger.tau = v;
  res.trigger.strength = cfg.strength;
  return res;
}

double fooling_rate(const Model& clf, const std::vector<Tensor>& images,
                    const Tensor& tau, const Tensor* f) {
  require(!images.empty(), "fooling_rate: empty image set");
  int flipped = 0;
  for (const Tensor& x : images) {
    const int l0 = classify(clf, x);
    Tensor perturbed = f ? warp(x, *f) : x;
    perturbed += tau;
    if (classify(clf, perturbed) != l0) ++flipped;
  }
  return static_cast<double>(flipped) / static_cast<double>(images.size());
}

}  // namespace uibd
