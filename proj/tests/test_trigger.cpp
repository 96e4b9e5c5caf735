#include <cmath>

#include "doctest.h"
#include "uibd/dataset.hpp"
#include "uibd/gradcheck.hpp"
#include "uibd/trigger_gen.hpp"

using namespace uibd;

namespace {

// dataset + trained guide shared across the slow trigger tests
struct GuideFixture {
  LabeledDataset train, holdout;
  Model clf = make_classifier(1, 16, 10);

  GuideFixture() {
    Rng rng(80);
    const LabeledDataset all = synth_shapes_dataset(300, 16, rng);
    split_dataset(all, 0.2, &train, &holdout);
    Rng init(81);
    clf.init_params(init);
    ClassifierConfig cfg;
    cfg.epochs = 25;
    Rng trng(82);
    train_classifier(clf, all, cfg, trng);
  }
};

const GuideFixture& guide() {
  static GuideFixture fx;
  return fx;
}

}  // namespace

TEST_CASE("warp with zero flow is the identity") {
  Rng rng(83);
  const Tensor x = gaussian_sample({1, 8, 8}, rng);
  const Tensor f({2, 8, 8});
  const Tensor out = warp(x, f);
  for (size_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("warp with a constant integer flow shifts with clamped borders") {
  Tensor x({1, 1, 4});
  x[0] = 10;
  x[1] = 20;
  x[2] = 30;
  x[3] = 40;
  Tensor f({2, 1, 4});
  for (int i = 0; i < 4; ++i) f[i] = 1.0;  // dx = 1, dy = 0
  const Tensor out = warp(x, f);
  CHECK(out[0] == 20);
  CHECK(out[1] == 30);
  CHECK(out[2] == 40);
  CHECK(out[3] == 40);  // clamped border repeats
}

TEST_CASE("warp gradients wrt flow and image match finite differences") {
  Rng rng(84);
  const Tensor x = gaussian_sample({1, 6, 6}, rng);
  Tensor f = gaussian_sample({2, 6, 6}, rng);
  f *= 0.31;  // small non-integer flows keep sample points off the kinks
  const Tensor w = gaussian_sample({1, 6, 6}, rng);

  WarpTape tape;
  const Tensor out = warp(x, f, &tape);
  CHECK(tape.margin > 1e-4);
  Tensor dx, df;
  warp_backward(tape, w, &dx, &df);

  const double h = 1e-6;
  for (size_t c : {size_t(0), size_t(13), size_t(40), size_t(71)}) {
    const double saved = f[c];
    f[c] = saved + h;
    const double lp = dot(warp(x, f), w);
    f[c] = saved - h;
    const double lm = dot(warp(x, f), w);
    f[c] = saved;
    const double numeric = (lp - lm) / (2 * h);
    CHECK(std::fabs(df[c] - numeric) /
              std::max({std::fabs(df[c]), std::fabs(numeric), 1e-8}) < 1e-4);
  }
  Tensor xv = x;
  for (size_t c : {size_t(3), size_t(21)}) {
    const double saved = xv[c];
    xv[c] = saved + h;
    const double lp = dot(warp(xv, f), w);
    xv[c] = saved - h;
    const double lm = dot(warp(xv, f), w);
    xv[c] = saved;
    const double numeric = (lp - lm) / (2 * h);
    CHECK(std::fabs(dx[c] - numeric) /
              std::max({std::fabs(dx[c]), std::fabs(numeric), 1e-8}) < 1e-4);
  }
}

TEST_CASE("flow statistic closed form, homogeneity and zero case") {
  Tensor f({2, 16, 16});
  CHECK(flow_statistic(f) == 0.0);

  const double m = 0.37;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) f.at(0, y, x) = m;  // |f| = m everywhere
  CHECK(flow_statistic(f) == doctest::Approx(4 * m).epsilon(1e-12));

  Rng rng(85);
  Tensor g = gaussian_sample({2, 16, 16}, rng);
  Tensor g2 = g;
  g2 *= 2.0;
  CHECK(flow_statistic(g2) == doctest::Approx(2 * flow_statistic(g)).epsilon(1e-12));
}

TEST_CASE("project_flow scales onto the budget and is idempotent") {
  Rng rng(86);
  Tensor f = gaussian_sample({2, 16, 16}, rng);
  const double gamma = 1.0;
  const double stat = flow_statistic(f);

  // within budget: unchanged
  Tensor small = f;
  small *= 0.5 * gamma / stat;
  const Tensor kept = project_flow(small, gamma);
  for (size_t i = 0; i < kept.size(); ++i) CHECK(kept[i] == small[i]);

  // statistic 2*gamma: halved, post-statistic == gamma
  Tensor big = f;
  big *= 2.0 * gamma / stat;
  const Tensor proj = project_flow(big, gamma);
  CHECK(flow_statistic(proj) == doctest::Approx(gamma).epsilon(1e-9));
  for (size_t i = 0; i < proj.size(); ++i)
    CHECK(proj[i] == doctest::Approx(0.5 * big[i]).epsilon(1e-9));

  const Tensor twice = project_flow(proj, gamma);
  for (size_t i = 0; i < twice.size(); ++i)
    CHECK(twice[i] == doctest::Approx(proj[i]).epsilon(1e-12));

  const Tensor zero = project_flow(Tensor({2, 16, 16}), gamma);
  for (size_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);
}

TEST_CASE("project_trigger hits the linf budget exactly") {
  Rng rng(87);
  Tensor tau = gaussian_sample({1, 16, 16}, rng);
  tau *= 2.0 / norm_linf(tau);
  const Tensor proj = project_trigger(tau, 0.4);
  CHECK(norm_linf(proj) == doctest::Approx(0.4).epsilon(1e-12));
  for (size_t i = 0; i < proj.size(); ++i)
    CHECK(proj[i] == doctest::Approx(0.2 * tau[i]).epsilon(1e-12));

  const Tensor again = project_trigger(proj, 0.4);
  for (size_t i = 0; i < again.size(); ++i)
    CHECK(again[i] == doctest::Approx(proj[i]).epsilon(1e-12));

  CHECK_THROWS_AS(project_trigger(Tensor({1, 16, 16}), 0.4), Error);
}

TEST_CASE("generator_loss is ~0 for an unperturbed confident guide") {
  // dense guide with a huge margin: max softmax >= 0.999 on this image
  Model clf({LayerSpec::dense(16, 2)}, {1, 4, 4});
  for (int i = 0; i < 16; ++i) clf.params.tensors[0][16 + i] = 2.0;  // logit1 = 2 sum(x)
  const Tensor x = Tensor::full({1, 4, 4}, 0.5);
  const Tensor f({2, 4, 4});
  const Tensor tau({1, 4, 4});
  const double loss = generator_loss(clf, {x}, f, tau, nullptr, nullptr);
  CHECK(std::fabs(loss) <= 1e-3);
}

TEST_CASE("generator_loss gradients match finite differences") {
  Model clf = make_classifier(1, 16, 10);
  Rng rng(88);
  clf.init_params(rng);
  std::vector<Tensor> batch;
  for (int i = 0; i < 2; ++i) batch.push_back(gaussian_sample({1, 16, 16}, rng) * 0.5);
  Tensor f = gaussian_sample({2, 16, 16}, rng) * 0.3;
  Tensor tau = gaussian_sample({1, 16, 16}, rng) * 0.1;

  Tensor df, dtau;
  generator_loss(clf, batch, f, tau, &df, &dtau);

  ModelParams holder;
  holder.names = {"f", "tau"};
  holder.tensors = {f, tau};
  ModelParams analytic;
  analytic.names = holder.names;
  analytic.tensors = {df, dtau};
  auto loss = [&](double* margin) {
    return generator_loss(clf, batch, holder.tensors[0], holder.tensors[1], nullptr,
                          nullptr, margin);
  };
  Rng pick(89);
  const GradCheckResult res = grad_check(holder, analytic, loss, GradCheckOptions{}, pick);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("trigger generator emits a budget-tight deterministic trigger") {
  const GuideFixture& fx = guide();
  TriggerGenConfig cfg;
  cfg.epochs = 3;
  cfg.n_images = 24;
  Rng r1(90), r2(90);
  const TriggerGenResult a = train_trigger_generator(fx.clf, fx.train, fx.holdout, cfg, r1);
  const TriggerGenResult b = train_trigger_generator(fx.clf, fx.train, fx.holdout, cfg, r2);
  CHECK(norm_linf(a.trigger.tau) == doctest::Approx(cfg.budget.xi).epsilon(1e-9));
  for (size_t i = 0; i < a.trigger.tau.size(); ++i)
    CHECK(a.trigger.tau[i] == b.trigger.tau[i]);
  CHECK(a.trigger.kind == TriggerKind::kGenerated);
}

TEST_CASE("trigger generator fools the guide on held-out images") {
  const GuideFixture& fx = guide();
  TriggerGenConfig cfg;  // default desk budget and optimizer
  Rng rng(91);
  const TriggerGenResult res = train_trigger_generator(fx.clf, fx.train, fx.holdout, cfg, rng);
  CHECK(res.fooling_holdout >= 0.7);
  CHECK(res.met_theta);
  // the loss trends down across epochs (first pair vs last pair of epochs)
  REQUIRE(res.loss_curve.size() == static_cast<size_t>(cfg.epochs));
  const double head = (res.loss_curve[0] + res.loss_curve[1]) / 2;
  const double tail =
      (res.loss_curve[cfg.epochs - 2] + res.loss_curve[cfg.epochs - 1]) / 2;
  CHECK(tail < head);
}

TEST_CASE("deepfool matches the linear-classifier closed form") {
  // logits = [0, w.x + b]
  const std::vector<double> w = {0.6, -0.4, 0.2, 0.8};
  const double b = -1.1;
  Model clf({LayerSpec::dense(4, 2)}, {4});
  for (int i = 0; i < 4; ++i) clf.params.tensors[0][4 + i] = w[i];
  clf.params.tensors[1][1] = b;

  const Tensor x({4}, {0.3, 0.2, -0.5, 0.4});
  double fx = b;
  for (int i = 0; i < 4; ++i) fx += w[i] * x[i];
  REQUIRE(fx < 0.0);  // classified as 0, boundary at w.x + b = 0
  double w2 = 0.0;
  for (double wi : w) w2 += wi * wi;

  bool converged = false;
  const Tensor dv = deepfool_step(clf, x, 50, 0.02, &converged);
  CHECK(converged);
  for (int i = 0; i < 4; ++i) {
    const double want = 1.02 * (-fx + 1e-6) / w2 * w[i];
    CHECK(dv[i] == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("deepfool uap respects the linf ball and fools the guide") {
  const GuideFixture& fx = guide();
  std::vector<Tensor> subset(fx.train.images.begin(), fx.train.images.begin() + 40);
  DeepFoolConfig cfg;
  cfg.xi = 0.4;
  const DeepFoolResult res = deepfool_uap(fx.clf, subset, cfg);
  CHECK(norm_linf(res.trigger.tau) <= cfg.xi + 1e-12);
  CHECK(res.fooling > 0.3);
}

TEST_CASE("fooling rate trivial cases") {
  const GuideFixture& fx = guide();
  std::vector<Tensor> subset(fx.holdout.images.begin(), fx.holdout.images.begin() + 20);
  const Tensor zero_tau({1, 16, 16});
  CHECK(fooling_rate(fx.clf, subset, zero_tau) == 0.0);
  const Tensor zero_flow({2, 16, 16});
  CHECK(fooling_rate(fx.clf, subset, zero_tau, &zero_flow) == 0.0);
}
