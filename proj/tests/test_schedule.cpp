#include <cmath>

#include "doctest.h"
#include "oracle_helpers.hpp"
#include "uibd/schedule.hpp"

using namespace uibd;

namespace {

NoiseSchedule const_half_schedule(double zeta = 1.0) {
  // T=4, constant beta=0.5: alpha_bar = 0.5, 0.25, 0.125, 0.0625.
  ScheduleOptions opt;
  opt.zeta = zeta;
  opt.enforce_terminal = false;
  return build_schedule(4, 0.5, 0.5, opt);
}

}  // namespace

TEST_CASE("constant-beta schedule matches the direct product oracle") {
  const NoiseSchedule s = const_half_schedule();
  CHECK(s.alpha_bar[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.alpha_bar[2] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s.alpha_bar[3] == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(s.alpha_bar[4] == doctest::Approx(0.0625).epsilon(1e-14));
  CHECK(s.alpha_hat[2] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s.beta_hat[2] == doctest::Approx(0.86602540378443865).epsilon(1e-14));
  CHECK(s.rho_hat[2] == doctest::Approx(0.5).epsilon(1e-14));
  for (int t = 1; t <= 4; ++t)
    CHECK(s.k[t] == doctest::Approx(0.70710678118654752).epsilon(1e-14));
}

TEST_CASE("constant-beta h_t is constant via the recursion oracle") {
  const NoiseSchedule s = const_half_schedule();
  // closed form for constant beta: h = 1 - 1/sqrt(2) = 0.29289...
  for (int t = 1; t <= 4; ++t)
    CHECK(s.h[t] == doctest::Approx(0.29289321881345248).epsilon(1e-12));
}

TEST_CASE("schedule identities hold to 1e-12") {
  for (const NoiseSchedule& s : {const_half_schedule(), default_schedule(100, 1.0),
                                 default_schedule(50, 0.0)}) {
    for (int t = 1; t <= s.T; ++t) {
      CHECK(std::fabs(s.alpha_hat[t] * s.alpha_hat[t] + s.beta_hat[t] * s.beta_hat[t] - 1.0) <=
            1e-12);
      CHECK(std::fabs(s.rho_hat[t] - (1.0 - s.alpha_hat[t])) <= 1e-12);
      CHECK(std::fabs(s.k[t] * s.rho_hat[t - 1] + s.h[t] - s.rho_hat[t]) <= 1e-12);
      CHECK(s.alpha_hat[t] < s.alpha_hat[t - 1]);
      CHECK(s.beta_hat[t] > s.beta_hat[t - 1]);
      CHECK(s.rho_hat[t] > s.rho_hat[t - 1]);
    }
    CHECK(s.alpha_hat[0] == 1.0);
    CHECK(s.rho_hat[0] == 0.0);
  }
}

TEST_CASE("build_schedule rejects bad betas and too-gentle schedules") {
  ScheduleOptions opt;
  CHECK_THROWS_AS(build_schedule(4, 0.5, 1.0, opt), Error);
  CHECK_THROWS_AS(build_schedule(4, 0.0, 0.5, opt), Error);
  CHECK_THROWS_AS(build_schedule(4, 0.6, 0.5, opt), Error);
  CHECK_THROWS_AS(build_schedule(0, 0.1, 0.2, opt), Error);
  // alpha_hat(T) stays near 1: rejected with advice unless the terminal
  // check is disabled.
  CHECK_THROWS_WITH_AS(build_schedule(10, 1e-4, 2e-4, opt),
                       doctest::Contains("increase T"), Error);
  opt.enforce_terminal = false;
  CHECK_NOTHROW(build_schedule(10, 1e-4, 2e-4, opt));
  opt.zeta = 0.5;
  CHECK_THROWS_AS(build_schedule(10, 1e-4, 2e-4, opt), Error);
}

TEST_CASE("default schedule satisfies the terminal condition") {
  const NoiseSchedule s = default_schedule(100, 1.0);
  CHECK(s.alpha_hat[100] <= 0.05);
  CHECK(s.beta[1] == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(s.beta[100] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("posterior coefficients at t=2 match the frozen scalar case") {
  const NoiseSchedule s = const_half_schedule();
  const PosteriorCoeffs pc = posterior_coefficients(s, 2);
  CHECK(pc.a == doctest::Approx(0.47140).epsilon(2e-5));
  CHECK(pc.b == doctest::Approx(0.47140).epsilon(2e-5));
  CHECK(pc.c == doctest::Approx(0.05719).epsilon(2e-4));
  // clean consistency: a alpha_hat(2) + b = alpha_hat(1)
  CHECK(std::fabs(pc.a * s.alpha_hat[2] + pc.b - s.alpha_hat[1]) <= 1e-10);
  CHECK(s.alpha_hat[1] == doctest::Approx(0.70711).epsilon(1e-5));
  // backdoor consistency: a rho_hat(2) + c = rho_hat(1)
  CHECK(std::fabs(pc.a * s.rho_hat[2] + pc.c - s.rho_hat[1]) <= 1e-10);
  CHECK(s.rho_hat[1] == doctest::Approx(0.29289).epsilon(1e-5));
}

TEST_CASE("posterior coefficients match the gaussian-product grid oracle to 1e-6") {
  ScheduleOptions opt;
  opt.enforce_terminal = false;
  for (const NoiseSchedule& s : {const_half_schedule(), build_schedule(12, 0.01, 0.35, opt)}) {
    for (int t = 2; t <= s.T; t += (s.T > 6 ? 5 : 1)) {
      const PosteriorCoeffs pc = posterior_coefficients(s, t);
      const uibd_oracle::PosteriorFit fit = uibd_oracle::fit_posterior(s, t);
      CHECK(std::fabs(pc.a - fit.a) <= 1e-6);
      CHECK(std::fabs(pc.b - fit.b) <= 1e-6);
      CHECK(std::fabs(pc.c - fit.c) <= 1e-6);
      CHECK(std::fabs(pc.s2 - fit.s2) <= 1e-6);
    }
  }
}

TEST_CASE("posterior consistency identities hold at every timestep") {
  for (const NoiseSchedule& s : {const_half_schedule(), default_schedule(100, 1.0)}) {
    for (int t = 2; t <= s.T; ++t) {
      const PosteriorCoeffs pc = posterior_coefficients(s, t);
      CHECK(std::fabs(pc.a * s.alpha_hat[t] + pc.b - s.alpha_hat[t - 1]) <= 1e-10);
      CHECK(std::fabs(pc.a * s.rho_hat[t] + pc.c - s.rho_hat[t - 1]) <= 1e-10);
    }
  }
}

TEST_CASE("posterior is undefined at t=1") {
  const NoiseSchedule s = const_half_schedule();
  CHECK_THROWS_AS(posterior_coefficients(s, 1), Error);
  CHECK_THROWS_AS(posterior_coefficients(s, 5), Error);
}

TEST_CASE("shortcut coefficient kappa(2) = -0.87868 for the sde family") {
  const NoiseSchedule s = const_half_schedule(1.0);
  const double kappa = shortcut_coefficient(s, 2);
  CHECK(kappa == doctest::Approx(-0.87868).epsilon(1e-5));
  // H(2) and G^2(2) intermediates from the same scalar case.
  const PosteriorCoeffs pc = posterior_coefficients(s, 2);
  const double g2 = pc.b * s.rho_hat[2] / s.alpha_hat[2];
  CHECK(g2 == doctest::Approx(0.47140).epsilon(2e-5));
  CHECK(pc.c - g2 == doctest::Approx(-0.41421).epsilon(2e-5));
  // ode family halves the (1+zeta) denominator away.
  const NoiseSchedule s0 = const_half_schedule(0.0);
  CHECK(shortcut_coefficient(s0, 2) == doctest::Approx(2.0 * kappa).epsilon(1e-12));
}

TEST_CASE("schedule csv dump has one row per timestep") {
  const NoiseSchedule s = const_half_schedule();
  const std::string path = "test_sched.csv";
  dump_schedule_csv(s, path);
  FILE* f = fopen(path.c_str(), "r");
  REQUIRE(f != nullptr);
  int lines = 0;
  int c;
  while ((c = fgetc(f)) != EOF)
    if (c == '\n') ++lines;
  fclose(f);
  CHECK(lines == 5);  // header + 4 rows
  std::remove(path.c_str());
}
