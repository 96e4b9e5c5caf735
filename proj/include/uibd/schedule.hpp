#ifndef UIBD_SCHEDULE_HPP_
#define UIBD_SCHEDULE_HPP_

#include <string>
#include <vector>

#include "uibd/common.hpp"

namespace uibd {

// Per-timestep coefficients of the forward/backward processes, for both the
// clean chain
//   x_t = alpha_hat(t) x0 + beta_hat(t) eps,   x_t = k_t x_{t-1} + w_t eps'
// and the shifted chain
//   x_t = alpha_hat(t) y + rho_hat(t) r + beta_hat(t) eps,
//   x_t = k_t x_{t-1} + h_t r + w_t eps'.
//
// rho_hat(t) = 1 - alpha_hat(t): the unique linear interpolant between
// rho_hat(0) = 0 and rho_hat(T) ~= 1 that composes per step, which pins
// h_t = rho_hat(t) - k_t rho_hat(t-1).
//
// Arrays are indexed by timestep t in [1, T]; index 0 holds the boundary
// values alpha_hat(0)=1, beta_hat(0)=0, rho_hat(0)=0.
struct NoiseSchedule {
  int T = 0;
  double zeta = 1.0;  // 1 = stochastic (ancestral) family, 0 = deterministic (ddim)
  std::vector<double> beta;       // beta[t]
  std::vector<double> k;          // k[t]  = sqrt(1 - beta[t])
  std::vector<double> w2;         // w2[t] = beta[t]
  std::vector<double> alpha_bar;  // prod_{i<=t} (1 - beta_i)
  std::vector<double> alpha_hat;  // sqrt(alpha_bar)
  std::vector<double> beta_hat;   // sqrt(1 - alpha_bar)
  std::vector<double> rho_hat;    // 1 - alpha_hat
  std::vector<double> h;          // rho_hat[t] - k[t] * rho_hat[t-1]
};

struct ScheduleOptions {
  double zeta = 1.0;
  // Require alpha_hat(T) <= 0.05 (terminal marginal ~ pure noise). Disable
  // only for small analytic schedules used in oracle tests.
  bool enforce_terminal = true;
};

// Linear beta interpolation between beta_start and beta_end over T steps.
// Validates every schedule identity (alpha_hat^2 + beta_hat^2 = 1, rho_hat
// recomposition, monotonicity) to 1e-12 before returning.
NoiseSchedule build_schedule(int T, double beta_start, double beta_end,
                             const ScheduleOptions& opt);

// The conventional desk default: DDPM's 1e-4..0.02 range rescaled by 1000/T.
NoiseSchedule default_schedule(int T, double zeta);

// Reverse-step mean weights on (x_t, x0, r) and the step variance for
// q(x_{t-1} | x_t, x0[, r]):
//   a(t) = k_t B2 / D,   b(t) = alpha_hat(t-1) w_t^2 / D,
//   c(t) = (w_t^2 rho_hat(t-1) - k_t h_t B2) / D,   s2 = w_t^2 B2 / D,
// with B2 = beta_hat^2(t-1), D = k_t^2 B2 + w_t^2. Defined for t in [2, T].
struct PosteriorCoeffs {
  double a = 0, b = 0, c = 0, s2 = 0;
};

PosteriorCoeffs posterior_coefficients(const NoiseSchedule& sched, int t);

// Shortcut-loss coefficient kappa(t) = 2 H(t) / ((1 + zeta) G^2(t)) with
// H(t) = c(t) - b(t) rho_hat(t) / alpha_hat(t) and
// G^2(t) = b(t) rho_hat(t) / alpha_hat(t). Defined for t in [2, T].
double shortcut_coefficient(const NoiseSchedule& sched, int t);

// CSV dump: t, beta, alpha_hat, beta_hat, rho_hat, h.
void dump_schedule_csv(const NoiseSchedule& sched, const std::string& path);

}  // namespace uibd

#endif  // UIBD_SCHEDULE_HPP_
