#include "uibd/schedule.hpp"

#include <cmath>
#include <fstream>

namespace uibd {

NoiseSchedule build_schedule(int T, double beta_start, double beta_end,
                             const ScheduleOptions& opt) {
  // T=1 is allowed for the degenerate single-step sampler boundary; the
  // posterior coefficients then have no valid t.
  require(T >= 1 && T <= 10000, "build_schedule: T must be in [1, 10000]");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "build_schedule: need 0 < beta_start <= beta_end < 1");
  require(opt.zeta == 0.0 || opt.zeta == 1.0, "build_schedule: zeta must be 0 or 1");

  NoiseSchedule s;
  s.T = T;
  s.zeta = opt.zeta;
  s.beta.assign(T + 1, 0.0);
  s.k.assign(T + 1, 0.0);
  s.w2.assign(T + 1, 0.0);
  s.alpha_bar.assign(T + 1, 1.0);
  s.alpha_hat.assign(T + 1, 1.0);
  s.beta_hat.assign(T + 1, 0.0);
  s.rho_hat.assign(T + 1, 0.0);
  s.h.assign(T + 1, 0.0);

  for (int t = 1; t <= T; ++t) {
    s.beta[t] = (T == 1) ? beta_start
                         : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    s.k[t] = std::sqrt(1.0 - s.beta[t]);
    s.w2[t] = s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t]);
    s.alpha_hat[t] = std::sqrt(s.alpha_bar[t]);
    s.beta_hat[t] = std::sqrt(1.0 - s.alpha_bar[t]);
    s.rho_hat[t] = 1.0 - s.alpha_hat[t];
    s.h[t] = s.rho_hat[t] - s.k[t] * s.rho_hat[t - 1];
  }

  for (int t = 1; t <= T; ++t) {
    const double unit = s.alpha_hat[t] * s.alpha_hat[t] + s.beta_hat[t] * s.beta_hat[t];
    require(std::fabs(unit - 1.0) <= 1e-12, "build_schedule: alpha_hat^2+beta_hat^2 != 1");
    require(s.alpha_hat[t] < s.alpha_hat[t - 1], "build_schedule: alpha_hat not decreasing");
    require(s.beta_hat[t] > s.beta_hat[t - 1], "build_schedule: beta_hat not increasing");
    require(s.rho_hat[t] > s.rho_hat[t - 1], "build_schedule: rho_hat not increasing");
    const double recomp = s.k[t] * s.rho_hat[t - 1] + s.h[t];
    require(std::fabs(recomp - s.rho_hat[t]) <= 1e-12, "build_schedule: rho_hat recomposition broken");
  }
  if (opt.enforce_terminal) {
    require(s.alpha_hat[T] <= 0.05,
            "build_schedule: alpha_hat(T) > 0.05 - terminal marginal is not close to "
            "pure noise; increase T or the beta range");
  }
  return s;
}

NoiseSchedule default_schedule(int T, double zeta) {
  const double scale = 1000.0 / T;
  ScheduleOptions opt;
  opt.zeta = zeta;
  return build_schedule(T, 1e-4 * scale, 0.02 * scale, opt);
}

PosteriorCoeffs posterior_coefficients(const NoiseSchedule& s, int t) {
  require(t >= 2 && t <= s.T,
          "posterior_coefficients: t must be in [2, T] (the t=1 step is the sampler's "
          "final branch)");
  const double B2 = s.beta_hat[t - 1] * s.beta_hat[t - 1];
  const double D = s.k[t] * s.k[t] * B2 + s.w2[t];
  PosteriorCoeffs c;
  c.a = s.k[t] * B2 / D;
  c.b = s.alpha_hat[t - 1] * s.w2[t] / D;
  c.c = (s.w2[t] * s.rho_hat[t - 1] - s.k[t] * s.h[t] * B2) / D;
  c.s2 = s.w2[t] * B2 / D;
  return c;
}

double shortcut_coefficient(const NoiseSchedule& s, int t) {
  const PosteriorCoeffs pc = posterior_coefficients(s, t);
  const double g2 = pc.b * s.rho_hat[t] / s.alpha_hat[t];
  require(g2 >= 1e-12, "shortcut_coefficient: degenerate schedule step (G^2 ~ 0)");
  const double ht = pc.c - g2;
  return 2.0 * ht / ((1.0 + s.zeta) * g2);
}

void dump_schedule_csv(const NoiseSchedule& s, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  require(os.good(), "dump_schedule_csv: cannot open '" + path + "'");
  os << "t,beta,alpha_hat,beta_hat,rho_hat,h\n";
  os.precision(17);
  for (int t = 1; t <= s.T; ++t) {
    os << t << ',' << s.beta[t] << ',' << s.alpha_hat[t] << ',' << s.beta_hat[t]
       << ',' << s.rho_hat[t] << ',' << s.h[t] << '\n';
  }
}

}  // namespace uibd
