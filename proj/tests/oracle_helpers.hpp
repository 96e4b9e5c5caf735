// Test-only oracles, independent of the library's analytic code paths.
#ifndef UIBD_TESTS_ORACLE_HELPERS_HPP_
#define UIBD_TESTS_ORACLE_HELPERS_HPP_

#include <cmath>

#include "uibd/schedule.hpp"

namespace uibd_oracle {

struct GridPosterior {
  double mean = 0.0;
  double var = 0.0;
};

// Posterior moments of q(x_{t-1} | x_t, x0, r) by brute force on a density
// grid: multiply the step likelihood N(x_t; k u + h r, w2) with the marginal
// prior N(u; ah1 x0 + rh1 r, bh1^2) pointwise and take Riemann-sum moments.
inline GridPosterior grid_posterior(double k, double w2, double h,
                                    double ah1, double bh1, double rh1,
                                    double xt, double x0, double r) {
  const double prior_mu = ah1 * x0 + rh1 * r;
  const double prior_var = bh1 * bh1;
  const double like_mu = (xt - h * r) / k;
  const double center = 0.5 * (prior_mu + like_mu);
  const double spread = 12.0 * (std::sqrt(prior_var) + std::sqrt(w2) / k) +
                        0.5 * std::fabs(prior_mu - like_mu);
  const int n = 400001;
  const double lo = center - spread;
  const double du = 2.0 * spread / (n - 1);
  double zsum = 0.0, msum = 0.0, m2sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = lo + i * du;
    const double dlike = xt - (k * u + h * r);
    const double dprior = u - prior_mu;
    const double p = std::exp(-0.5 * (dlike * dlike / w2 + dprior * dprior / prior_var));
    zsum += p;
    msum += p * u;
    m2sum += p * u * u;
  }
  GridPosterior out;
  out.mean = msum / zsum;
  out.var = m2sum / zsum - out.mean * out.mean;
  return out;
}

// Recovers the linear posterior-mean weights (a, b, c) and the variance s2
// for one timestep by probing the grid oracle with unit configurations.
struct PosteriorFit {
  double a, b, c, s2;
};

inline PosteriorFit fit_posterior(const uibd::NoiseSchedule& s, int t) {
  const double k = s.k[t], w2 = s.w2[t], h = s.h[t];
  const double ah1 = s.alpha_hat[t - 1], bh1 = s.beta_hat[t - 1], rh1 = s.rho_hat[t - 1];
  const GridPosterior p0 = grid_posterior(k, w2, h, ah1, bh1, rh1, 0, 0, 0);
  const GridPosterior pa = grid_posterior(k, w2, h, ah1, bh1, rh1, 1, 0, 0);
  const GridPosterior pb = grid_posterior(k, w2, h, ah1, bh1, rh1, 0, 1, 0);
  const GridPosterior pc = grid_posterior(k, w2, h, ah1, bh1, rh1, 0, 0, 1);
  PosteriorFit fit;
  fit.a = pa.mean - p0.mean;
  fit.b = pb.mean - p0.mean;
  fit.c = pc.mean - p0.mean;
  fit.s2 = p0.var;
  return fit;
}

}  // namespace uibd_oracle

#endif  // UIBD_TESTS_ORACLE_HELPERS_HPP_
