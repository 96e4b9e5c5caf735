#include "uibd/metrics.hpp"

#include <cmath>

#include "uibd/common.hpp"

namespace uibd {

namespace {

constexpr int kWin = 7;
constexpr double kSigma = 1.5;

const std::vector<double>& gaussian_window() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(kWin * kWin);
    double sum = 0.0;
    for (int y = 0; y < kWin; ++y)
      for (int x = 0; x < kWin; ++x) {
        const double dy = y - kWin / 2, dx = x - kWin / 2;
        k[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
        sum += k[y * kWin + x];
      }
    for (double& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

double ssim_term(double mx, double my, double vx, double vy, double cov,
                 double c1, double c2) {
  return ((2 * mx * my + c1) * (2 * cov + c2)) /
         ((mx * mx + my * my + c1) * (vx + vy + c2));
}

// Jacobi eigensolver for symmetric matrices (row-major n x n). Good enough
// for the ~100-dim feature covariances used here.
void jacobi_eigen(std::vector<double>& m, int n, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs) {
  eigvecs.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) eigvecs[static_cast<size_t>(i) * n + i] = 1.0;
  auto at = [&](std::vector<double>& a, int r, int c) -> double& {
    return a[static_cast<size_t>(r) * n + c];
  };
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += at(m, p, q) * at(m, p, q);
    if (off < 1e-22) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(m, p, q);
        if (std::fabs(apq) < 1e-300) continue;
        const double app = at(m, p, p), aqq = at(m, q, q);
        const double theta = (aqq - app) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(m, k, p), akq = at(m, k, q);
          at(m, k, p) = c * akp - s * akq;
          at(m, k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(m, p, k), aqk = at(m, q, k);
          at(m, p, k) = c * apk - s * aqk;
          at(m, q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = at(eigvecs, k, p), vkq = at(eigvecs, k, q);
          at(eigvecs, k, p) = c * vkp - s * vkq;
          at(eigvecs, k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  eigvals.resize(n);
  for (int i = 0; i < n; ++i) eigvals[i] = at(m, i, i);
}

// tr(sqrtm(S1 S2)) via tr(sqrtm(sqrtm(S1) S2 sqrtm(S1))); eigenvalues
// clipped at 0 before taking roots.
double trace_sqrt_product(const std::vector<double>& s1,
                          const std::vector<double>& s2, int n) {
  std::vector<double> work = s1, eigvals, eigvecs;
  jacobi_eigen(work, n, eigvals, eigvecs);
  // R = sqrtm(S1) = V diag(sqrt(l)) V^T
  std::vector<double> root(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) {
        const double l = std::max(0.0, eigvals[k]);
        acc += eigvecs[static_cast<size_t>(i) * n + k] * std::sqrt(l) *
               eigvecs[static_cast<size_t>(j) * n + k];
      }
      root[static_cast<size_t>(i) * n + j] = acc;
    }
  // M = R S2 R (symmetric PSD up to rounding)
  std::vector<double> tmp(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k)
        acc += root[static_cast<size_t>(i) * n + k] * s2[static_cast<size_t>(k) * n + j];
      tmp[static_cast<size_t>(i) * n + j] = acc;
    }
  std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k)
        acc += tmp[static_cast<size_t>(i) * n + k] * root[static_cast<size_t>(k) * n + j];
      m[static_cast<size_t>(i) * n + j] = acc;
    }
  // enforce symmetry before the second eigensolve
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) {
      const double v =
          0.5 * (m[static_cast<size_t>(i) * n + j] + m[static_cast<size_t>(j) * n + i]);
      m[static_cast<size_t>(i) * n + j] = v;
      m[static_cast<size_t>(j) * n + i] = v;
    }
  jacobi_eigen(m, n, eigvals, eigvecs);
  double tr = 0.0;
  for (int i = 0; i < n; ++i) tr += std::sqrt(std::max(0.0, eigvals[i]));
  return tr;
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "mse: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double ssim(const Tensor& a, const Tensor& b, double dynamic_range) {
  require(a.same_shape(b), "ssim: shape mismatch");
  require(a.rank() == 3, "ssim: expects (C,H,W) images");
  const double C1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double C2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);

  if (H < kWin || W < kWin) {
    // global-statistics fallback for tiny images
    double total = 0.0;
    for (int ch = 0; ch < C; ++ch) {
      double mx = 0, my = 0;
      const size_t plane = static_cast<size_t>(H) * W;
      const double* pa = a.data() + ch * plane;
      const double* pb = b.data() + ch * plane;
      for (size_t i = 0; i < plane; ++i) {
        mx += pa[i];
        my += pb[i];
      }
      mx /= plane;
      my /= plane;
      double vx = 0, vy = 0, cov = 0;
      for (size_t i = 0; i < plane; ++i) {
        vx += (pa[i] - mx) * (pa[i] - mx);
        vy += (pb[i] - my) * (pb[i] - my);
        cov += (pa[i] - mx) * (pb[i] - my);
      }
      vx /= plane;
      vy /= plane;
      cov /= plane;
      total += ssim_term(mx, my, vx, vy, cov, C1, C2);
    }
    return total / C;
  }

  const std::vector<double>& win = gaussian_window();
  double total = 0.0;
  int count = 0;
  for (int ch = 0; ch < C; ++ch) {
    for (int y = 0; y + kWin <= H; ++y) {
      for (int x = 0; x + kWin <= W; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int wy = 0; wy < kWin; ++wy)
          for (int wx = 0; wx < kWin; ++wx) {
            const double wv = win[wy * kWin + wx];
            const double va = a.at(ch, y + wy, x + wx);
            const double vb = b.at(ch, y + wy, x + wx);
            mx += wv * va;
            my += wv * vb;
            sxx += wv * va * va;
            syy += wv * vb * vb;
            sxy += wv * va * vb;
          }
        const double vx = sxx - mx * mx;
        const double vy = syy - my * my;
        const double cov = sxy - mx * my;
        total += ssim_term(mx, my, vx, vy, cov, C1, C2);
        ++count;
      }
    }
  }
  return total / count;
}

double asr(const std::vector<Tensor>& samples, const Tensor& target, double delta) {
  require(!samples.empty(), "asr: empty sample list");
  int hits = 0;
  for (const Tensor& s : samples)
    if (mse(s, target) < delta) ++hits;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

Tensor feature_embed(const Model& extractor, const Tensor& img) {
  const int n_layers = static_cast<int>(extractor.spec().size());
  require(n_layers >= 1 && extractor.spec().back().kind == LayerKind::kDense,
          "feature_embed: extractor must end in a dense classification head");
  return model_forward_prefix(extractor, img, n_layers - 1);
}

double fid_proxy(const std::vector<Tensor>& generated,
                 const std::vector<Tensor>& reference, const Model& extractor) {
  require(generated.size() >= 16 && reference.size() >= 16,
          "fid_proxy: need at least 16 samples per side");
  auto moments = [&](const std::vector<Tensor>& imgs, std::vector<double>& mu,
                     std::vector<double>& cov, int& dim) {
    std::vector<Tensor> feats;
    feats.reserve(imgs.size());
    for (const Tensor& im : imgs) feats.push_back(feature_embed(extractor, im));
    dim = static_cast<int>(feats[0].size());
    mu.assign(dim, 0.0);
    for (const Tensor& f : feats)
      for (int i = 0; i < dim; ++i) mu[i] += f[i];
    for (int i = 0; i < dim; ++i) mu[i] /= static_cast<double>(feats.size());
    cov.assign(static_cast<size_t>(dim) * dim, 0.0);
    for (const Tensor& f : feats)
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
          cov[static_cast<size_t>(i) * dim + j] += (f[i] - mu[i]) * (f[j] - mu[j]);
    const double denom = std::max<size_t>(1, feats.size() - 1);
    for (double& v : cov) v /= denom;
    for (int i = 0; i < dim; ++i) cov[static_cast<size_t>(i) * dim + i] += 1e-6;
  };
  std::vector<double> mu1, mu2, s1, s2;
  int dim = 0;
  moments(generated, mu1, s1, dim);
  int dim2 = 0;
  moments(reference, mu2, s2, dim2);
  require(dim == dim2, "fid_proxy: feature dimension mismatch");

  double d2 = 0.0;
  for (int i = 0; i < dim; ++i) d2 += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
  double tr1 = 0.0, tr2 = 0.0;
  for (int i = 0; i < dim; ++i) {
    tr1 += s1[static_cast<size_t>(i) * dim + i];
    tr2 += s2[static_cast<size_t>(i) * dim + i];
  }
  const double fid = d2 + tr1 + tr2 - 2.0 * trace_sqrt_product(s1, s2, dim);
  return std::max(0.0, fid);
}

std::pair<double, double> stealth_distances(const Tensor& x, const Tensor& r) {
  require(x.same_shape(r), "stealth_distances: shape mismatch");
  Tensor d = r;
  d -= x;
  return {norm_linf(d), norm_l2(d)};
}

double mean_pairwise_ssim(const std::vector<Tensor>& samples) {
  require(samples.size() >= 2, "mean_pairwise_ssim: need at least 2 samples");
  double total = 0.0;
  int count = 0;
  for (size_t i = 0; i < samples.size(); ++i)
    for (size_t j = i + 1; j < samples.size(); ++j) {
      total += ssim(samples[i], samples[j]);
      ++count;
    }
  return total / count;
}

}  // namespace uibd
