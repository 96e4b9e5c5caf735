#ifndef UIBD_METRICS_HPP_
#define UIBD_METRICS_HPP_

#include <utility>
#include <vector>

#include "uibd/nn.hpp"
#include "uibd/tensor.hpp"

namespace uibd {

double mse(const Tensor& a, const Tensor& b);

// Windowed SSIM: 7x7 gaussian window (sigma 1.5), C1=(0.01 L)^2,
// C2=(0.03 L)^2, averaged over channels and valid positions. Images smaller
// than the window fall back to global-statistics SSIM.
double ssim(const Tensor& a, const Tensor& b, double dynamic_range = 2.0);

// Fraction of samples with mse(sample, target) < delta.
double asr(const std::vector<Tensor>& samples, const Tensor& target, double delta);

// Frechet distance between gaussian fits of penultimate-layer classifier
// features: |mu1-mu2|^2 + tr(S1 + S2 - 2 sqrtm(S1 S2)). Covariances get a
// 1e-6 ridge; negative eigenvalues clip to 0.
double fid_proxy(const std::vector<Tensor>& generated,
                 const std::vector<Tensor>& reference, const Model& extractor);

// Penultimate-layer feature vector (input to the classifier's final dense).
Tensor feature_embed(const Model& extractor, const Tensor& img);

// (linf, l2) distances between a stamped image and its source.
std::pair<double, double> stealth_distances(const Tensor& x, const Tensor& r);

// Mean SSIM over all unordered pairs in a sample list.
double mean_pairwise_ssim(const std::vector<Tensor>& samples);

}  // namespace uibd

#endif  // UIBD_METRICS_HPP_
