#include "uibd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "uibd/common.hpp"

namespace uibd {

GradCheckResult grad_check(ModelParams& params, const ModelParams& analytic,
                           const LossClosure& loss, const GradCheckOptions& opt,
                           Rng& rng) {
  require(params.count() == analytic.count(), "grad_check: container mismatch");
  GradCheckResult res;
  for (size_t ti = 0; ti < params.count(); ++ti) {
    Tensor& p = params.tensors[ti];
    const Tensor& a = analytic.tensors[ti];
    const size_t n = p.size();

    std::vector<size_t> coords;
    if (n <= static_cast<size_t>(opt.coords_per_tensor)) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      // sample without replacement
      std::vector<int> all(n);
      for (size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i);
      rng.shuffle(all);
      coords.assign(all.begin(), all.begin() + opt.coords_per_tensor);
    }

    for (size_t c : coords) {
      const double saved = p[c];
      double margin_plus = 0.0, margin_minus = 0.0;
      p[c] = saved + opt.step;
      const double lp = loss(&margin_plus);
      p[c] = saved - opt.step;
      const double lm = loss(&margin_minus);
      p[c] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm)) fail("grad_check: non-finite loss");
      if (std::min(margin_plus, margin_minus) < opt.step) {
        ++res.skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * opt.step);
      const double rel = std::fabs(a[c] - numeric) /
                         std::max({std::fabs(a[c]), std::fabs(numeric), 1e-8});
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace uibd
