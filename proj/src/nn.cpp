#include "uibd/nn.hpp"

#include <cmath>
#include <limits>

#include "uibd/common.hpp"

namespace uibd {

namespace {

constexpr double kGroupNormEps = 1e-5;

int param_count(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::kDense:
    case LayerKind::kConv2d:
    case LayerKind::kTConv2d:
    case LayerKind::kGroupNorm:
    case LayerKind::kTimeEmbed:
      return 2;
    case LayerKind::kResidual: {
      int n = 0;
      for (const auto& b : l.body) n += param_count(b);
      return n;
    }
    default:
      return 0;
  }
}

void collect_param_shapes(const LayerSpec& l, const std::string& prefix,
                          const std::vector<int>& in_shape,
                          std::vector<std::string>& names,
                          std::vector<std::vector<int>>& shapes) {
  switch (l.kind) {
    case LayerKind::kDense:
      names.push_back(prefix + ".w");
      shapes.push_back({l.out_units, l.in_units});
      names.push_back(prefix + ".b");
      shapes.push_back({l.out_units});
      break;
    case LayerKind::kConv2d:
      names.push_back(prefix + ".w");
      shapes.push_back({l.out_ch, l.in_ch, l.kernel, l.kernel});
      names.push_back(prefix + ".b");
      shapes.push_back({l.out_ch});
      break;
    case LayerKind::kTConv2d:
      names.push_back(prefix + ".w");
      shapes.push_back({l.in_ch, l.out_ch, l.kernel, l.kernel});
      names.push_back(prefix + ".b");
      shapes.push_back({l.out_ch});
      break;
    case LayerKind::kGroupNorm:
      names.push_back(prefix + ".gamma");
      shapes.push_back({in_shape[0]});
      names.push_back(prefix + ".beta");
      shapes.push_back({in_shape[0]});
      break;
    case LayerKind::kTimeEmbed:
      names.push_back(prefix + ".tw");
      shapes.push_back({2 * in_shape[0], l.emb_dim});
      names.push_back(prefix + ".tb");
      shapes.push_back({2 * in_shape[0]});
      break;
    case LayerKind::kResidual: {
      std::vector<int> s = in_shape;
      for (size_t i = 0; i < l.body.size(); ++i) {
        collect_param_shapes(l.body[i], prefix + ".b" + std::to_string(i), s, names, shapes);
        s = layer_output_shape(l.body[i], s);
      }
      break;
    }
    default:
      break;
  }
}

bool chain_has_time(const std::vector<LayerSpec>& spec) {
  for (const auto& l : spec) {
    if (l.kind == LayerKind::kTimeEmbed) return true;
    if (l.kind == LayerKind::kResidual && chain_has_time(l.body)) return true;
  }
  return false;
}

void sinusoidal_features(int t, int emb_dim, Tensor& out) {
  const int half = emb_dim / 2;
  for (int j = 0; j < half; ++j) {
    const double freq = std::exp(-std::log(10000.0) * j / half);
    out[2 * j] = std::sin(t * freq);
    out[2 * j + 1] = std::cos(t * freq);
  }
}

// ---- per-layer forward ----

void dense_forward(const LayerSpec& l, const Tensor& w, const Tensor& b,
                   const Tensor& x, Tensor& y) {
  y = Tensor({l.out_units});
  const double* px = x.data();
  for (int o = 0; o < l.out_units; ++o) {
    const double* wr = w.data() + static_cast<size_t>(o) * l.in_units;
    double s = b[o];
    for (int i = 0; i < l.in_units; ++i) s += wr[i] * px[i];
    y[o] = s;
  }
}

void conv2d_forward(const LayerSpec& l, const Tensor& w, const Tensor& b,
                    const Tensor& x, Tensor& y) {
  const int H = x.dim(1), W = x.dim(2);
  const int K = l.kernel, S = l.stride, P = l.pad;
  const int OH = (H + 2 * P - K) / S + 1;
  const int OW = (W + 2 * P - K) / S + 1;
  y = Tensor({l.out_ch, OH, OW});
  for (int oc = 0; oc < l.out_ch; ++oc) {
    double* yplane = y.data() + static_cast<size_t>(oc) * OH * OW;
    for (int i = 0; i < OH * OW; ++i) yplane[i] = b[oc];
    for (int ic = 0; ic < l.in_ch; ++ic) {
      const double* xplane = x.data() + static_cast<size_t>(ic) * H * W;
      const double* wk = w.data() + (static_cast<size_t>(oc) * l.in_ch + ic) * K * K;
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const double wv = wk[ky * K + kx];
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * S - P + ky;
            if (iy < 0 || iy >= H) continue;
            const double* xrow = xplane + static_cast<size_t>(iy) * W;
            double* yrow = yplane + static_cast<size_t>(oy) * OW;
            for (int ox = 0; ox < OW; ++ox) {
              const int ix = ox * S - P + kx;
              if (ix < 0 || ix >= W) continue;
              yrow[ox] += wv * xrow[ix];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward(const LayerSpec& l, const Tensor& w, const Tensor& x,
                     const Tensor& g, Tensor& dw, Tensor& db, Tensor& dx) {
  const int H = x.dim(1), W = x.dim(2);
  const int K = l.kernel, S = l.stride, P = l.pad;
  const int OH = g.dim(1), OW = g.dim(2);
  dx = Tensor({l.in_ch, H, W});
  for (int oc = 0; oc < l.out_ch; ++oc) {
    const double* gplane = g.data() + static_cast<size_t>(oc) * OH * OW;
    double bs = 0.0;
    for (int i = 0; i < OH * OW; ++i) bs += gplane[i];
    db[oc] += bs;
    for (int ic = 0; ic < l.in_ch; ++ic) {
      const double* xplane = x.data() + static_cast<size_t>(ic) * H * W;
      double* dxplane = dx.data() + static_cast<size_t>(ic) * H * W;
      const double* wk = w.data() + (static_cast<size_t>(oc) * l.in_ch + ic) * K * K;
      double* dwk = dw.data() + (static_cast<size_t>(oc) * l.in_ch + ic) * K * K;
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const double wv = wk[ky * K + kx];
          double dws = 0.0;
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * S - P + ky;
            if (iy < 0 || iy >= H) continue;
            const double* xrow = xplane + static_cast<size_t>(iy) * W;
            double* dxrow = dxplane + static_cast<size_t>(iy) * W;
            const double* grow = gplane + static_cast<size_t>(oy) * OW;
            for (int ox = 0; ox < OW; ++ox) {
              const int ix = ox * S - P + kx;
              if (ix < 0 || ix >= W) continue;
              dws += grow[ox] * xrow[ix];
              dxrow[ix] += wv * grow[ox];
            }
          }
          dwk[ky * K + kx] += dws;
        }
      }
    }
  }
}

void tconv2d_forward(const LayerSpec& l, const Tensor& w, const Tensor& b,
                     const Tensor& x, Tensor& y) {
  const int H = x.dim(1), W = x.dim(2);
  const int K = l.kernel, S = l.stride, P = l.pad;
  const int OH = (H - 1) * S - 2 * P + K;
  const int OW = (W - 1) * S - 2 * P + K;
  y = Tensor({l.out_ch, OH, OW});
  for (int oc = 0; oc < l.out_ch; ++oc) {
    double* yplane = y.data() + static_cast<size_t>(oc) * OH * OW;
    for (int i = 0; i < OH * OW; ++i) yplane[i] = b[oc];
  }
  for (int ic = 0; ic < l.in_ch; ++ic) {
    const double* xplane = x.data() + static_cast<size_t>(ic) * H * W;
    for (int oc = 0; oc < l.out_ch; ++oc) {
      double* yplane = y.data() + static_cast<size_t>(oc) * OH * OW;
      const double* wk = w.data() + (static_cast<size_t>(ic) * l.out_ch + oc) * K * K;
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const double wv = wk[ky * K + kx];
          for (int iy = 0; iy < H; ++iy) {
            const int oy = iy * S - P + ky;
            if (oy < 0 || oy >= OH) continue;
            const double* xrow = xplane + static_cast<size_t>(iy) * W;
            double* yrow = yplane + static_cast<size_t>(oy) * OW;
            for (int ix = 0; ix < W; ++ix) {
              const int ox = ix * S - P + kx;
              if (ox < 0 || ox >= OW) continue;
              yrow[ox] += wv * xrow[ix];
            }
          }
        }
      }
    }
  }
}

void tconv2d_backward(const LayerSpec& l, const Tensor& w, const Tensor& x,
                      const Tensor& g, Tensor& dw, Tensor& db, Tensor& dx) {
  const int H = x.dim(1), W = x.dim(2);
  const int K = l.kernel, S = l.stride, P = l.pad;
  const int OH = g.dim(1), OW = g.dim(2);
  dx = Tensor({l.in_ch, H, W});
  for (int oc = 0; oc < l.out_ch; ++oc) {
    const double* gplane = g.data() + static_cast<size_t>(oc) * OH * OW;
    double bs = 0.0;
    for (int i = 0; i < OH * OW; ++i) bs += gplane[i];
    db[oc] += bs;
  }
  for (int ic = 0; ic < l.in_ch; ++ic) {
    const double* xplane = x.data() + static_cast<size_t>(ic) * H * W;
    double* dxplane = dx.data() + static_cast<size_t>(ic) * H * W;
    for (int oc = 0; oc < l.out_ch; ++oc) {
      const double* gplane = g.data() + static_cast<size_t>(oc) * OH * OW;
      const double* wk = w.data() + (static_cast<size_t>(ic) * l.out_ch + oc) * K * K;
      double* dwk = dw.data() + (static_cast<size_t>(ic) * l.out_ch + oc) * K * K;
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const double wv = wk[ky * K + kx];
          double dws = 0.0;
          for (int iy = 0; iy < H; ++iy) {
            const int oy = iy * S - P + ky;
            if (oy < 0 || oy >= OH) continue;
            const double* xrow = xplane + static_cast<size_t>(iy) * W;
            double* dxrow = dxplane + static_cast<size_t>(iy) * W;
            const double* grow = gplane + static_cast<size_t>(oy) * OW;
            for (int ix = 0; ix < W; ++ix) {
              const int ox = ix * S - P + kx;
              if (ox < 0 || ox >= OW) continue;
              dws += xrow[ix] * grow[ox];
              dxrow[ix] += wv * grow[ox];
            }
          }
          dwk[ky * K + kx] += dws;
        }
      }
    }
  }
}

// ---- chain runner ----

struct ChainCtx {
  const ModelParams* params = nullptr;
  int time_index = -1;
  double kink_margin = std::numeric_limits<double>::infinity();
};

Tensor chain_forward(const std::vector<LayerSpec>& spec, ChainCtx& ctx, size_t& pi,
                     const Tensor& input, std::vector<Tape::LayerRec>& recs) {
  recs.resize(spec.size());
  Tensor cur = input;
  for (size_t li = 0; li < spec.size(); ++li) {
    const LayerSpec& l = spec[li];
    Tape::LayerRec& rec = recs[li];
    Tensor next;
    switch (l.kind) {
      case LayerKind::kDense: {
        const Tensor& w = ctx.params->tensors[pi];
        const Tensor& b = ctx.params->tensors[pi + 1];
        rec.input = cur;
        dense_forward(l, w, b, cur, next);
        pi += 2;
        break;
      }
      case LayerKind::kConv2d: {
        const Tensor& w = ctx.params->tensors[pi];
        const Tensor& b = ctx.params->tensors[pi + 1];
        rec.input = cur;
        conv2d_forward(l, w, b, cur, next);
        pi += 2;
        break;
      }
      case LayerKind::kTConv2d: {
        const Tensor& w = ctx.params->tensors[pi];
        const Tensor& b = ctx.params->tensors[pi + 1];
        rec.input = cur;
        tconv2d_forward(l, w, b, cur, next);
        pi += 2;
        break;
      }
      case LayerKind::kRelu: {
        rec.input = cur;
        next = cur;
        for (size_t i = 0; i < next.size(); ++i) {
          ctx.kink_margin = std::min(ctx.kink_margin, std::fabs(next[i]));
          if (next[i] < 0) next[i] = 0;
        }
        break;
      }
      case LayerKind::kLeakyRelu: {
        rec.input = cur;
        next = cur;
        for (size_t i = 0; i < next.size(); ++i) {
          ctx.kink_margin = std::min(ctx.kink_margin, std::fabs(next[i]));
          if (next[i] < 0) next[i] *= l.slope;
        }
        break;
      }
      case LayerKind::kTanh: {
        next = cur;
        for (size_t i = 0; i < next.size(); ++i) next[i] = std::tanh(next[i]);
        rec.extra = next;  // saved output
        break;
      }
      case LayerKind::kGroupNorm: {
        const Tensor& gamma = ctx.params->tensors[pi];
        const Tensor& beta = ctx.params->tensors[pi + 1];
        rec.input = cur;
        const int C = cur.dim(0), H = cur.dim(1), W = cur.dim(2);
        const int G = l.groups, gs = C / G;
        const size_t plane = static_cast<size_t>(H) * W;
        const size_t n = static_cast<size_t>(gs) * plane;
        next = Tensor({C, H, W});
        rec.extra = Tensor({G, 2});  // per-group (mean, inv_std)
        for (int g = 0; g < G; ++g) {
          const double* xs = cur.data() + static_cast<size_t>(g) * n;
          double mu = 0.0;
          for (size_t i = 0; i < n; ++i) mu += xs[i];
          mu /= static_cast<double>(n);
          double var = 0.0;
          for (size_t i = 0; i < n; ++i) {
            const double d = xs[i] - mu;
            var += d * d;
          }
          var /= static_cast<double>(n);
          const double inv = 1.0 / std::sqrt(var + kGroupNormEps);
          rec.extra[static_cast<size_t>(g) * 2] = mu;
          rec.extra[static_cast<size_t>(g) * 2 + 1] = inv;
          for (int cc = 0; cc < gs; ++cc) {
            const int c = g * gs + cc;
            const double* xr = cur.data() + static_cast<size_t>(c) * plane;
            double* yr = next.data() + static_cast<size_t>(c) * plane;
            for (size_t i = 0; i < plane; ++i)
              yr[i] = gamma[c] * (xr[i] - mu) * inv + beta[c];
          }
        }
        pi += 2;
        break;
      }
      case LayerKind::kResidual: {
        rec.input = cur;
        Tensor body_out = chain_forward(l.body, ctx, pi, cur, rec.body);
        next = cur;
        next += body_out;
        break;
      }
      case LayerKind::kMaxPool: {
        rec.input = cur;
        const int C = cur.dim(0), H = cur.dim(1), W = cur.dim(2);
        const int K = l.kernel, S = l.stride;
        const int OH = (H - K) / S + 1, OW = (W - K) / S + 1;
        next = Tensor({C, OH, OW});
        rec.extra = Tensor({C, OH, OW});  // flat argmax within channel plane
        for (int c = 0; c < C; ++c) {
          const double* xp = cur.data() + static_cast<size_t>(c) * H * W;
          for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
              double best = -std::numeric_limits<double>::infinity();
              double second = best;
              int argbest = 0;
              for (int ky = 0; ky < K; ++ky) {
                for (int kx = 0; kx < K; ++kx) {
                  const int iy = oy * S + ky, ix = ox * S + kx;
                  const double v = xp[iy * W + ix];
                  if (v > best) {
                    second = best;
                    best = v;
                    argbest = iy * W + ix;
                  } else if (v > second) {
                    second = v;
                  }
                }
              }
              if (K > 1) ctx.kink_margin = std::min(ctx.kink_margin, best - second);
              next.at(c, oy, ox) = best;
              rec.extra.at(c, oy, ox) = static_cast<double>(argbest);
            }
          }
        }
        break;
      }
      case LayerKind::kTimeEmbed: {
        require(ctx.time_index >= 1, "model_forward: chain has a time embedding but no time index given");
        const Tensor& w = ctx.params->tensors[pi];
        const Tensor& b = ctx.params->tensors[pi + 1];
        rec.input = cur;
        Tensor emb({l.emb_dim});
        sinusoidal_features(ctx.time_index, l.emb_dim, emb);
        rec.extra = emb;
        const int C = cur.dim(0), H = cur.dim(1), W = cur.dim(2);
        const size_t plane = static_cast<size_t>(H) * W;
        // v = W emb + b; first C entries scale, last C shift
        Tensor v({2 * C});
        for (int j = 0; j < 2 * C; ++j) {
          double s = b[j];
          const double* wr = w.data() + static_cast<size_t>(j) * l.emb_dim;
          for (int e = 0; e < l.emb_dim; ++e) s += wr[e] * emb[e];
          v[j] = s;
        }
        rec.extra2 = v;
        next = Tensor({C, H, W});
        for (int c = 0; c < C; ++c) {
          const double* xr = cur.data() + static_cast<size_t>(c) * plane;
          double* yr = next.data() + static_cast<size_t>(c) * plane;
          const double gain = 1.0 + v[c];
          const double shift = v[C + c];
          for (size_t i = 0; i < plane; ++i) yr[i] = xr[i] * gain + shift;
        }
        pi += 2;
        break;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

void chain_backward(const std::vector<LayerSpec>& spec, const ModelParams& params,
                    size_t pi_end, const std::vector<Tape::LayerRec>& recs,
                    const Tensor& upstream, ModelParams& grads, Tensor& input_grad) {
  Tensor g = upstream;
  size_t pi = pi_end;
  for (size_t ri = spec.size(); ri-- > 0;) {
    const LayerSpec& l = spec[ri];
    const Tape::LayerRec& rec = recs[ri];
    pi -= static_cast<size_t>(param_count(l));
    Tensor gin;
    switch (l.kind) {
      case LayerKind::kDense: {
        const Tensor& w = params.tensors[pi];
        Tensor& dw = grads.tensors[pi];
        Tensor& db = grads.tensors[pi + 1];
        const Tensor& x = rec.input;
        gin = Tensor(x.shape());
        for (int o = 0; o < l.out_units; ++o) {
          const double go = g[o];
          db[o] += go;
          const double* wr = w.data() + static_cast<size_t>(o) * l.in_units;
          double* dwr = dw.data() + static_cast<size_t>(o) * l.in_units;
          for (int i = 0; i < l.in_units; ++i) {
            dwr[i] += go * x[i];
            gin[i] += go * wr[i];
          }
        }
        break;
      }
      case LayerKind::kConv2d: {
        conv2d_backward(l, params.tensors[pi], rec.input, g, grads.tensors[pi],
                        grads.tensors[pi + 1], gin);
        break;
      }
      case LayerKind::kTConv2d: {
        tconv2d_backward(l, params.tensors[pi], rec.input, g, grads.tensors[pi],
                         grads.tensors[pi + 1], gin);
        break;
      }
      case LayerKind::kRelu: {
        gin = g;
        const Tensor& x = rec.input;
        for (size_t i = 0; i < gin.size(); ++i)
          if (x[i] <= 0) gin[i] = 0;
        break;
      }
      case LayerKind::kLeakyRelu: {
        gin = g;
        const Tensor& x = rec.input;
        for (size_t i = 0; i < gin.size(); ++i)
          if (x[i] <= 0) gin[i] *= l.slope;
        break;
      }
      case LayerKind::kTanh: {
        gin = g;
        const Tensor& y = rec.extra;
        for (size_t i = 0; i < gin.size(); ++i) gin[i] *= 1.0 - y[i] * y[i];
        break;
      }
      case LayerKind::kGroupNorm: {
        const Tensor& gamma = params.tensors[pi];
        Tensor& dgamma = grads.tensors[pi];
        Tensor& dbeta = grads.tensors[pi + 1];
        const Tensor& x = rec.input;
        const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
        const int G = l.groups, gs = C / G;
        const size_t plane = static_cast<size_t>(H) * W;
        const size_t n = static_cast<size_t>(gs) * plane;
        gin = Tensor({C, H, W});
        for (int gr = 0; gr < G; ++gr) {
          const double mu = rec.extra[static_cast<size_t>(gr) * 2];
          const double inv = rec.extra[static_cast<size_t>(gr) * 2 + 1];
          // gh = upstream * gamma; reduce mean(gh) and mean(gh * xhat)
          double sum_gh = 0.0, sum_ghx = 0.0;
          for (int cc = 0; cc < gs; ++cc) {
            const int c = gr * gs + cc;
            const double* xr = x.data() + static_cast<size_t>(c) * plane;
            const double* gr_ = g.data() + static_cast<size_t>(c) * plane;
            double dgc = 0.0, dbc = 0.0;
            for (size_t i = 0; i < plane; ++i) {
              const double xh = (xr[i] - mu) * inv;
              const double gh = gr_[i] * gamma[c];
              sum_gh += gh;
              sum_ghx += gh * xh;
              dgc += gr_[i] * xh;
              dbc += gr_[i];
            }
            dgamma[c] += dgc;
            dbeta[c] += dbc;
          }
          const double mean_gh = sum_gh / static_cast<double>(n);
          const double mean_ghx = sum_ghx / static_cast<double>(n);
          for (int cc = 0; cc < gs; ++cc) {
            const int c = gr * gs + cc;
            const double* xr = x.data() + static_cast<size_t>(c) * plane;
            const double* gr_ = g.data() + static_cast<size_t>(c) * plane;
            double* dr = gin.data() + static_cast<size_t>(c) * plane;
            for (size_t i = 0; i < plane; ++i) {
              const double xh = (xr[i] - mu) * inv;
              const double gh = gr_[i] * gamma[c];
              dr[i] = inv * (gh - mean_gh - xh * mean_ghx);
            }
          }
        }
        break;
      }
      case LayerKind::kResidual: {
        Tensor body_gin;
        chain_backward(l.body, params, pi + static_cast<size_t>(param_count(l)),
                       rec.body, g, grads, body_gin);
        gin = g;
        gin += body_gin;
        break;
      }
      case LayerKind::kMaxPool: {
        const Tensor& x = rec.input;
        const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
        const int OH = g.dim(1), OW = g.dim(2);
        gin = Tensor({C, H, W});
        for (int c = 0; c < C; ++c) {
          double* dp = gin.data() + static_cast<size_t>(c) * H * W;
          for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox)
              dp[static_cast<int>(rec.extra.at(c, oy, ox))] += g.at(c, oy, ox);
        }
        break;
      }
      case LayerKind::kTimeEmbed: {
        Tensor& dw = grads.tensors[pi];
        Tensor& db = grads.tensors[pi + 1];
        const Tensor& emb = rec.extra;
        const Tensor& v = rec.extra2;
        const Tensor& x = rec.input;
        const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
        const size_t plane = static_cast<size_t>(H) * W;
        gin = Tensor({C, H, W});
        Tensor dv({2 * C});
        for (int c = 0; c < C; ++c) {
          const double* xr = x.data() + static_cast<size_t>(c) * plane;
          const double* gr = g.data() + static_cast<size_t>(c) * plane;
          double* dr = gin.data() + static_cast<size_t>(c) * plane;
          const double gain = 1.0 + v[c];
          double dscale = 0.0, dshift = 0.0;
          for (size_t i = 0; i < plane; ++i) {
            dr[i] = gr[i] * gain;
            dscale += gr[i] * xr[i];
            dshift += gr[i];
          }
          dv[c] = dscale;
          dv[C + c] = dshift;
        }
        for (int j = 0; j < 2 * C; ++j) {
          db[j] += dv[j];
          double* dwr = dw.data() + static_cast<size_t>(j) * l.emb_dim;
          for (int e = 0; e < l.emb_dim; ++e) dwr[e] += dv[j] * emb[e];
        }
        break;
      }
    }
    g = std::move(gin);
  }
  input_grad = std::move(g);
}

}  // namespace

// ---- LayerSpec factories ----

LayerSpec LayerSpec::dense(int in_units, int out_units) {
  LayerSpec l;
  l.kind = LayerKind::kDense;
  l.in_units = in_units;
  l.out_units = out_units;
  return l;
}
LayerSpec LayerSpec::conv2d(int in_ch, int out_ch, int kernel, int stride, int pad) {
  LayerSpec l;
  l.kind = LayerKind::kConv2d;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.kernel = kernel;
  l.stride = stride;
  l.pad = pad;
  return l;
}
LayerSpec LayerSpec::tconv2d(int in_ch, int out_ch, int kernel, int stride, int pad) {
  LayerSpec l = conv2d(in_ch, out_ch, kernel, stride, pad);
  l.kind = LayerKind::kTConv2d;
  return l;
}
LayerSpec LayerSpec::relu() {
  LayerSpec l;
  l.kind = LayerKind::kRelu;
  return l;
}
LayerSpec LayerSpec::leaky_relu(double slope) {
  LayerSpec l;
  l.kind = LayerKind::kLeakyRelu;
  l.slope = slope;
  return l;
}
LayerSpec LayerSpec::tanh_act() {
  LayerSpec l;
  l.kind = LayerKind::kTanh;
  return l;
}
LayerSpec LayerSpec::group_norm(int groups) {
  LayerSpec l;
  l.kind = LayerKind::kGroupNorm;
  l.groups = groups;
  return l;
}
LayerSpec LayerSpec::residual(std::vector<LayerSpec> body) {
  LayerSpec l;
  l.kind = LayerKind::kResidual;
  l.body = std::move(body);
  return l;
}
LayerSpec LayerSpec::max_pool(int kernel, int stride) {
  LayerSpec l;
  l.kind = LayerKind::kMaxPool;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}
LayerSpec LayerSpec::time_embed(int emb_dim) {
  LayerSpec l;
  l.kind = LayerKind::kTimeEmbed;
  l.emb_dim = emb_dim;
  return l;
}

// ---- ModelParams ----

void ModelParams::zero() {
  for (auto& t : tensors) t.fill(0.0);
}

ModelParams ModelParams::like_zeros() const {
  ModelParams out;
  out.names = names;
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors) out.tensors.emplace_back(t.shape());
  return out;
}

const Tensor& ModelParams::find(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  fail("ModelParams: no tensor named '" + name + "'");
}

// ---- shape inference ----

std::vector<int> layer_output_shape(const LayerSpec& l, const std::vector<int>& in) {
  switch (l.kind) {
    case LayerKind::kDense:
      require(static_cast<int>(shape_numel(in)) == l.in_units,
              "dense layer expects " + std::to_string(l.in_units) + " inputs");
      return {l.out_units};
    case LayerKind::kConv2d: {
      require(in.size() == 3 && in[0] == l.in_ch, "conv2d input channel mismatch");
      const int oh = (in[1] + 2 * l.pad - l.kernel);
      const int ow = (in[2] + 2 * l.pad - l.kernel);
      require(oh >= 0 && ow >= 0, "conv2d kernel larger than its padded input");
      return {l.out_ch, oh / l.stride + 1, ow / l.stride + 1};
    }
    case LayerKind::kTConv2d: {
      require(in.size() == 3 && in[0] == l.in_ch, "tconv2d input channel mismatch");
      const int oh = (in[1] - 1) * l.stride - 2 * l.pad + l.kernel;
      const int ow = (in[2] - 1) * l.stride - 2 * l.pad + l.kernel;
      require(oh >= 1 && ow >= 1, "tconv2d output collapses");
      return {l.out_ch, oh, ow};
    }
    case LayerKind::kRelu:
    case LayerKind::kLeakyRelu:
    case LayerKind::kTanh:
      return in;
    case LayerKind::kGroupNorm:
      require(in.size() == 3 && in[0] % l.groups == 0, "groupnorm groups must divide channels");
      return in;
    case LayerKind::kResidual: {
      std::vector<int> s = in;
      for (size_t i = 0; i < l.body.size(); ++i) s = layer_output_shape(l.body[i], s);
      require(s == in, "residual body must preserve shape");
      return in;
    }
    case LayerKind::kMaxPool: {
      require(in.size() == 3, "maxpool expects CHW input");
      const int oh = (in[1] - l.kernel), ow = (in[2] - l.kernel);
      require(oh >= 0 && ow >= 0, "maxpool kernel larger than its input");
      return {in[0], oh / l.stride + 1, ow / l.stride + 1};
    }
    case LayerKind::kTimeEmbed:
      require(in.size() == 3, "time embedding expects CHW input");
      require(l.emb_dim >= 2 && l.emb_dim % 2 == 0, "time embedding dim must be even");
      return in;
  }
  fail("unknown layer kind");
}

// ---- Model ----

Model::Model(std::vector<LayerSpec> spec, std::vector<int> input_shape)
    : spec_(std::move(spec)), input_shape_(std::move(input_shape)) {
  std::vector<int> s = input_shape_;
  for (size_t i = 0; i < spec_.size(); ++i) {
    try {
      s = layer_output_shape(spec_[i], s);
    } catch (const Error& e) {
      fail("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  output_shape_ = s;
  needs_time_ = chain_has_time(spec_);

  std::vector<std::vector<int>> shapes;
  std::vector<int> cur = input_shape_;
  for (size_t i = 0; i < spec_.size(); ++i) {
    collect_param_shapes(spec_[i], "l" + std::to_string(i), cur, params.names, shapes);
    cur = layer_output_shape(spec_[i], cur);
  }
  for (const auto& sh : shapes) params.tensors.emplace_back(sh);
}

void Model::init_params(Rng& rng) {
  for (size_t i = 0; i < params.count(); ++i) {
    Tensor& t = params.tensors[i];
    const std::string& name = params.names[i];
    auto has_suffix = [&](const std::string& s) {
      return name.size() >= s.size() && name.substr(name.size() - s.size()) == s;
    };
    if (has_suffix(".gamma")) {
      t.fill(1.0);
    } else if (has_suffix(".beta") || has_suffix(".b") || has_suffix(".tw") ||
               has_suffix(".tb")) {
      // biases zero; time modulation zero so it starts as the identity
      t.fill(0.0);
    } else {
      // He initialization: fan-in is the product of all dims but the first
      // (dense: in; conv: in*k*k; tconv weight is (in,out,k,k) so fan-in is
      // approximated the same way).
      size_t fan_in = 1;
      for (size_t d = 1; d < t.shape().size(); ++d) fan_in *= static_cast<size_t>(t.shape()[d]);
      const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (size_t k = 0; k < t.size(); ++k) t[k] = rng.gaussian() * std;
    }
  }
}

// ---- forward / backward entry points ----

Tensor model_forward(const Model& m, const Tensor& input, int time_index, Tape& tape) {
  require(input.shape() == m.input_shape(),
          "model_forward: input shape " + input.shape_str() + " does not match model input");
  if (m.needs_time())
    require(time_index >= 1, "model_forward: time index required by this chain");
  else
    require(time_index < 0, "model_forward: chain has no time embedding, do not pass a time index");
  ChainCtx ctx;
  ctx.params = &m.params;
  ctx.time_index = time_index;
  size_t pi = 0;
  tape.output = chain_forward(m.spec(), ctx, pi, input, tape.recs);
  tape.time_index = time_index;
  tape.kink_margin = ctx.kink_margin;
  tape.valid = true;
  tape.output.ensure_finite("model_forward");
  return tape.output;
}

Tensor model_forward(const Model& m, const Tensor& input, int time_index) {
  Tape tape;
  return model_forward(m, input, time_index, tape);
}

void model_backward(const Model& m, const Tape& tape, const Tensor& upstream,
                    ModelParams& param_grads, Tensor& input_grad) {
  require(tape.valid, "model_backward: tape not produced by model_forward");
  require(upstream.shape() == m.output_shape(),
          "model_backward: upstream gradient shape mismatch");
  require(param_grads.count() == m.params.count(),
          "model_backward: gradient container mismatch");
  chain_backward(m.spec(), m.params, m.params.count(), tape.recs, upstream,
                 param_grads, input_grad);
}

Tensor model_forward_prefix(const Model& m, const Tensor& input, int n_layers) {
  require(n_layers >= 0 && n_layers <= static_cast<int>(m.spec().size()),
          "model_forward_prefix: bad layer count");
  require(!m.needs_time(), "model_forward_prefix: time-conditioned chains unsupported");
  std::vector<LayerSpec> prefix(m.spec().begin(), m.spec().begin() + n_layers);
  ChainCtx ctx;
  ctx.params = &m.params;
  size_t pi = 0;
  std::vector<Tape::LayerRec> recs;
  return chain_forward(prefix, ctx, pi, input, recs);
}

}  // namespace uibd
