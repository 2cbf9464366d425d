#include "fetalsep/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fetalsep/error.hpp"
#include "vecmath.hpp"

namespace fetalsep::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

// Output positions t whose tap j lands inside [0, length).
struct TapRange {
  std::size_t lo, hi;
};

TapRange tap_range(const ConvGeometry& g, std::size_t length, std::size_t j) {
  const auto pad = static_cast<std::ptrdiff_t>(g.kernel / 2);
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto jj = static_cast<std::ptrdiff_t>(j);
  const auto len = static_cast<std::ptrdiff_t>(length);
  const auto lout = static_cast<std::ptrdiff_t>(g.out_length(length));
  std::ptrdiff_t lo = pad > jj ? (pad - jj + s - 1) / s : 0;
  std::ptrdiff_t hi = (len + pad - jj + s - 1) / s;
  lo = std::min(lo, lout);
  hi = std::clamp(hi, lo, lout);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// cols(ci * K + j, t) = x[n, ci, t * stride + j - pad], zero outside
void im2col(std::span<const double> xs, const ConvGeometry& g, std::size_t length, RowMatrix& cols) {
  const std::size_t lout = g.out_length(length);
  const std::size_t pad = g.kernel / 2;
  cols.resize(static_cast<Eigen::Index>(g.in_ch * g.kernel), static_cast<Eigen::Index>(lout));
  for (std::size_t j = 0; j < g.kernel; ++j) {
    const auto [lo, hi] = tap_range(g, length, j);
    for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
      const double* row_in = xs.data() + ci * length;
      double* dst = cols.data() + (ci * g.kernel + j) * lout;
      std::fill(dst, dst + lo, 0.0);
      std::fill(dst + hi, dst + lout, 0.0);
      const double* src = row_in + (lo * g.stride + j - pad);
      if (g.stride == 1) {
        std::copy(src, src + (hi - lo), dst + lo);
      } else {
        for (std::size_t t = lo; t < hi; ++t, src += g.stride) dst[t] = *src;
      }
    }
  }
}

void col2im(const RowMatrix& cols, const ConvGeometry& g, std::size_t length, std::span<double> gx) {
  const std::size_t lout = g.out_length(length);
  const std::size_t pad = g.kernel / 2;
  for (std::size_t j = 0; j < g.kernel; ++j) {
    const auto [lo, hi] = tap_range(g, length, j);
    for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
      const double* src = cols.data() + (ci * g.kernel + j) * lout;
      double* dst = gx.data() + ci * length + (lo * g.stride + j - pad);
      for (std::size_t t = lo; t < hi; ++t, dst += g.stride) *dst += src[t];
    }
  }
}

// Eight independent lanes: vectorizes without reassociation, and the summation
// order depends only on n. Eigen's reductions peel by runtime alignment, which
// made training results vary with heap addresses.
double dot_fixed(const double* a, const double* b, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// Few output channels: im2col would cost more than the arithmetic.
bool use_direct(const ConvGeometry& g) { return g.out_ch <= 4; }

// tap range j in [lo, hi) that lands inside the signal for output position t
TapRange taps_at(const ConvGeometry& g, std::size_t length, std::size_t t) {
  const std::size_t pad = g.kernel / 2;
  const std::size_t start = t * g.stride;  // input index of tap j is start + j - pad
  const std::size_t lo = pad > start ? pad - start : 0;
  const std::size_t hi = std::min(g.kernel, length + pad - start);
  return {lo, std::max(lo, hi)};
}

void direct_forward(std::span<const double> xs, std::span<const double> weight,
                    std::span<const double> bias, const ConvGeometry& g, std::size_t length,
                    std::span<double> ys) {
  const std::size_t lout = g.out_length(length);
  const std::size_t pad = g.kernel / 2;
  for (std::size_t co = 0; co < g.out_ch; ++co) {
    double* y = ys.data() + co * lout;
    for (std::size_t t = 0; t < lout; ++t) {
      const auto [lo, hi] = taps_at(g, length, t);
      const std::size_t base = t * g.stride + lo - pad;
      double acc = bias[co];
      for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
        const double* x = xs.data() + ci * length + base;
        const double* w = weight.data() + (co * g.in_ch + ci) * g.kernel + lo;
        acc += dot_fixed(w, x, hi - lo);
      }
      y[t] = acc;
    }
  }
}

void direct_backward(std::span<const double> xs, std::span<const double> weight, const ConvGeometry& g,
                     std::size_t length, std::span<const double> gos, std::span<double> gw,
                     std::span<double> gb, std::span<double> gxs) {
  const std::size_t lout = g.out_length(length);
  const std::size_t pad = g.kernel / 2;
  for (std::size_t co = 0; co < g.out_ch; ++co) {
    const double* go = gos.data() + co * lout;
    for (std::size_t t = 0; t < lout; ++t) {
      const double d = go[t];
      gb[co] += d;
      const auto [lo, hi] = taps_at(g, length, t);
      const std::size_t base = t * g.stride + lo - pad;
      for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
        const double* x = xs.data() + ci * length + base;
        double* gx = gxs.data() + ci * length + base;
        const std::size_t woff = (co * g.in_ch + ci) * g.kernel + lo;
        const double* w = weight.data() + woff;
        double* gwr = gw.data() + woff;
        for (std::size_t j = 0; j < hi - lo; ++j) {
          gwr[j] += d * x[j];
          gx[j] += d * w[j];
        }
      }
    }
  }
}

void check_geometry(const Tensor& x, std::span<const double> weight, const ConvGeometry& g) {
  require(g.kernel % 2 == 1, "conv1d kernel must be odd");
  require(g.stride == 1 || g.stride == 2, "conv1d stride must be 1 or 2");
  require(x.channels() == g.in_ch, "conv1d input channels do not match the weights");
  require(weight.size() == g.weight_size(), "conv1d weight size does not match the geometry");
}

}  // namespace

Tensor conv1d_forward(const Tensor& x, std::span<const double> weight,
                      std::span<const double> bias, const ConvGeometry& g) {
  check_geometry(x, weight, g);
  require(bias.size() == g.out_ch, "conv1d bias size does not match out_ch");
  const std::size_t lout = g.out_length(x.length());
  Tensor y(x.batch(), g.out_ch, lout);
  if (use_direct(g)) {
    for (std::size_t n = 0; n < x.batch(); ++n) direct_forward(x.sample(n), weight, bias, g, x.length(), y.sample(n));
    return y;
  }
  ConstMapMatrix w(weight.data(), static_cast<Eigen::Index>(g.out_ch),
                   static_cast<Eigen::Index>(g.in_ch * g.kernel));
  Eigen::Map<const Eigen::VectorXd> b(bias.data(), static_cast<Eigen::Index>(g.out_ch));
  RowMatrix cols;
  for (std::size_t n = 0; n < x.batch(); ++n) {
    im2col(x.sample(n), g, x.length(), cols);
    MapMatrix out(y.sample(n).data(), static_cast<Eigen::Index>(g.out_ch),
                  static_cast<Eigen::Index>(lout));
    out.noalias() = w * cols;
    out.colwise() += b;
  }
  return y;
}

Conv1dGrads conv1d_backward(const Tensor& x, std::span<const double> weight,
                            const ConvGeometry& g, const Tensor& grad_out) {
  check_geometry(x, weight, g);
  const std::size_t lout = g.out_length(x.length());
  require(grad_out.batch() == x.batch() && grad_out.channels() == g.out_ch &&
              grad_out.length() == lout,
          "conv1d grad_out shape does not match the forward output");
  Conv1dGrads grads{Tensor(x.batch(), x.channels(), x.length()),
                    std::vector<double>(g.weight_size(), 0.0), std::vector<double>(g.out_ch, 0.0)};
  if (use_direct(g)) {
    for (std::size_t n = 0; n < x.batch(); ++n) {
      direct_backward(x.sample(n), weight, g, x.length(), grad_out.sample(n), grads.weight, grads.bias,
                      grads.x.sample(n));
    }
    return grads;
  }
  ConstMapMatrix w(weight.data(), static_cast<Eigen::Index>(g.out_ch),
                   static_cast<Eigen::Index>(g.in_ch * g.kernel));
  MapMatrix gw(grads.weight.data(), static_cast<Eigen::Index>(g.out_ch),
               static_cast<Eigen::Index>(g.in_ch * g.kernel));
  RowMatrix cols;
  RowMatrix gcols;
  for (std::size_t n = 0; n < x.batch(); ++n) {
    ConstMapMatrix go(grad_out.sample(n).data(), static_cast<Eigen::Index>(g.out_ch),
                      static_cast<Eigen::Index>(lout));
    im2col(x.sample(n), g, x.length(), cols);
    gw.noalias() += go * cols.transpose();
    for (std::size_t co = 0; co < g.out_ch; ++co) {
      const double* row = grad_out.sample(n).data() + co * lout;
      double acc = 0.0;
      for (std::size_t t = 0; t < lout; ++t) acc += row[t];
      grads.bias[co] += acc;
    }
    gcols.noalias() = w.transpose() * go;
    col2im(gcols, g, x.length(), grads.x.sample(n));
  }
  return grads;
}

Tensor sine_forward(const Tensor& x, double omega) {
  Tensor y(x.batch(), x.channels(), x.length());
  detail::sin_scaled(x.data().data(), y.data().data(), x.size(), omega);
  return y;
}

Tensor sine_backward(const Tensor& x, double omega, const Tensor& grad_out) {
  require(x.same_shape(grad_out), "sine grad_out shape mismatch");
  Tensor g = grad_out;
  detail::mul_cos_scaled(x.data().data(), g.data().data(), g.size(), omega);
  return g;
}

Tensor leaky_relu_forward(const Tensor& x, double slope) {
  Tensor y = x;
  for (double& v : y.data()) v = v >= 0.0 ? v : slope * v;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, double slope, const Tensor& grad_out) {
  require(x.same_shape(grad_out), "leaky_relu grad_out shape mismatch");
  Tensor g = grad_out;
  auto xs = x.data();
  auto gs = g.data();
  for (std::size_t i = 0; i < gs.size(); ++i) gs[i] *= xs[i] >= 0.0 ? 1.0 : slope;
  return g;
}

namespace {

void project(const Tensor& x, std::span<const double> w, std::span<const double> b,
             std::size_t dim, Tensor& out) {
  out = Tensor(x.batch(), dim, x.length());
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t j = 0; j < dim; ++j) {
      for (std::size_t t = 0; t < x.length(); ++t) {
        double acc = b[j];
        for (std::size_t c = 0; c < x.channels(); ++c) acc += w[j * x.channels() + c] * x(n, c, t);
        out(n, j, t) = acc;
      }
    }
  }
}

void project_backward(const Tensor& x, std::span<const double> w, const Tensor& grad,
                      std::vector<double>& gw, std::vector<double>& gb, Tensor& gx) {
  const std::size_t dim = grad.channels();
  gw.assign(dim * x.channels(), 0.0);
  gb.assign(dim, 0.0);
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t j = 0; j < dim; ++j) {
      for (std::size_t t = 0; t < x.length(); ++t) {
        const double g = grad(n, j, t);
        gb[j] += g;
        for (std::size_t c = 0; c < x.channels(); ++c) {
          gw[j * x.channels() + c] += g * x(n, c, t);
          gx(n, c, t) += w[j * x.channels() + c] * g;
        }
      }
    }
  }
}

}  // namespace

AttentionOutput attention_mask_forward(const Tensor& x, const AttentionWeights& w,
                                       double threshold, MaskEnergy energy) {
  require(x.length() >= 2, "attention needs at least two positions");
  require(x.channels() == w.in_ch, "attention input channels mismatch");
  require(w.wq.size() == w.dim * w.in_ch && w.bq.size() == w.dim &&
              w.wk.size() == w.dim * w.in_ch && w.bk.size() == w.dim &&
              w.wv.size() == w.dim * w.in_ch && w.bv.size() == w.dim,
          "attention projection sizes mismatch");
  const std::size_t B = x.batch();
  const std::size_t L = x.length();
  const std::size_t d = w.dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  AttentionOutput out;
  AttentionTrace& tr = out.trace;
  tr.x = x;
  tr.energy = energy;
  tr.threshold = threshold;
  project(x, w.wq, w.bq, d, tr.q);
  project(x, w.wk, w.bk, d, tr.k);
  project(x, w.wv, w.bv, d, tr.v);
  tr.context.assign(B * d, 0.0);
  tr.mean_out.assign(B * L, 0.0);
  tr.weight.assign(B * L, 1.0);
  tr.argmin.assign(B, 0);
  tr.argmax.assign(B, 0);
  tr.degenerate.assign(B, false);
  out.mask = Tensor(B, 1, L, 1.0);
  out.masked = x;

  std::vector<double> e(L);
  for (std::size_t n = 0; n < B; ++n) {
    // sum_s S[t,s] mean_c v[c,s] = q_t . (sum_s k_s vbar_s) / sqrt(d)
    double* ctx = tr.context.data() + n * d;
    for (std::size_t s = 0; s < L; ++s) {
      double vbar = 0.0;
      for (std::size_t c = 0; c < d; ++c) vbar += tr.v(n, c, s);
      vbar /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) ctx[j] += tr.k(n, j, s) * vbar;
    }
    for (std::size_t t = 0; t < L; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += tr.q(n, j, t) * ctx[j];
      acc *= inv_sqrt_d;
      tr.mean_out[n * L + t] = acc;
      e[t] = energy == MaskEnergy::ChannelMean ? acc : -acc * acc;
    }
    const auto [lo, hi] = std::minmax_element(e.begin(), e.end());
    tr.argmin[n] = static_cast<std::size_t>(lo - e.begin());
    tr.argmax[n] = static_cast<std::size_t>(hi - e.begin());
    const double range = *hi - *lo;
    const double scale = std::max(std::abs(*hi), std::abs(*lo));
    if (!(range > 1e-12 * scale) || range == 0.0) {
      tr.degenerate[n] = true;
      continue;
    }
    for (std::size_t t = 0; t < L; ++t) {
      const double wt = (e[t] - *lo) / range;
      tr.weight[n * L + t] = wt;
      const double m = wt >= threshold ? wt : 0.0;
      out.mask(n, 0, t) = m;
      for (std::size_t c = 0; c < x.channels(); ++c) out.masked(n, c, t) = x(n, c, t) * m;
    }
  }
  return out;
}

AttentionGrads attention_mask_backward(const AttentionTrace& tr, const AttentionWeights& w,
                                       const Tensor& grad_masked) {
  const Tensor& x = tr.x;
  require(grad_masked.same_shape(x), "attention grad shape mismatch");
  const std::size_t B = x.batch();
  const std::size_t C = x.channels();
  const std::size_t L = x.length();
  const std::size_t d = w.dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  AttentionGrads g;
  g.x = Tensor(B, C, L);
  Tensor gq(B, d, L), gk(B, d, L), gv(B, d, L);
  std::vector<double> gmean(L);

  for (std::size_t n = 0; n < B; ++n) {
    if (tr.degenerate[n]) {
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < L; ++t) g.x(n, c, t) = grad_masked(n, c, t);
      continue;
    }
    const double* wt = tr.weight.data() + n * L;
    const double* mean_out = tr.mean_out.data() + n * L;
    const double lo = tr.energy == MaskEnergy::ChannelMean
                          ? mean_out[tr.argmin[n]]
                          : -mean_out[tr.argmin[n]] * mean_out[tr.argmin[n]];
    const double hi = tr.energy == MaskEnergy::ChannelMean
                          ? mean_out[tr.argmax[n]]
                          : -mean_out[tr.argmax[n]] * mean_out[tr.argmax[n]];
    const double range = hi - lo;

    // d loss / d energy through the min-max normalization
    std::vector<double> ge(L, 0.0);
    double to_min = 0.0;
    double to_max = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const bool kept = wt[t] >= tr.threshold;
      const double m = kept ? wt[t] : 0.0;
      double gmask = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        g.x(n, c, t) += grad_masked(n, c, t) * m;
        gmask += grad_masked(n, c, t) * x(n, c, t);
      }
      const double gw = kept ? gmask : 0.0;
      ge[t] += gw / range;
      to_min += gw * (wt[t] - 1.0) / range;
      to_max -= gw * wt[t] / range;
    }
    ge[tr.argmin[n]] += to_min;
    ge[tr.argmax[n]] += to_max;

    for (std::size_t t = 0; t < L; ++t) {
      gmean[t] = tr.energy == MaskEnergy::ChannelMean ? ge[t] : -2.0 * mean_out[t] * ge[t];
    }

    const double* ctx = tr.context.data() + n * d;
    std::vector<double> gctx(d, 0.0);
    for (std::size_t t = 0; t < L; ++t) {
      const double gm = gmean[t] * inv_sqrt_d;
      for (std::size_t j = 0; j < d; ++j) {
        gq(n, j, t) = gm * ctx[j];
        gctx[j] += gm * tr.q(n, j, t);
      }
    }
    for (std::size_t s = 0; s < L; ++s) {
      double vbar = 0.0;
      for (std::size_t c = 0; c < d; ++c) vbar += tr.v(n, c, s);
      vbar /= static_cast<double>(d);
      double gvbar = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        gk(n, j, s) = gctx[j] * vbar;
        gvbar += gctx[j] * tr.k(n, j, s);
      }
      for (std::size_t c = 0; c < d; ++c) gv(n, c, s) = gvbar / static_cast<double>(d);
    }
  }

  project_backward(x, w.wq, gq, g.wq, g.bq, g.x);
  project_backward(x, w.wk, gk, g.wk, g.bk, g.x);
  project_backward(x, w.wv, gv, g.wv, g.bv, g.x);
  return g;
}

Tensor upsample2_forward(const Tensor& x) {
  const std::size_t L = x.length();
  Tensor y(x.batch(), x.channels(), 2 * L);
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      for (std::size_t i = 0; i < L; ++i) {
        const double next = i + 1 < L ? x(n, c, i + 1) : x(n, c, i);
        y(n, c, 2 * i) = x(n, c, i);
        y(n, c, 2 * i + 1) = 0.5 * (x(n, c, i) + next);
      }
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& grad_out) {
  require(grad_out.length() % 2 == 0, "upsample2 grad length must be even");
  const std::size_t L = grad_out.length() / 2;
  Tensor g(grad_out.batch(), grad_out.channels(), L);
  for (std::size_t n = 0; n < g.batch(); ++n) {
    for (std::size_t c = 0; c < g.channels(); ++c) {
      for (std::size_t i = 0; i < L; ++i) {
        const double mid = grad_out(n, c, 2 * i + 1);
        g(n, c, i) += grad_out(n, c, 2 * i) + 0.5 * mid;
        if (i + 1 < L) {
          g(n, c, i + 1) += 0.5 * mid;
        } else {
          g(n, c, i) += 0.5 * mid;
        }
      }
    }
  }
  return g;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - top);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

DenseSoftmaxOutput dense_softmax_forward(const Tensor& x, std::span<const double> weight,
                                         std::span<const double> bias, std::size_t classes) {
  const std::size_t features = x.channels() * x.length();
  require(weight.size() == classes * features, "dense weight does not match flattened input");
  require(bias.size() == classes, "dense bias size mismatch");
  DenseSoftmaxOutput out{std::vector<double>(x.batch() * classes), classes};
  std::vector<double> logits(classes);
  for (std::size_t n = 0; n < x.batch(); ++n) {
    auto xs = x.sample(n);
    for (std::size_t k = 0; k < classes; ++k) {
      double acc = bias[k];
      const double* wk = weight.data() + k * features;
      for (std::size_t f = 0; f < features; ++f) acc += wk[f] * xs[f];
      logits[k] = acc;
    }
    auto p = softmax(logits);
    std::copy(p.begin(), p.end(), out.probs.begin() + static_cast<std::ptrdiff_t>(n * classes));
  }
  return out;
}

DenseGrads dense_softmax_backward(const Tensor& x, std::span<const double> weight,
                                  const DenseSoftmaxOutput& out,
                                  std::span<const double> grad_probs) {
  const std::size_t classes = out.classes;
  const std::size_t features = x.channels() * x.length();
  require(grad_probs.size() == out.probs.size(), "dense grad size mismatch");
  DenseGrads g{Tensor(x.batch(), x.channels(), x.length()),
               std::vector<double>(classes * features, 0.0), std::vector<double>(classes, 0.0)};
  std::vector<double> glogit(classes);
  for (std::size_t n = 0; n < x.batch(); ++n) {
    const double* p = out.probs.data() + n * classes;
    const double* gp = grad_probs.data() + n * classes;
    double dot = 0.0;
    for (std::size_t k = 0; k < classes; ++k) dot += p[k] * gp[k];
    for (std::size_t k = 0; k < classes; ++k) glogit[k] = p[k] * (gp[k] - dot);
    auto xs = x.sample(n);
    auto gx = g.x.sample(n);
    for (std::size_t k = 0; k < classes; ++k) {
      g.bias[k] += glogit[k];
      const double* wk = weight.data() + k * features;
      double* gwk = g.weight.data() + k * features;
      for (std::size_t f = 0; f < features; ++f) {
        gwk[f] += glogit[k] * xs[f];
        gx[f] += glogit[k] * wk[f];
      }
    }
  }
  return g;
}

}  // namespace fetalsep::nn
