#include "fetalsep/signal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "fetalsep/error.hpp"
#include "fetalsep/filter.hpp"

namespace fetalsep {

void validate(const Signal& s) {
  if (s.fs <= 0) throw Error(ErrorCode::BadConfig, "sample rate must be positive");
  for (double v : s.samples) {
    if (!std::isfinite(v)) throw Error(ErrorCode::BadConfig, "signal contains non-finite samples");
  }
}

void PreprocessConfig::validate() const {
  if (target_fs <= 0) throw Error(ErrorCode::BadConfig, "target_fs must be positive");
  if (!(band_lo > 0.0) || !(band_lo < band_hi) || band_hi > target_fs / 2.0) {
    throw Error(ErrorCode::BadConfig, "band must satisfy 0 < lo < hi <= target_fs/2");
  }
  if (savgol_window % 2 == 0 || savgol_order < 0 || savgol_order >= savgol_window) {
    throw Error(ErrorCode::BadConfig, "savgol window must be odd and exceed the order");
  }
  if (truncate_s < 0.0) throw Error(ErrorCode::BadConfig, "truncate_s must be >= 0");
  if (window_len < 2) throw Error(ErrorCode::BadConfig, "window_len must be >= 2");
  if (train_stride < 1 || eval_stride < 1) throw Error(ErrorCode::BadConfig, "stride must be >= 1");
}

Signal truncate_ends(const Signal& s, double seconds) {
  const auto cut = static_cast<std::size_t>(std::llround(seconds * s.fs));
  if (seconds < 0.0 || (seconds > 0.0 && s.size() <= 2 * cut)) {
    throw Error(ErrorCode::TooShort, "signal shorter than twice the truncation length");
  }
  Signal out{{s.samples.begin() + static_cast<std::ptrdiff_t>(cut),
              s.samples.end() - static_cast<std::ptrdiff_t>(cut)},
             s.fs, s.label, s.t0 + static_cast<double>(cut) / s.fs};
  return out;
}

Signal resample(const Signal& s, int target_fs) {
  if (target_fs <= 0) throw Error(ErrorCode::BadConfig, "target_fs must be positive");
  const std::size_t n = s.size();
  const auto m = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_fs / static_cast<double>(s.fs)));
  Signal out{std::vector<double>(m), target_fs, s.label, s.t0};
  if (n == 0) return out;
  const double step = static_cast<double>(s.fs) / target_fs;
  for (std::size_t j = 0; j < m; ++j) {
    const double pos = static_cast<double>(j) * step;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= n) {
      out.samples[j] = s.samples[n - 1];
    } else {
      const double frac = pos - static_cast<double>(i);
      out.samples[j] = s.samples[i] + frac * (s.samples[i + 1] - s.samples[i]);
    }
  }
  return out;
}

Signal bandpass(const Signal& s, double lo, double hi) {
  const double nyquist = s.fs / 2.0;
  if (!(lo > 0.0) || !(lo < hi) || hi > nyquist) {
    throw Error(ErrorCode::InvalidBand, "band must satisfy 0 < lo < hi <= fs/2");
  }
  SosCascade sos = butter_highpass(4, lo, s.fs);
  if (hi < nyquist) {
    const SosCascade lp = butter_lowpass(4, hi, s.fs);
    sos.insert(sos.end(), lp.begin(), lp.end());
  }
  return {sosfiltfilt(sos, s.samples), s.fs, s.label, s.t0};
}

std::vector<double> savgol_coefficients(int window, int order) {
  if (window < 1 || window % 2 == 0 || order < 0 || order >= window) {
    throw Error(ErrorCode::BadConfig, "savgol window must be odd and exceed the order");
  }
  const int half = window / 2;
  // Row 0 of the pseudo-inverse of the Vandermonde design evaluates the fit at 0.
  Eigen::MatrixXd design(window, order + 1);
  for (int i = 0; i < window; ++i) {
    double p = 1.0;
    for (int j = 0; j <= order; ++j) {
      design(i, j) = p;
      p *= static_cast<double>(i - half);
    }
  }
  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::MatrixXd pinv = gram.ldlt().solve(design.transpose());
  std::vector<double> c(static_cast<std::size_t>(window));
  for (int i = 0; i < window; ++i) c[static_cast<std::size_t>(i)] = pinv(0, i);
  return c;
}

Signal savgol(const Signal& s, int window, int order) {
  const auto coeffs = savgol_coefficients(window, order);
  const std::size_t n = s.size();
  if (n < static_cast<std::size_t>(window)) {
    throw Error(ErrorCode::BadConfig, "signal shorter than the savgol window");
  }
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  const auto len = static_cast<std::ptrdiff_t>(n);
  // mirror about the edge samples: x[-i] = x[i], x[n-1+i] = x[n-1-i]
  auto at = [&](std::ptrdiff_t i) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * (len - 1) - i;
    return s.samples[static_cast<std::size_t>(i)];
  };
  Signal out{std::vector<double>(n), s.fs, s.label, s.t0};
  for (std::ptrdiff_t t = 0; t < len; ++t) {
    double acc = 0.0;
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      acc += coeffs[static_cast<std::size_t>(k + half)] * at(t + k);
    }
    out.samples[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

ZScore zscore(std::span<const double> w) {
  const auto n = static_cast<double>(w.size());
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : w) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  ZScore z{std::vector<double>(w.size(), 0.0), sd < 1e-12};
  if (!z.constant) {
    for (std::size_t i = 0; i < w.size(); ++i) z.values[i] = (w[i] - mean) / sd;
  }
  return z;
}

WindowSet slide(const Signal& s, std::size_t window_len, std::size_t stride) {
  if (window_len < 2 || stride < 1) throw Error(ErrorCode::BadConfig, "bad window geometry");
  if (s.size() < window_len) throw Error(ErrorCode::TooShort, "signal shorter than one window");
  const std::size_t count = (s.size() - window_len) / stride + 1;
  WindowSet ws;
  ws.window_len = window_len;
  ws.stride = stride;
  ws.origin_fs = s.fs;
  ws.origin_t0 = s.t0;
  ws.data.reserve(count * window_len);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = i * stride;
    auto z = zscore(std::span<const double>(s.samples).subspan(off, window_len));
    ws.offsets.push_back(off);
    ws.constant.push_back(z.constant);
    ws.data.insert(ws.data.end(), z.values.begin(), z.values.end());
  }
  return ws;
}

Signal stitch(const WindowSet& ws, std::span<const double> processed) {
  if (processed.size() != ws.rows() * ws.window_len) {
    throw Error(ErrorCode::ShapeMismatch, "processed windows do not match the window set");
  }
  Signal out{{}, ws.origin_fs, "stitched", ws.origin_t0};
  if (ws.rows() == 0) return out;
  const std::size_t len = ws.offsets.back() + ws.window_len;
  std::vector<double> sum(len, 0.0);
  std::vector<int> count(len, 0);
  for (std::size_t i = 0; i < ws.rows(); ++i) {
    for (std::size_t k = 0; k < ws.window_len; ++k) {
      sum[ws.offsets[i] + k] += processed[i * ws.window_len + k];
      ++count[ws.offsets[i] + k];
    }
  }
  out.samples.resize(len);
  for (std::size_t t = 0; t < len; ++t) out.samples[t] = count[t] ? sum[t] / count[t] : 0.0;
  return out;
}

Signal preprocess(const Signal& s, const PreprocessConfig& cfg) {
  cfg.validate();
  validate(s);
  const double hi = std::min(cfg.band_hi, s.fs / 2.0);
  Signal out = bandpass(s, cfg.band_lo, hi);
  out = truncate_ends(out, cfg.truncate_s);
  if (out.fs != cfg.target_fs) out = resample(out, cfg.target_fs);
  return savgol(out, cfg.savgol_window, cfg.savgol_order);
}

}  // namespace fetalsep
