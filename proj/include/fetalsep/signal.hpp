#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fetalsep {

/// Uniformly sampled single-channel waveform.
struct Signal {
  std::vector<double> samples;
  int fs = 0;
  std::string label;
  double t0 = 0.0;  // time of samples[0] in seconds, relative to the record start

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / fs; }
};

// Throws BadConfig unless fs > 0 and every sample is finite.
void validate(const Signal& s);

/// Batch of fixed-length windows cut from one signal.
struct WindowSet {
  std::size_t window_len = 0;
  std::size_t stride = 0;
  int origin_fs = 0;
  double origin_t0 = 0.0;
  std::vector<std::size_t> offsets;
  std::vector<bool> constant;  // z-score saw a flat window
  std::vector<double> data;    // rows() x window_len, row-major

  std::size_t rows() const { return offsets.size(); }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * window_len, window_len};
  }
  std::span<double> row(std::size_t i) { return {data.data() + i * window_len, window_len}; }
};

struct PreprocessConfig {
  int target_fs = 200;
  double band_lo = 1.0;
  double band_hi = 100.0;
  int savgol_window = 9;
  int savgol_order = 3;
  double truncate_s = 10.0;
  std::size_t window_len = 200;
  std::size_t train_stride = 100;
  std::size_t eval_stride = 200;

  void validate() const;
};

Signal truncate_ends(const Signal& s, double seconds);

/// Linear interpolation onto a target_fs grid; length round(n * target_fs / fs).
Signal resample(const Signal& s, int target_fs);

/// Zero-phase 4th-order Butterworth band-pass. When hi sits exactly at
/// Nyquist only the high-pass section is applied.
Signal bandpass(const Signal& s, double lo, double hi);

std::vector<double> savgol_coefficients(int window, int order);
Signal savgol(const Signal& s, int window, int order);

struct ZScore {
  std::vector<double> values;
  bool constant = false;
};

/// Population-std z-score; a window with std < 1e-12 maps to zeros.
ZScore zscore(std::span<const double> w);

WindowSet slide(const Signal& s, std::size_t window_len, std::size_t stride);

/// Reassembles processed windows; overlaps are averaged, gaps are zero.
Signal stitch(const WindowSet& ws, std::span<const double> processed);

/// band-pass at the native rate, drop the ends, resample, smooth.
Signal preprocess(const Signal& s, const PreprocessConfig& cfg);

}  // namespace fetalsep
