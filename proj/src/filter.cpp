#include "fetalsep/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fetalsep/error.hpp"

namespace fetalsep {
namespace {

// Q factors of the conjugate pole pairs of an order-N Butterworth prototype.
std::vector<double> butter_q(int order) {
  if (order < 2 || order % 2 != 0) {
    throw Error(ErrorCode::BadConfig, "butterworth order must be even and >= 2");
  }
  std::vector<double> q;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order);
    q.push_back(1.0 / (2.0 * std::cos(theta)));
  }
  return q;
}

void check_cutoff(double cutoff_hz, double fs) {
  if (!(fs > 0.0) || !(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0)) {
    throw Error(ErrorCode::InvalidBand, "cutoff must lie in (0, fs/2)");
  }
}

struct SectionState {
  double z1 = 0.0;
  double z2 = 0.0;
};

void run(const SosCascade& sos, std::vector<SectionState>& state, std::vector<double>& x) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const Biquad& f = sos[s];
    double z1 = state[s].z1;
    double z2 = state[s].z2;
    for (double& v : x) {
      const double in = v;
      const double out = f.b0 * in + z1;
      z1 = f.b1 * in - f.a1 * out + z2;
      z2 = f.b2 * in - f.a2 * out;
      v = out;
    }
  }
}

// Steady-state section states for a constant input of level x0.
std::vector<SectionState> steady_state(const SosCascade& sos, double x0) {
  std::vector<SectionState> state;
  double level = x0;
  for (const Biquad& f : sos) {
    const double g = f.dc_gain();
    state.push_back({(g - f.b0) * level, (f.b2 - f.a2 * g) * level});
    level *= g;
  }
  return state;
}

}  // namespace

SosCascade butter_lowpass(int order, double cutoff_hz, double fs) {
  check_cutoff(cutoff_hz, fs);
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / fs;
  const double c = std::cos(w0);
  SosCascade sos;
  for (double q : butter_q(order)) {
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    sos.push_back({(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0, -2.0 * c / a0,
                   (1.0 - alpha) / a0});
  }
  return sos;
}

SosCascade butter_highpass(int order, double cutoff_hz, double fs) {
  check_cutoff(cutoff_hz, fs);
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / fs;
  const double c = std::cos(w0);
  SosCascade sos;
  for (double q : butter_q(order)) {
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    sos.push_back({(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0, -2.0 * c / a0,
                   (1.0 - alpha) / a0});
  }
  return sos;
}

std::vector<double> sosfilt(const SosCascade& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  std::vector<SectionState> state(sos.size());
  run(sos, state, y);
  return y;
}

std::vector<double> sosfiltfilt(const SosCascade& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0 || sos.empty()) return {x.begin(), x.end()};

  std::size_t ntaps = 2 * sos.size() + 1;
  const std::size_t pad = std::min<std::size_t>(3 * ntaps, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  auto state = steady_state(sos, ext.front());
  run(sos, state, ext);
  std::reverse(ext.begin(), ext.end());
  state = steady_state(sos, ext.front());
  run(sos, state, ext);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace fetalsep
