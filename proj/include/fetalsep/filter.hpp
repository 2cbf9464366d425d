#pragma once

#include <span>
#include <vector>

namespace fetalsep {

/// Second-order IIR section, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

using SosCascade = std::vector<Biquad>;

// Butterworth sections from the bilinear transform with prewarping.
// order must be even; cutoff must lie strictly inside (0, fs/2).
SosCascade butter_lowpass(int order, double cutoff_hz, double fs);
SosCascade butter_highpass(int order, double cutoff_hz, double fs);

/// Causal filtering, transposed direct form II, zero initial state.
std::vector<double> sosfilt(const SosCascade& sos, std::span<const double> x);

/// Forward-backward filtering with odd-extension padding and steady-state
/// initial conditions, so a constant input passes through at its DC gain.
std::vector<double> sosfiltfilt(const SosCascade& sos, std::span<const double> x);

}  // namespace fetalsep
