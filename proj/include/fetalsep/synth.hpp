#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fetalsep/signal.hpp"

namespace fetalsep {

/// One Gaussian wave of the beat model, in phase units (radians).
struct WaveComponent {
  double theta;
  double amplitude;
  double width;
};

/// P, Q, R, S, T components of the Gaussian-sum beat; R is index 2.
struct BeatModel {
  std::array<WaveComponent, 5> components;

  void validate() const;
};

// Canonical P,Q,R,S,T parameters rescaled so the waveform equals 1 at the R
// phase. width_scale multiplies every Gaussian width before the rescale.
BeatModel default_beat_model(double width_scale = 1.0);
BeatModel maternal_beat_model();
BeatModel fetal_beat_model();

struct RrSeries {
  std::vector<double> intervals;  // seconds, each in (0.2, 3.0)
};

RrSeries gen_rr(double mean_hr, double hrv_std, std::size_t n_beats, std::uint64_t seed);

struct SynthEcg {
  Signal signal;
  std::vector<std::size_t> r_peaks;
};

SynthEcg gen_ecg(const BeatModel& bm, const RrSeries& rr, int fs);

enum class NoiseKind { Emg, Baseline, Powerline };

NoiseKind parse_noise_kind(const std::string& name);
std::string to_string(NoiseKind kind);

/// Adds noise scaled to the requested SNR; +inf returns the input unchanged.
Signal add_noise(const Signal& s, NoiseKind kind, double snr_db, std::uint64_t seed);

/// 10 log10(sum s^2 / sum n^2).
double snr_db(const Signal& signal_power_ref, const Signal& noise);

struct MixtureConfig {
  double maternal_hr = 77.0;
  double fetal_hr = 135.0;
  double hrv_std = 0.02;         // maternal RR jitter, seconds
  double fetal_hrv_std = 0.005;  // fetal RR jitter, seconds
  double fetal_amp_ratio = 0.25;
  double noise_snr_db = std::numeric_limits<double>::infinity();
  NoiseKind noise_kind = NoiseKind::Emg;
  int fs = 1000;
  double duration_s = 80.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Mixture {
  Signal abdominal;
  Signal fetal_truth;
  Signal maternal_truth;
  std::vector<std::size_t> fetal_r_peaks;
  std::vector<std::size_t> maternal_r_peaks;
};

Mixture mix_abdominal(const MixtureConfig& cfg);

// Heart-rate grid of the simulated study: six fetal by four maternal rates.
inline constexpr std::array<double, 6> kFetalGridHr{115, 125, 135, 145, 155, 160};
inline constexpr std::array<double, 4> kMaternalGridHr{65, 77, 89, 100};

}  // namespace fetalsep
