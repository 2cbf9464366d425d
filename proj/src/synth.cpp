#include "fetalsep/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fetalsep/error.hpp"
#include "fetalsep/random.hpp"

namespace fetalsep {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMinRr = 0.2;
constexpr double kMaxRr = 3.0;

double wrap_phase(double d) {
  d = std::fmod(d + kPi, 2.0 * kPi);
  if (d < 0.0) d += 2.0 * kPi;
  return d - kPi;
}

double beat_value(const BeatModel& bm, double theta) {
  double v = 0.0;
  for (const auto& c : bm.components) {
    const double d = wrap_phase(theta - c.theta);
    v += c.amplitude * std::exp(-d * d / (2.0 * c.width * c.width));
  }
  return v;
}

double mean_power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

}  // namespace

void BeatModel::validate() const {
  double prev = -kPi;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    if (!(c.width > 0.0)) throw Error(ErrorCode::BadConfig, "beat component width must be > 0");
    if (!(c.theta > prev || (i == 0 && c.theta > -kPi)) || c.theta > kPi) {
      throw Error(ErrorCode::BadConfig, "beat phases must increase strictly within (-pi, pi]");
    }
    prev = c.theta;
  }
}

BeatModel default_beat_model(double width_scale) {
  BeatModel bm{{{{-kPi / 3.0, 1.2, 0.25},
                 {-kPi / 12.0, -5.0, 0.1},
                 {0.0, 30.0, 0.1},
                 {kPi / 12.0, -7.5, 0.1},
                 {kPi / 2.0, 0.75, 0.4}}}};
  for (auto& c : bm.components) c.width *= width_scale;
  const double r = beat_value(bm, bm.components[2].theta);
  for (auto& c : bm.components) c.amplitude /= r;
  return bm;
}

BeatModel maternal_beat_model() { return default_beat_model(1.0); }

BeatModel fetal_beat_model() { return default_beat_model(1.0); }

RrSeries gen_rr(double mean_hr, double hrv_std, std::size_t n_beats, std::uint64_t seed) {
  if (!(mean_hr > 0.0) || n_beats < 1 || hrv_std < 0.0) {
    throw Error(ErrorCode::BadConfig, "gen_rr needs mean_hr > 0, n_beats >= 1, hrv_std >= 0");
  }
  Rng rng(seed);
  const double base = 60.0 / mean_hr;
  RrSeries rr;
  rr.intervals.reserve(n_beats);
  const double lo = std::nextafter(kMinRr, kMaxRr);
  const double hi = std::nextafter(kMaxRr, kMinRr);
  for (std::size_t i = 0; i < n_beats; ++i) {
    const double v = hrv_std > 0.0 ? base + hrv_std * rng.normal() : base;
    rr.intervals.push_back(std::clamp(v, lo, hi));
  }
  return rr;
}

SynthEcg gen_ecg(const BeatModel& bm, const RrSeries& rr, int fs) {
  bm.validate();
  if (fs <= 0) throw Error(ErrorCode::BadConfig, "fs must be positive");
  double total = 0.0;
  for (double v : rr.intervals) {
    if (!(v > kMinRr && v < kMaxRr)) throw Error(ErrorCode::BadConfig, "RR interval out of range");
    total += v;
  }
  const auto n = static_cast<std::size_t>(std::llround(total * fs));
  SynthEcg out{{std::vector<double>(n, 0.0), fs, "synthetic", 0.0}, {}};
  const double r_frac = (bm.components[2].theta + kPi) / (2.0 * kPi);

  double start = 0.0;  // beat onset in samples, continuous
  std::size_t t = 0;
  for (std::size_t k = 0; k < rr.intervals.size(); ++k) {
    const double len = rr.intervals[k] * fs;
    const double end = (k + 1 == rr.intervals.size()) ? static_cast<double>(n) : start + len;
    for (; t < n && static_cast<double>(t) < end; ++t) {
      const double theta = -kPi + 2.0 * kPi * (static_cast<double>(t) - start) / len;
      out.signal.samples[t] = beat_value(bm, theta);
    }
    const auto peak = static_cast<std::size_t>(std::ceil(start + r_frac * len - 1e-9));
    out.r_peaks.push_back(std::min(peak, n - 1));
    start += len;
  }
  return out;
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "emg") return NoiseKind::Emg;
  if (name == "baseline") return NoiseKind::Baseline;
  if (name == "powerline") return NoiseKind::Powerline;
  throw Error(ErrorCode::BadConfig, "unknown noise kind '" + name + "'");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Emg: return "emg";
    case NoiseKind::Baseline: return "baseline";
    case NoiseKind::Powerline: return "powerline";
  }
  return "emg";
}

Signal add_noise(const Signal& s, NoiseKind kind, double snr, std::uint64_t seed) {
  if (std::isinf(snr) && snr > 0.0) return s;
  const double ps = mean_power(s.samples);
  if (!(ps > 0.0)) throw Error(ErrorCode::DegenerateSignal, "signal has zero power");

  Rng rng(seed);
  std::vector<double> noise(s.size());
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const double t = static_cast<double>(i) / s.fs;
    switch (kind) {
      case NoiseKind::Emg: noise[i] = rng.normal(); break;
      case NoiseKind::Baseline: noise[i] = std::sin(2.0 * kPi * 0.3 * t + phase); break;
      case NoiseKind::Powerline: noise[i] = std::sin(2.0 * kPi * 50.0 * t + phase); break;
    }
  }
  const double pn = mean_power(noise);
  if (!(pn > 0.0)) throw Error(ErrorCode::DegenerateSignal, "noise realization has zero power");
  const double scale = std::sqrt(ps / (pn * std::pow(10.0, snr / 10.0)));
  Signal out = s;
  for (std::size_t i = 0; i < noise.size(); ++i) out.samples[i] += scale * noise[i];
  return out;
}

double snr_db(const Signal& signal_power_ref, const Signal& noise) {
  if (signal_power_ref.size() != noise.size()) {
    throw Error(ErrorCode::ShapeMismatch, "signal and noise lengths differ");
  }
  double ps = 0.0;
  double pn = 0.0;
  for (double v : signal_power_ref.samples) ps += v * v;
  for (double v : noise.samples) pn += v * v;
  if (!(pn > 0.0)) throw Error(ErrorCode::ZeroNoise, "noise has zero energy");
  return 10.0 * std::log10(ps / pn);
}

void MixtureConfig::validate() const {
  if (maternal_hr < 40.0 || maternal_hr > 130.0) {
    throw Error(ErrorCode::BadConfig, "maternal_hr outside 40-130 bpm");
  }
  if (fetal_hr < 90.0 || fetal_hr > 200.0) {
    throw Error(ErrorCode::BadConfig, "fetal_hr outside 90-200 bpm");
  }
  if (!(fetal_amp_ratio >= 0.0 && fetal_amp_ratio < 1.0)) {
    throw Error(ErrorCode::BadConfig, "fetal_amp_ratio must lie in [0, 1)");
  }
  if (hrv_std < 0.0 || fetal_hrv_std < 0.0) throw Error(ErrorCode::BadConfig, "negative hrv_std");
  if (fs <= 0 || !(duration_s > 0.0)) throw Error(ErrorCode::BadConfig, "bad fs or duration");
}

Mixture mix_abdominal(const MixtureConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fs));

  auto source = [&](double hr, double hrv, const BeatModel& bm, Signal& sig,
                    std::vector<std::size_t>& peaks) {
    const auto beats = static_cast<std::size_t>(std::ceil(cfg.duration_s * hr / 60.0)) + 3;
    const RrSeries rr = gen_rr(hr, hrv, beats, rng.next());
    SynthEcg ecg = gen_ecg(bm, rr, cfg.fs);
    auto offset = static_cast<std::size_t>(rng.uniform() * rr.intervals.front() * cfg.fs);
    offset = std::min(offset, ecg.signal.size() - n);
    sig = Signal{{ecg.signal.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                  ecg.signal.samples.begin() + static_cast<std::ptrdiff_t>(offset + n)},
                 cfg.fs, "", 0.0};
    for (std::size_t p : ecg.r_peaks) {
      if (p >= offset && p < offset + n) peaks.push_back(p - offset);
    }
  };

  Mixture mix;
  source(cfg.maternal_hr, cfg.hrv_std, maternal_beat_model(), mix.maternal_truth,
         mix.maternal_r_peaks);
  source(cfg.fetal_hr, cfg.fetal_hrv_std, fetal_beat_model(), mix.fetal_truth, mix.fetal_r_peaks);
  mix.maternal_truth.label = "maternal";
  mix.fetal_truth.label = "fetal";

  mix.abdominal = Signal{std::vector<double>(n), cfg.fs, "abdominal", 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    mix.abdominal.samples[i] =
        mix.maternal_truth.samples[i] + cfg.fetal_amp_ratio * mix.fetal_truth.samples[i];
  }
  const std::uint64_t noise_seed = rng.next();
  mix.abdominal = add_noise(mix.abdominal, cfg.noise_kind, cfg.noise_snr_db, noise_seed);
  mix.abdominal.label = "abdominal";
  return mix;
}

}  // namespace fetalsep
