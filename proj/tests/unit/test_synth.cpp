#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fetalsep/error.hpp"
#include "fetalsep/qrs.hpp"
#include "fetalsep/synth.hpp"

using namespace fetalsep;

namespace {

double power(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("gen_rr") {
  for (double v : gen_rr(60.0, 0.0, 20, 1).intervals) CHECK(v == 1.0);
  for (double v : gen_rr(120.0, 0.0, 20, 1).intervals) CHECK(v == 0.5);
  const auto rr = gen_rr(60.0, 0.05, 1000, 3).intervals;
  double m = 0.0;
  for (double v : rr) m += v / 1000.0;
  double ss = 0.0;
  for (double v : rr) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / 999.0);
  CHECK(std::abs(m - 1.0) < 0.01);
  CHECK(std::abs(sd - 0.05) < 0.2 * 0.05);
  for (double v : gen_rr(150.0, 0.5, 500, 4).intervals) {
    CHECK(v > 0.2);
    CHECK(v < 3.0);
  }
  CHECK(gen_rr(70.0, 0.03, 50, 9).intervals == gen_rr(70.0, 0.03, 50, 9).intervals);
}

TEST_CASE("gen_ecg peaks and length") {
  const auto rr = gen_rr(60.0, 0.0, 10, 1);
  const auto ecg = gen_ecg(maternal_beat_model(), rr, 200);
  CHECK(ecg.signal.size() == 2000);
  REQUIRE(ecg.r_peaks.size() == 10);
  for (std::size_t i = 1; i < ecg.r_peaks.size(); ++i) {
    const auto gap = ecg.r_peaks[i] - ecg.r_peaks[i - 1];
    CHECK(gap >= 199);
    CHECK(gap <= 201);
  }
  for (std::size_t p : ecg.r_peaks) CHECK(ecg.signal.samples[p] == doctest::Approx(1.0).epsilon(0.05));

  BeatModel r_only = maternal_beat_model();
  for (auto& c : r_only.components) c.amplitude = 0.0;
  r_only.components[2] = {0.0, 1.0, 0.1};
  const auto jittered = gen_rr(90.0, 0.03, 25, 7);
  const auto single = gen_ecg(r_only, jittered, 500);
  CHECK(single.r_peaks.size() == jittered.intervals.size());
  for (std::size_t p : single.r_peaks) {
    const std::size_t lo = p > 50 ? p - 50 : 0;
    const std::size_t hi = std::min(single.signal.size(), p + 51);
    const auto it = std::max_element(single.signal.samples.begin() + static_cast<long>(lo),
                                     single.signal.samples.begin() + static_cast<long>(hi));
    const auto arg = static_cast<std::size_t>(it - single.signal.samples.begin());
    CHECK((arg > p ? arg - p : p - arg) <= 1);
  }
}

TEST_CASE("beat model validation") {
  CHECK_NOTHROW(default_beat_model().validate());
  BeatModel bad = default_beat_model();
  bad.components[1].width = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = default_beat_model();
  std::swap(bad.components[0], bad.components[1]);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("add_noise hits the requested SNR") {
  const auto clean = gen_ecg(maternal_beat_model(), gen_rr(77.0, 0.02, 40, 2), 500).signal;
  CHECK(add_noise(clean, NoiseKind::Emg, std::numeric_limits<double>::infinity(), 1).samples == clean.samples);
  for (NoiseKind kind : {NoiseKind::Emg, NoiseKind::Baseline, NoiseKind::Powerline}) {
    for (double target : {0.0, 6.0, 20.0}) {
      const auto noisy = add_noise(clean, kind, target, 5);
      Signal n = noisy;
      for (std::size_t i = 0; i < n.size(); ++i) n.samples[i] -= clean.samples[i];
      const double measured = 10.0 * std::log10(power(clean.samples) / power(n.samples));
      CHECK(std::abs(measured - target) < 0.1);
      CHECK(std::abs(snr_db(clean, n) - target) < 0.1);
      if (target == 0.0) {
        const double ratio = power(n.samples) / power(clean.samples);
        CHECK(ratio >= 0.977);
        CHECK(ratio <= 1.023);
      }
    }
  }
  Signal zero{std::vector<double>(100, 0.0), 200, "z", 0.0};
  CHECK_THROWS_AS(add_noise(zero, NoiseKind::Emg, 10.0, 1), Error);
  CHECK(parse_noise_kind("powerline") == NoiseKind::Powerline);
  CHECK(to_string(NoiseKind::Baseline) == "baseline");
}

TEST_CASE("snr_db") {
  Signal s{{1.0, -2.0, 3.0}, 100, "s", 0.0};
  CHECK(snr_db(s, s) == doctest::Approx(0.0));
  Signal tenth{{0.1, -0.2, 0.3}, 100, "n", 0.0};
  CHECK(snr_db(s, tenth) == doctest::Approx(20.0));
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  Signal a{{}, 100, "a", 0.0}, b{{}, 100, "b", 0.0};
  for (int i = 0; i < 64; ++i) {
    a.samples.push_back(nd(gen));
    b.samples.push_back(nd(gen));
  }
  double sa = 0.0, sb = 0.0;
  for (int i = 0; i < 64; ++i) {
    sa += a.samples[i] * a.samples[i];
    sb += b.samples[i] * b.samples[i];
  }
  CHECK(std::abs(snr_db(a, b) - 10.0 * std::log10(sa / sb)) < 1e-9);
  Signal z{{0.0, 0.0, 0.0}, 100, "z", 0.0};
  CHECK_THROWS_AS(snr_db(s, z), Error);
  CHECK_THROWS_AS(snr_db(s, a), Error);
}

TEST_CASE("mix_abdominal linearity and determinism") {
  MixtureConfig cfg;
  cfg.duration_s = 20.0;
  cfg.fetal_amp_ratio = 0.0;
  auto m = mix_abdominal(cfg);
  CHECK(m.abdominal.samples == m.maternal_truth.samples);

  cfg.fetal_amp_ratio = 0.25;
  m = mix_abdominal(cfg);
  REQUIRE(m.abdominal.size() == m.fetal_truth.size());
  REQUIRE(m.abdominal.size() == m.maternal_truth.size());
  for (std::size_t i = 0; i < m.abdominal.size(); ++i) {
    CHECK(std::abs(m.abdominal.samples[i] - m.maternal_truth.samples[i] - 0.25 * m.fetal_truth.samples[i]) < 1e-12);
  }
  const auto again = mix_abdominal(cfg);
  CHECK(again.abdominal.samples == m.abdominal.samples);
  CHECK(again.fetal_r_peaks == m.fetal_r_peaks);

  cfg.noise_snr_db = 10.0;
  const auto noisy = mix_abdominal(cfg);
  CHECK(noisy.abdominal.samples != m.abdominal.samples);

  cfg.fetal_hr = 250.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.fetal_hr = 135.0;
  cfg.maternal_hr = 30.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("the heart-rate grid gives 24 distinct mixtures with the expected beat counts") {
  std::vector<std::vector<double>> seen;
  std::uint64_t seed = 1;
  for (double f : kFetalGridHr) {
    for (double mhr : kMaternalGridHr) {
      MixtureConfig cfg;
      cfg.fetal_hr = f;
      cfg.maternal_hr = mhr;
      cfg.duration_s = 30.0;
      cfg.seed = seed++;
      const auto m = mix_abdominal(cfg);
      const double expected = std::round(cfg.duration_s * f / 60.0);
      CHECK(std::abs(static_cast<double>(m.fetal_r_peaks.size()) - expected) <= 1.0);
      seen.push_back(m.abdominal.samples);
    }
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::unique(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("detector recovers fetal ground truth") {
  MixtureConfig cfg;
  cfg.duration_s = 30.0;
  cfg.fetal_hr = 155.0;
  const auto m = mix_abdominal(cfg);
  const auto det = pan_tompkins(m.fetal_truth);
  const auto match = match_beats(det, PeakList{m.fetal_r_peaks, cfg.fs}, 1);
  CHECK(static_cast<double>(match.tp) >= 0.99 * static_cast<double>(m.fetal_r_peaks.size()));
}
