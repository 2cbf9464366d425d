#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "fetalsep/error.hpp"
#include "fetalsep/signal.hpp"
#include "fetalsep/synth.hpp"

using namespace fetalsep;

namespace {

Signal sine(double hz, int fs, double seconds, double amp = 1.0) {
  Signal s{{}, fs, "sine", 0.0};
  const auto n = static_cast<std::size_t>(std::llround(seconds * fs));
  for (std::size_t i = 0; i < n; ++i) s.samples.push_back(amp * std::sin(2.0 * std::numbers::pi * hz * i / fs));
  return s;
}

double rms(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(hi - lo));
}

Signal noise(std::size_t n, int fs, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Signal s{{}, fs, "noise", 0.0};
  for (std::size_t i = 0; i < n; ++i) s.samples.push_back(nd(gen));
  return s;
}

}  // namespace

TEST_CASE("truncate_ends") {
  Signal s{std::vector<double>(300000, 1.0), 1000, "x", 0.0};
  const auto t = truncate_ends(s, 10.0);
  CHECK(t.size() == 280000);
  CHECK(t.t0 == doctest::Approx(10.0));
  CHECK(truncate_ends(s, 0.0).samples == s.samples);
  Signal short_sig{std::vector<double>(15000, 0.0), 1000, "x", 0.0};
  CHECK_THROWS_AS(truncate_ends(short_sig, 10.0), Error);
}

TEST_CASE("resample length, constants and spectral peak") {
  Signal s{std::vector<double>(5000, 3.25), 1000, "c", 0.0};
  const auto r = resample(s, 200);
  CHECK(r.size() == 1000);
  CHECK(r.fs == 200);
  for (double v : r.samples) CHECK(v == 3.25);

  const auto x = resample(sine(10.0, 1000, 2.0), 200);
  REQUIRE(x.size() == 400);
  // direct DFT, bins of 0.5 Hz
  std::size_t best = 0;
  double best_mag = 0.0;
  for (std::size_t k = 1; k < 200; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc += x.samples[i] * std::polar(1.0, -2.0 * std::numbers::pi * k * i / 400.0);
    }
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best = k;
    }
  }
  CHECK(best == 20);
  CHECK(2.0 * best_mag / 400.0 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("resample round trip through twice the rate") {
  const auto s = sine(3.0, 200, 5.0);
  const auto back = resample(resample(s, 400), 200);
  REQUIRE(back.size() == s.size());
  std::vector<double> err(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) err[i] = back.samples[i] - s.samples[i];
  CHECK(rms(err, 0, err.size()) < 0.01 * rms(s.samples, 0, s.size()));
}

TEST_CASE("bandpass removes DC and very low frequencies, keeps the band") {
  Signal c{std::vector<double>(4000, 5.0), 200, "c", 0.0};
  for (double v : bandpass(c, 1.0, 100.0).samples) CHECK(std::abs(v) < 1e-6 * 5.0);

  const auto s20 = sine(20.0, 200, 10.0);
  const auto f20 = bandpass(s20, 1.0, 100.0);
  REQUIRE(f20.size() == s20.size());
  CHECK(rms(f20.samples, 200, 1800) / rms(s20.samples, 200, 1800) == doctest::Approx(1.0).epsilon(0.05));

  const auto slow = sine(0.1, 200, 60.0);
  const auto fslow = bandpass(slow, 1.0, 100.0);
  CHECK(20.0 * std::log10(rms(fslow.samples, 0, fslow.size()) / rms(slow.samples, 0, slow.size())) <= -20.0);

  // two-section case at a native rate above 200 Hz
  const auto s1k = sine(20.0, 1000, 5.0);
  const auto f1k = bandpass(s1k, 1.0, 100.0);
  CHECK(rms(f1k.samples, 500, 4500) / rms(s1k.samples, 500, 4500) == doctest::Approx(1.0).epsilon(0.05));

  CHECK_THROWS_AS(bandpass(c, 1.0, 120.0), Error);
  CHECK_THROWS_AS(bandpass(c, 5.0, 2.0), Error);
}

// Content inside the 1 Hz transition band (a maternal fundamental near 1.3 Hz)
// is attenuated again on every pass, so the property is checked on a fetal trace.
TEST_CASE("bandpass is idempotent on a filtered ECG") {
  const auto ecg = gen_ecg(fetal_beat_model(), gen_rr(135.0, 0.005, 50, 11), 1000).signal;
  const auto once = bandpass(ecg, 1.0, 100.0);
  const auto twice = bandpass(once, 1.0, 100.0);
  std::vector<double> err(once.size());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = twice.samples[i] - once.samples[i];
  CHECK(rms(err, 0, err.size()) < 0.01 * rms(once.samples, 0, once.size()));
}

TEST_CASE("savgol coefficients match the classic 9-point cubic table") {
  const double table[] = {-21, 14, 39, 54, 59, 54, 39, 14, -21};
  const auto c = savgol_coefficients(9, 3);
  REQUIRE(c.size() == 9);
  for (int i = 0; i < 9; ++i) CHECK(c[i] == doctest::Approx(table[i] / 231.0).epsilon(1e-12));

  Signal impulse{std::vector<double>(41, 0.0), 200, "d", 0.0};
  impulse.samples[20] = 1.0;
  const auto out = savgol(impulse, 9, 3);
  for (int k = -4; k <= 4; ++k) CHECK(out.samples[20 + k] == doctest::Approx(table[4 - k] / 231.0).epsilon(1e-12));
  CHECK(out.samples[10] == 0.0);
}

TEST_CASE("savgol reproduces low-order polynomials away from the edges") {
  for (int order = 0; order <= 3; ++order) {
    Signal p{{}, 200, "poly", 0.0};
    for (int i = 0; i < 60; ++i) {
      const double t = i * 0.1 - 3.0;
      p.samples.push_back(order == 0 ? 2.0 : std::pow(t, order) - 0.5 * t + 1.0);
    }
    const auto out = savgol(p, 9, 3);
    for (std::size_t i = 4; i + 4 < p.size(); ++i) CHECK(std::abs(out.samples[i] - p.samples[i]) < 1e-9);
  }
  Signal c{std::vector<double>(30, -1.5), 200, "c", 0.0};
  for (double v : savgol(c, 9, 3).samples) CHECK(v == doctest::Approx(-1.5).epsilon(1e-12));
  Signal tiny{std::vector<double>(5, 0.0), 200, "t", 0.0};
  CHECK_THROWS_AS(savgol(tiny, 9, 3), Error);
  CHECK_THROWS_AS(savgol(c, 8, 3), Error);
}

TEST_CASE("zscore") {
  const std::vector<double> w{1.0, 2.0, 3.0};
  const auto z = zscore(w);
  CHECK_FALSE(z.constant);
  CHECK(z.values[0] == doctest::Approx(-1.224744871391589));
  CHECK(z.values[1] == doctest::Approx(0.0));
  CHECK(z.values[2] == doctest::Approx(1.224744871391589));

  const auto flat = zscore(std::vector<double>(10, 4.0));
  CHECK(flat.constant);
  for (double v : flat.values) CHECK(v == 0.0);

  const auto r = noise(200, 200, 3);
  const auto zr = zscore(r.samples);
  double m = 0.0, ss = 0.0;
  for (double v : zr.values) m += v;
  m /= 200.0;
  for (double v : zr.values) ss += (v - m) * (v - m);
  CHECK(std::abs(m) < 1e-9);
  CHECK(std::abs(std::sqrt(ss / 200.0) - 1.0) < 1e-9);
}

TEST_CASE("slide window counts and errors") {
  const auto s = noise(1000, 200, 5);
  CHECK(slide(s, 200, 200).rows() == 5);
  const auto ws = slide(s, 200, 100);
  CHECK(ws.rows() == 9);
  for (std::size_t i = 0; i < ws.rows(); ++i) CHECK(ws.offsets[i] == i * 100);
  CHECK_THROWS_AS(slide(noise(150, 200, 5), 200, 100), Error);
}

TEST_CASE("stitch") {
  const auto s = noise(1000, 200, 7);
  const auto ws = slide(s, 200, 200);
  const auto back = stitch(ws, ws.data);
  REQUIRE(back.size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) CHECK(back.samples[i] == ws.data[i]);

  const auto half = slide(s, 200, 100);
  const auto ones = stitch(half, std::vector<double>(half.data.size(), 1.0));
  for (double v : ones.samples) CHECK(v == 1.0);

  const auto noisy = noise(half.data.size(), 200, 9).samples;
  const auto mixed = stitch(half, noisy);
  REQUIRE(mixed.size() == 1000);
  for (std::size_t t = 0; t < 1000; ++t) {
    double acc = 0.0;
    int cnt = 0;
    for (std::size_t i = 0; i < half.rows(); ++i) {
      if (t >= half.offsets[i] && t < half.offsets[i] + 200) {
        acc += noisy[i * 200 + (t - half.offsets[i])];
        ++cnt;
      }
    }
    CHECK(mixed.samples[t] == doctest::Approx(acc / cnt).epsilon(1e-14));
  }
  CHECK_THROWS_AS(stitch(half, std::vector<double>(7, 0.0)), Error);
}

TEST_CASE("preprocess chain output rate and length") {
  const auto s = sine(12.0, 1000, 30.0);
  const auto p = preprocess(s, PreprocessConfig{});
  CHECK(p.fs == 200);
  CHECK(p.size() == 2000);
  CHECK(p.t0 == doctest::Approx(10.0));
}
