#include "fetalsep/qrs.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "fetalsep/error.hpp"
#include "fetalsep/filter.hpp"

namespace fetalsep {
namespace {

std::size_t samples_for(double seconds, int fs) {
  return static_cast<std::size_t>(std::lround(seconds * fs));
}

// Max |slope| of the filtered signal within +-half samples of i.
double max_slope(const std::vector<double>& deriv, std::size_t i, std::size_t half) {
  const std::size_t lo = i > half ? i - half : 0;
  const std::size_t hi = std::min(deriv.size(), i + half + 1);
  double m = 0.0;
  for (std::size_t k = lo; k < hi; ++k) m = std::max(m, std::abs(deriv[k]));
  return m;
}

}  // namespace

PeakList pan_tompkins(const Signal& s, const PanTompkinsConfig& cfg) {
  if (s.fs < 100) throw Error(ErrorCode::TooShort, "detector needs fs >= 100 Hz");
  if (s.samples.size() < static_cast<std::size_t>(2 * s.fs)) {
    throw Error(ErrorCode::TooShort, "detector needs at least 2 s of signal");
  }
  const int fs = s.fs;
  const std::size_t n = s.samples.size();
  PeakList out;
  out.fs = fs;

  // band-pass, zero phase so every stage stays aligned with the input
  SosCascade sos = butter_highpass(2, cfg.band_lo, fs);
  const SosCascade lp = butter_lowpass(2, cfg.band_hi, fs);
  sos.insert(sos.end(), lp.begin(), lp.end());
  const std::vector<double> band = sosfiltfilt(sos, s.samples);

  // centered five-point derivative
  std::vector<double> deriv(n, 0.0);
  for (std::size_t i = 2; i + 2 < n; ++i) {
    deriv[i] = (-band[i - 2] - 2.0 * band[i - 1] + 2.0 * band[i + 1] + band[i + 2]) * fs / 8.0;
  }

  // squaring and centered moving-window integration
  const std::size_t half = samples_for(cfg.integration_s, fs) / 2;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + deriv[i] * deriv[i];
  std::vector<double> mwi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    mwi[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(2 * half + 1);
  }
  const double peak_level = *std::max_element(mwi.begin(), mwi.end());
  if (!(peak_level > 0.0)) return out;

  // candidate fiducials: local maxima of the integrated signal, at most one per refractory span
  const std::size_t refractory = samples_for(cfg.refractory_s, fs);
  std::vector<std::size_t> cand;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1] && mwi[i] > 1e-12 * peak_level) {
      if (!cand.empty() && i - cand.back() < refractory) {
        if (mwi[i] > mwi[cand.back()]) cand.back() = i;
      } else {
        cand.push_back(i);
      }
    }
  }

  const std::size_t learn = std::min(n, samples_for(cfg.learning_s, fs));
  double spki = 0.25 * *std::max_element(mwi.begin(), mwi.begin() + static_cast<long>(learn));
  double npki = 0.0;
  for (std::size_t i = 0; i < learn; ++i) npki += mwi[i];
  npki = 0.5 * npki / static_cast<double>(learn);
  auto thr1 = [&] { return npki + 0.25 * (spki - npki); };

  const std::size_t twave = samples_for(cfg.twave_s, fs);
  const std::size_t slope_half = samples_for(0.075, fs);
  std::vector<std::size_t> qrs;
  std::vector<double> rr;
  double last_slope = 0.0;
  std::size_t searched_from = 0;  // candidates before this index are spent for search-back

  auto accept = [&](std::size_t c) {
    if (!qrs.empty()) {
      rr.push_back(static_cast<double>(cand[c] - qrs.back()));
      if (rr.size() > 8) rr.erase(rr.begin());
    }
    qrs.push_back(cand[c]);
    last_slope = max_slope(deriv, cand[c], slope_half);
    searched_from = c + 1;
  };

  for (std::size_t c = 0; c < cand.size(); ++c) {
    const std::size_t i = cand[c];
    const double level = mwi[i];

    // search back for a missed beat once the gap grows too long
    if (!qrs.empty() && rr.size() >= 1) {
      double mean_rr = 0.0;
      for (double v : rr) mean_rr += v;
      mean_rr /= static_cast<double>(rr.size());
      if (static_cast<double>(i - qrs.back()) > cfg.searchback_factor * mean_rr) {
        std::size_t best = cand.size();
        for (std::size_t k = searched_from; k < c; ++k) {
          if (cand[k] - qrs.back() < refractory || i - cand[k] < refractory) continue;
          if (mwi[cand[k]] > 0.5 * thr1() && (best == cand.size() || mwi[cand[k]] > mwi[cand[best]])) {
            best = k;
          }
        }
        if (best != cand.size()) {
          spki = 0.25 * mwi[cand[best]] + 0.75 * spki;
          accept(best);
        }
        searched_from = c;
      }
    }

    if (!qrs.empty() && i - qrs.back() < refractory) continue;
    if (level > thr1()) {
      if (!qrs.empty() && i - qrs.back() < twave &&
          max_slope(deriv, i, slope_half) < 0.5 * last_slope) {
        npki = 0.125 * level + 0.875 * npki;
        continue;
      }
      spki = 0.125 * level + 0.875 * spki;
      accept(c);
    } else {
      npki = 0.125 * level + 0.875 * npki;
    }
  }

  // move each fiducial to the local maximum of the input
  const std::size_t reach = samples_for(cfg.refine_s, fs);
  std::vector<std::size_t> refined;
  for (std::size_t q : qrs) {
    const std::size_t lo = q > reach ? q - reach : 0;
    const std::size_t hi = std::min(n, q + reach + 1);
    const auto it = std::max_element(s.samples.begin() + static_cast<long>(lo),
                                     s.samples.begin() + static_cast<long>(hi));
    refined.push_back(static_cast<std::size_t>(it - s.samples.begin()));
  }
  std::sort(refined.begin(), refined.end());
  for (std::size_t q : refined) {
    if (!out.indices.empty() && q - out.indices.back() < refractory) {
      if (s.samples[q] > s.samples[out.indices.back()]) out.indices.back() = q;
      continue;
    }
    out.indices.push_back(q);
  }
  return out;
}

MatchResult match_beats(const PeakList& detected, const PeakList& reference, std::size_t tol) {
  if (detected.fs != reference.fs) {
    throw Error(ErrorCode::FsMismatch, "peak lists use different sampling rates");
  }
  // all admissible pairs, ordered by distance then position for determinism
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> pairs;
  const auto& d = detected.indices;
  const auto& r = reference.indices;
  std::size_t start = 0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    while (start < d.size() && d[start] + tol < r[j]) ++start;
    for (std::size_t i = start; i < d.size() && d[i] <= r[j] + tol; ++i) {
      const std::size_t dist = d[i] > r[j] ? d[i] - r[j] : r[j] - d[i];
      pairs.emplace_back(dist, j, i);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> used_d(d.size(), false);
  std::vector<bool> used_r(r.size(), false);
  MatchResult m;
  for (const auto& [dist, j, i] : pairs) {
    if (used_d[i] || used_r[j]) continue;
    used_d[i] = used_r[j] = true;
    m.matched_pairs.emplace_back(d[i], r[j]);
  }
  std::sort(m.matched_pairs.begin(), m.matched_pairs.end());
  m.tp = m.matched_pairs.size();
  m.fp = d.size() - m.tp;
  m.fn = r.size() - m.tp;
  return m;
}

Prf prf(const MatchResult& m) {
  auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
  Prf p;
  const auto tp = static_cast<double>(m.tp);
  p.se = ratio(tp, tp + static_cast<double>(m.fn));
  p.ppv = ratio(tp, tp + static_cast<double>(m.fp));
  p.f1 = ratio(2.0 * p.ppv * p.se, p.ppv + p.se);
  return p;
}

}  // namespace fetalsep
