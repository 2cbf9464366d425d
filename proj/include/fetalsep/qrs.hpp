#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "fetalsep/signal.hpp"

namespace fetalsep {

/// Strictly increasing sample indices of R peaks.
struct PeakList {
  std::vector<std::size_t> indices;
  int fs = 0;
};

struct PanTompkinsConfig {
  double band_lo = 5.0;
  double band_hi = 15.0;
  double integration_s = 0.150;
  double refractory_s = 0.200;
  double twave_s = 0.360;
  double refine_s = 0.050;
  double learning_s = 2.0;
  double searchback_factor = 1.66;
};

PeakList pan_tompkins(const Signal& s, const PanTompkinsConfig& cfg = {});

struct MatchResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::vector<std::pair<std::size_t, std::size_t>> matched_pairs;  // (detected, reference)
};

/// Greedy one-to-one pairing, closest pairs first, within +-tol samples.
MatchResult match_beats(const PeakList& detected, const PeakList& reference, std::size_t tol = 6);

struct Prf {
  double se = 0.0;
  double ppv = 0.0;
  double f1 = 0.0;
};

// 0/0 ratios are defined as 0
Prf prf(const MatchResult& m);

}  // namespace fetalsep
