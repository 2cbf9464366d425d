#include "fetalsep/metrics.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fetalsep/error.hpp"

namespace fetalsep {
namespace {

void require_same(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "inputs differ in length");
  if (a.size() < min_len) {
    throw Error(ErrorCode::TooShort, "need at least " + std::to_string(min_len) + " samples");
  }
}

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Lifting constants of the CDF 9/7 wavelet.
constexpr double kAlpha = -1.586134342059924;
constexpr double kBeta = -0.052980118572961;
constexpr double kGamma = 0.882911075530934;
constexpr double kDelta = 0.443506852043971;
constexpr double kZeta = 1.149604398860241;

// d[i] += c * (s[i] + s[i+1]), s[ns] mirrored to s[ns-1]
void lift_detail(std::vector<double>& d, const std::vector<double>& s, double c) {
  const std::size_t ns = s.size();
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] += c * (s[i] + (i + 1 < ns ? s[i + 1] : s[ns - 1]));
  }
}

// s[i] += c * (d[i-1] + d[i]), d[-1] mirrored to d[0] and d[nd] to d[nd-1]
void lift_approx(std::vector<double>& s, const std::vector<double>& d, double c) {
  const std::size_t nd = d.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double left = i > 0 ? d[i - 1] : d[0];
    const double right = i < nd ? d[i] : d[nd - 1];
    s[i] += c * (left + right);
  }
}

}  // namespace

double r_squared(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, 2);
  const double m = mean(y);
  double sse = 0.0;
  double sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    sst += (y[i] - m) * (y[i] - m);
  }
  if (!(sst > 0.0)) throw Error(ErrorCode::ConstantReference, "reference signal is constant");
  return 1.0 - sse / sst;
}

double icc(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, 3);
  const auto n = static_cast<double>(y.size());
  const double k = 2.0;
  const double my = mean(y);
  const double mh = mean(y_hat);
  const double grand = 0.5 * (my + mh);
  double ss_rows = 0.0;
  double ss_total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double row = 0.5 * (y[i] + y_hat[i]);
    ss_rows += k * (row - grand) * (row - grand);
    ss_total += (y[i] - grand) * (y[i] - grand) + (y_hat[i] - grand) * (y_hat[i] - grand);
  }
  const double ss_cols = n * ((my - grand) * (my - grand) + (mh - grand) * (mh - grand));
  const double ss_err = ss_total - ss_rows - ss_cols;
  const double ms_rows = ss_rows / (n - 1.0);
  const double ms_cols = ss_cols / (k - 1.0);
  const double ms_err = ss_err / ((n - 1.0) * (k - 1.0));
  const double denom = ms_rows + (k - 1.0) * ms_err + k * (ms_cols - ms_err) / n;
  if (!(std::abs(denom) > 0.0)) {
    throw Error(ErrorCode::DegenerateVariance, "ICC undefined for zero variance");
  }
  return (ms_rows - ms_err) / denom;
}

void cdf97_analysis(std::span<const double> x, std::vector<double>& approx,
                    std::vector<double>& detail) {
  if (x.size() < 2) throw Error(ErrorCode::TooShort, "wavelet level needs two samples");
  approx.clear();
  detail.clear();
  for (std::size_t i = 0; i < x.size(); ++i) (i % 2 == 0 ? approx : detail).push_back(x[i]);
  lift_detail(detail, approx, kAlpha);
  lift_approx(approx, detail, kBeta);
  lift_detail(detail, approx, kGamma);
  lift_approx(approx, detail, kDelta);
  for (double& v : approx) v *= kZeta;
  for (double& v : detail) v /= kZeta;
}

std::vector<double> cdf97_synthesis(std::span<const double> approx_in,
                                    std::span<const double> detail_in) {
  std::vector<double> s(approx_in.begin(), approx_in.end());
  std::vector<double> d(detail_in.begin(), detail_in.end());
  if (s.size() != d.size() && s.size() != d.size() + 1) {
    throw Error(ErrorCode::ShapeMismatch, "subband sizes are inconsistent");
  }
  for (double& v : s) v /= kZeta;
  for (double& v : d) v *= kZeta;
  lift_approx(s, d, -kDelta);
  lift_detail(d, s, -kGamma);
  lift_approx(s, d, -kBeta);
  lift_detail(d, s, -kAlpha);
  std::vector<double> x(s.size() + d.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 == 0) ? s[i / 2] : d[i / 2];
  return x;
}

SubbandSet dwt_cdf97(std::span<const double> s, std::size_t levels) {
  if (levels < 1 || s.size() < (std::size_t{1} << levels)) {
    throw Error(ErrorCode::TooShort, "signal shorter than 2^levels");
  }
  SubbandSet out;
  out.length = s.size();
  std::vector<double> current(s.begin(), s.end());
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<double> approx;
    std::vector<double> detail;
    cdf97_analysis(current, approx, detail);
    out.details.push_back(std::move(detail));
    current = std::move(approx);
  }
  out.approximation = std::move(current);
  return out;
}

std::vector<double> idwt_cdf97(const SubbandSet& bands) {
  std::vector<double> current = bands.approximation;
  for (std::size_t l = bands.levels(); l-- > 0;) {
    current = cdf97_synthesis(current, bands.details[l]);
  }
  return current;
}

std::string to_string(WeddCategory c) {
  switch (c) {
    case WeddCategory::Excellent: return "excellent";
    case WeddCategory::VeryGood: return "very good";
    case WeddCategory::Good: return "good";
    case WeddCategory::NotBad: return "not bad";
    case WeddCategory::Bad: return "bad";
  }
  return "bad";
}

WeddCategory classify_wedd(double v) {
  if (v < 4.6) return WeddCategory::Excellent;
  if (v < 7.0) return WeddCategory::VeryGood;
  if (v < 11.2) return WeddCategory::Good;
  if (v <= 13.6) return WeddCategory::NotBad;
  return WeddCategory::Bad;
}

WeddResult wedd(std::span<const double> y, std::span<const double> y_hat, std::size_t levels) {
  require_same(y, y_hat, std::size_t{1} << levels);
  const double my = mean(y);
  const double mh = mean(y_hat);
  std::vector<double> yc(y.size());
  std::vector<double> hc(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    yc[i] = y[i] - my;
    hc[i] = y_hat[i] - mh;
  }
  const SubbandSet orig = dwt_cdf97(yc, levels);
  const SubbandSet pred = dwt_cdf97(hc, levels);

  WeddResult out;
  std::vector<double> energy(levels + 1, 0.0);
  std::vector<double> error(levels + 1, 0.0);
  double total = 0.0;
  for (std::size_t l = 0; l <= levels; ++l) {
    const auto& d = orig.subband(l);
    const auto& p = pred.subband(l);
    for (std::size_t k = 0; k < d.size(); ++k) {
      energy[l] += d[k] * d[k];
      error[l] += (d[k] - p[k]) * (d[k] - p[k]);
    }
    total += energy[l];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::ZeroEnergy, "reference has no wavelet energy");
  out.wprd.assign(levels + 1, 0.0);
  out.weights.assign(levels + 1, 0.0);
  for (std::size_t l = 0; l <= levels; ++l) {
    if (!(energy[l] > 0.0)) continue;
    out.weights[l] = energy[l] / total;
    out.wprd[l] = 100.0 * std::sqrt(error[l] / energy[l]);
    out.wedd += out.weights[l] * out.wprd[l];
  }
  out.category = classify_wedd(out.wedd);
  return out;
}

BlandAltman bland_altman(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, 2);
  BlandAltman out;
  const std::size_t n = y.size();
  out.means.resize(n);
  out.diffs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.means[i] = 0.5 * (y[i] + y_hat[i]);
    out.diffs[i] = y_hat[i] - y[i];
  }
  out.bias = mean(out.diffs);
  double ss = 0.0;
  for (double d : out.diffs) ss += (d - out.bias) * (d - out.bias);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  out.loa_lo = out.bias - 1.96 * sd;
  out.loa_hi = out.bias + 1.96 * sd;
  return out;
}

double student_t_two_sided_p(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return boost::math::ibeta(dof / 2.0, 0.5, x);
}

TTest paired_t_test(std::span<const double> y, std::span<const double> y_hat) {
  require_same(y, y_hat, 2);
  const auto n = static_cast<double>(y.size());
  std::vector<double> d(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) d[i] = y_hat[i] - y[i];
  const double md = mean(d);
  double ss = 0.0;
  for (double v : d) ss += (v - md) * (v - md);
  const double sd = std::sqrt(ss / (n - 1.0));
  // differences equal up to rounding count as constant
  if (sd <= 1e-12 * std::abs(md) || sd == 0.0) {
    if (md == 0.0) return {0.0, 1.0};
    return {md > 0.0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity(),
            0.0};
  }
  const double t = md / (sd / std::sqrt(n));
  return {t, student_t_two_sided_p(t, n - 1.0)};
}

KendallTau kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  require_same(a, b, 2);
  const std::size_t n = a.size();
  double concordant_minus_discordant = 0.0;
  double ties_a = 0.0;
  double ties_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0) ties_a += 1.0;
      if (db == 0.0) ties_b += 1.0;
      if (da != 0.0 && db != 0.0) concordant_minus_discordant += (da * db > 0.0) ? 1.0 : -1.0;
    }
  }
  const double nd = static_cast<double>(n);
  const double pairs = nd * (nd - 1.0) / 2.0;
  const double denom = std::sqrt((pairs - ties_a) * (pairs - ties_b));
  if (!(denom > 0.0)) throw Error(ErrorCode::AllTied, "one input is constant");
  KendallTau out;
  out.tau_b = concordant_minus_discordant / denom;

  // Tie-corrected null variance of S = nc - nd.
  auto tie_groups = [](std::span<const double> x) {
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> sizes;
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      if (j - i > 1) sizes.push_back(static_cast<double>(j - i));
      i = j;
    }
    return sizes;
  };
  const auto ta = tie_groups(a);
  const auto tb = tie_groups(b);
  double va = 0.0, vb = 0.0, a1 = 0.0, b1 = 0.0, a2 = 0.0, b2 = 0.0;
  for (double t : ta) {
    va += t * (t - 1.0) * (2.0 * t + 5.0);
    a1 += t * (t - 1.0);
    a2 += t * (t - 1.0) * (t - 2.0);
  }
  for (double t : tb) {
    vb += t * (t - 1.0) * (2.0 * t + 5.0);
    b1 += t * (t - 1.0);
    b2 += t * (t - 1.0) * (t - 2.0);
  }
  double var = (nd * (nd - 1.0) * (2.0 * nd + 5.0) - va - vb) / 18.0 +
               a1 * b1 / (2.0 * nd * (nd - 1.0));
  if (n > 2) var += a2 * b2 / (9.0 * nd * (nd - 1.0) * (nd - 2.0));
  if (var > 0.0) {
    const double z = concordant_minus_discordant / std::sqrt(var);
    out.p = std::erfc(std::abs(z) / std::sqrt(2.0));
  }
  return out;
}

AgreementReport agreement(std::span<const double> y, std::span<const double> y_hat) {
  AgreementReport r;
  r.r2 = r_squared(y, y_hat);
  r.icc = icc(y, y_hat);
  const BlandAltman ba = bland_altman(y, y_hat);
  r.bias = ba.bias;
  r.loa_lo = ba.loa_lo;
  r.loa_hi = ba.loa_hi;
  const TTest t = paired_t_test(y, y_hat);
  r.t_stat = t.t;
  r.p_value = t.p;
  return r;
}

}  // namespace fetalsep
