#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fetalsep {

/// 1 - SSE / SST against the reference y.
double r_squared(std::span<const double> y, std::span<const double> y_hat);

/// ICC(2,1): two-way random effects, absolute agreement, single measurement.
double icc(std::span<const double> y, std::span<const double> y_hat);

/// Multilevel CDF 9/7 decomposition. details[0] is the finest level; the
/// approximation of the deepest level is kept separately. The lifting steps
/// are scaled so the low-pass DC gain is sqrt(2).
struct SubbandSet {
  std::vector<std::vector<double>> details;
  std::vector<double> approximation;
  std::size_t length = 0;

  std::size_t levels() const { return details.size(); }
  // subband(l) for l in [0, levels]: details then the approximation
  const std::vector<double>& subband(std::size_t l) const {
    return l < details.size() ? details[l] : approximation;
  }
};

SubbandSet dwt_cdf97(std::span<const double> s, std::size_t levels = 5);
std::vector<double> idwt_cdf97(const SubbandSet& bands);

// single-level helpers, whole-sample symmetric boundaries
void cdf97_analysis(std::span<const double> x, std::vector<double>& approx,
                    std::vector<double>& detail);
std::vector<double> cdf97_synthesis(std::span<const double> approx, std::span<const double> detail);

enum class WeddCategory { Excellent, VeryGood, Good, NotBad, Bad };

std::string to_string(WeddCategory c);
WeddCategory classify_wedd(double percent);

struct WeddResult {
  double wedd = 0.0;          // percent
  std::vector<double> wprd;   // percent, per subband (details then approximation)
  std::vector<double> weights;
  WeddCategory category = WeddCategory::Excellent;
};

WeddResult wedd(std::span<const double> y, std::span<const double> y_hat, std::size_t levels = 5);

struct BlandAltman {
  double bias = 0.0;
  double loa_lo = 0.0;
  double loa_hi = 0.0;
  std::vector<double> means;
  std::vector<double> diffs;
};

BlandAltman bland_altman(std::span<const double> y, std::span<const double> y_hat);

struct TTest {
  double t = 0.0;
  double p = 1.0;
};

/// Paired t-test on d = y_hat - y, two-sided.
TTest paired_t_test(std::span<const double> y, std::span<const double> y_hat);

/// Two-sided tail probability of Student's t with dof degrees of freedom.
double student_t_two_sided_p(double t, double dof);

struct KendallTau {
  double tau_b = 0.0;
  double p = 1.0;
};

KendallTau kendall_tau_b(std::span<const double> a, std::span<const double> b);

struct AgreementReport {
  double r2 = 0.0;
  double icc = 0.0;
  double bias = 0.0;
  double loa_lo = 0.0;
  double loa_hi = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
};

AgreementReport agreement(std::span<const double> y, std::span<const double> y_hat);

}  // namespace fetalsep
