#include "fetalsep/nn/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fetalsep/error.hpp"

namespace fetalsep::nn {

void nadam_step(ParamStore& store, const NadamConfig& cfg, std::uint64_t t) {
  if (t < 1) throw Error(ErrorCode::BadConfig, "nadam step index must be >= 1");
  const double td = static_cast<double>(t);
  const double b1t = std::pow(cfg.beta1, td);
  const double bias2 = 1.0 - std::pow(cfg.beta2, td);
  const double grad_coef = cfg.lr * (1.0 - cfg.beta1) / (1.0 - b1t);
  const double mom_coef = cfg.lr * cfg.beta1 / (1.0 - b1t * cfg.beta1);
  for (Param& p : store) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
      p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
      const double denom = std::sqrt(p.v[i] / bias2) + cfg.eps;
      p.value[i] -= (grad_coef * g + mom_coef * p.m[i]) / denom;
    }
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }
}

}  // namespace fetalsep::nn
