#pragma once

#include <cstdint>

#include "fetalsep/nn/param_store.hpp"

namespace fetalsep::nn {

struct NadamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Nadam update at step t >= 1 (Adam moments, Nesterov look-ahead on the
// first moment). Gradients are zeroed afterwards.
void nadam_step(ParamStore& store, const NadamConfig& cfg, std::uint64_t t);

}  // namespace fetalsep::nn
