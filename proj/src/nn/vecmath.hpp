#pragma once

#include <cstddef>

namespace fetalsep::nn::detail {

// y[i] = sin(w * x[i])
void sin_scaled(const double* x, double* y, std::size_t n, double w);
// g[i] *= w * cos(w * x[i])
void mul_cos_scaled(const double* x, double* g, std::size_t n, double w);

}  // namespace fetalsep::nn::detail
