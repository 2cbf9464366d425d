#include "vecmath.hpp"

#include <cmath>

// Built with -ffast-math -fopenmp-simd so gcc can call glibc's vector sin/cos.
namespace fetalsep::nn::detail {

void sin_scaled(const double* x, double* y, std::size_t n, double w) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(w * x[i]);
}

void mul_cos_scaled(const double* x, double* g, std::size_t n, double w) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) g[i] *= w * std::cos(w * x[i]);
}

}  // namespace fetalsep::nn::detail
