#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fetalsep/nn/tensor.hpp"

namespace fetalsep::nn {

// ---------------------------------------------------------------------------
// Conv1D with 'same' zero padding (kernel odd). Weight layout is
// out_ch x in_ch x kernel, row-major; output length is ceil(L / stride).

struct ConvGeometry {
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;

  std::size_t out_length(std::size_t length) const { return (length + stride - 1) / stride; }
  std::size_t weight_size() const { return out_ch * in_ch * kernel; }
};

struct Conv1dGrads {
  Tensor x;
  std::vector<double> weight;
  std::vector<double> bias;
};

Tensor conv1d_forward(const Tensor& x, std::span<const double> weight,
                      std::span<const double> bias, const ConvGeometry& geom);

Conv1dGrads conv1d_backward(const Tensor& x, std::span<const double> weight,
                            const ConvGeometry& geom, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Elementwise activations. Backward takes the forward input.

Tensor sine_forward(const Tensor& x, double omega);
Tensor sine_backward(const Tensor& x, double omega, const Tensor& grad_out);

Tensor leaky_relu_forward(const Tensor& x, double slope = 0.2);
Tensor leaky_relu_backward(const Tensor& x, double slope, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Attention gate. Q, K, V are kernel-1 projections of the input to `dim`
// channels; scores are q_t . k_s / sqrt(dim) with no softmax. The attention
// output A = S V is reduced to a per-position energy, min-max normalized per
// window to w_t, and gated: mask_t = w_t if w_t >= threshold else 0.

enum class MaskEnergy {
  // e_t = channel mean of A; high-energy positions are kept
  ChannelMean,
  // e_t = -(channel mean of A)^2; the largest excursions are suppressed
  Suppress,
};

struct AttentionWeights {
  std::span<const double> wq, bq, wk, bk, wv, bv;  // each projection: dim x in_ch, dim
  std::size_t in_ch = 1;
  std::size_t dim = 16;
};

struct AttentionTrace {
  Tensor x;
  Tensor q, k, v;  // batch x dim x L
  std::vector<double> context;  // batch x dim, sum_s k_s * mean_c v[c, s]
  std::vector<double> mean_out;  // batch x L, channel mean of the attention output
  std::vector<double> weight;    // batch x L, normalized w_t
  std::vector<std::size_t> argmin, argmax;
  std::vector<bool> degenerate;
  MaskEnergy energy = MaskEnergy::ChannelMean;
  double threshold = 0.8;
};

struct AttentionOutput {
  Tensor masked;
  Tensor mask;  // batch x 1 x L
  AttentionTrace trace;
};

struct AttentionGrads {
  Tensor x;
  std::vector<double> wq, bq, wk, bk, wv, bv;
};

AttentionOutput attention_mask_forward(const Tensor& x, const AttentionWeights& w,
                                       double threshold = 0.8,
                                       MaskEnergy energy = MaskEnergy::ChannelMean);

// The threshold indicator is treated as a constant (straight-through gate).
AttentionGrads attention_mask_backward(const AttentionTrace& trace, const AttentionWeights& w,
                                       const Tensor& grad_masked);

// ---------------------------------------------------------------------------
// Linear x2 upsampling: out[2i] = x[i], out[2i+1] = (x[i] + x[i+1]) / 2 with
// the last sample replicated past the right edge.

Tensor upsample2_forward(const Tensor& x);
Tensor upsample2_backward(const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Dense layer over the flattened channels x length features followed by a
// softmax. Weight layout: classes x features.

struct DenseSoftmaxOutput {
  std::vector<double> probs;  // batch x classes
  std::size_t classes = 0;
};

DenseSoftmaxOutput dense_softmax_forward(const Tensor& x, std::span<const double> weight,
                                         std::span<const double> bias, std::size_t classes);

struct DenseGrads {
  Tensor x;
  std::vector<double> weight;
  std::vector<double> bias;
};

DenseGrads dense_softmax_backward(const Tensor& x, std::span<const double> weight,
                                  const DenseSoftmaxOutput& out,
                                  std::span<const double> grad_probs);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace fetalsep::nn
