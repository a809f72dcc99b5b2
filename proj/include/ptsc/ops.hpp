// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "ptsc/rf.hpp"
#include "ptsc/tensor.hpp"

PTSC_BEGIN_NAMESPACE
namespace ops {

/// Cross-correlation (no kernel flip) over [B, C_in, T] with symmetric zero
/// padding. `bias` may be undefined.
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t padding);

/// Ties send the gradient to the first maximal element of each window.
Tensor max_pool1d(const Tensor& input, std::size_t window, std::size_t stride);

/// Per-sample, per-channel mean of [B, C, T] over each sample's interval.
Tensor masked_mean(const Tensor& input, std::span<const rf::ValidInterval> valid);

/// [B, F_in] x [F_out, F_in]^T + bias. `bias` may be undefined.
Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias);

enum class Activation { relu, sigmoid, tanh };
Tensor elementwise(const Tensor& input, Activation fn);
inline Tensor relu(const Tensor& x) { return elementwise(x, Activation::relu); }
inline Tensor sigmoid(const Tensor& x) { return elementwise(x, Activation::sigmoid); }
inline Tensor tanh(const Tensor& x) { return elementwise(x, Activation::tanh); }

/// Weighted mean of -log softmax(logits)[label]: sum(w_b * l_b) / sum(w_b).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                             std::span<const Real> sample_weights);

/// Row-wise softmax of [B, N], computed without recording.
std::vector<Real> softmax_rows(const Tensor& logits);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// Concatenates along `axis`; every other extent must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& input, std::size_t axis, std::size_t start, std::size_t length);

/// Multiplies sample b (leading axis) by the constant factors[b].
Tensor scale_rows(const Tensor& input, std::span<const Real> factors);

/// Scalar sum_i weights[i] * input[i]; with all-ones weights, a plain sum.
Tensor weighted_sum(const Tensor& input, std::span<const Real> weights);
Tensor sum(const Tensor& input);

/// Appends rows of `table` [C, T_table] as extra channels of [B, D, T]:
/// frame t of every sample receives column columns[t].
Tensor append_table_channels(const Tensor& input, const Tensor& table,
                             std::span<const std::size_t> columns);

struct BatchNormStats {
  std::vector<Real> mean;
  std::vector<Real> variance;  // biased
  std::size_t count = 0;       // valid frames per channel
};

struct MaskedBatchNormResult {
  Tensor output;
  BatchNormStats stats;
};

/// Training-mode normalisation of [B, C, T]. Mean and variance come from the
/// union of valid frames across the batch; every frame, valid or not, is
/// normalised with those statistics.
MaskedBatchNormResult masked_batch_norm(const Tensor& input, std::span<const rf::ValidInterval> valid,
                                        const Tensor& gamma, const Tensor& beta, Real epsilon);

/// Inference-mode normalisation with fixed statistics.
Tensor batch_norm_inference(const Tensor& input, std::span<const Real> mean,
                            std::span<const Real> variance, const Tensor& gamma, const Tensor& beta,
                            Real epsilon);

}  // namespace ops
PTSC_END_NAMESPACE
