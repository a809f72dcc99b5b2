// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "ptsc/ops.hpp"
#include "ptsc/rf.hpp"
#include "ptsc/tensor.hpp"

PTSC_BEGIN_NAMESPACE
namespace layers {

enum class Mode { train, eval };

struct NamedTensor {
  std::string name;
  Tensor value;
};

using Rng = std::mt19937_64;

/// Uniform in [-bound, bound], drawn in row-major order.
Tensor uniform_tensor(Shape shape, Real bound, Rng& rng, bool requires_grad = true);

class Conv1d {
 public:
  Conv1d() = default;
  /// Weights uniform in +-sqrt(1/(in*kernel)); bias zero.
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t padding, Rng& rng);

  Tensor forward(const Tensor& x) const { return ops::conv1d(x, weight, bias, padding); }
  rf::LayerGeom geometry() const;
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;

  Tensor weight;
  Tensor bias;
  std::size_t padding = 0;
};

class Affine {
 public:
  Affine() = default;
  Affine(std::size_t in_features, std::size_t out_features, Rng& rng);

  Tensor forward(const Tensor& x) const { return ops::affine(x, weight, bias); }
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;

  Tensor weight;
  Tensor bias;
};

/// Batch normalisation whose training statistics see only valid frames.
///
/// Training mode normalises with the mean and (biased) variance over the
/// union of every sample's valid frames and folds them into the running
/// estimates with `momentum` (the running variance uses the unbiased
/// estimate). Evaluation mode uses the running estimates alone. Frames outside
/// the valid intervals are normalised as well but never feed the statistics.
class MaskedBatchNorm {
 public:
  MaskedBatchNorm() = default;
  explicit MaskedBatchNorm(std::size_t channels, Real momentum = Real(0.1), Real epsilon = Real(1e-5));

  /// Training mode updates the running statistics held by this layer; the
  /// caller guarantees a single training thread per model.
  Tensor forward(const Tensor& x, std::span<const rf::ValidInterval> valid, Mode mode) const;

  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;

  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  Real momentum = Real(0.1);
  Real epsilon = Real(1e-5);
};

struct BlockConfig {
  /// One convolution per entry, each with "same"-style padding (kernel-1)/2.
  std::vector<std::size_t> kernels;
  std::size_t channels = 0;
  /// 0 disables pooling.
  std::size_t pool_window = 0;
  std::size_t pool_stride = 0;
  bool residual = false;
};

struct FeatureMap {
  Tensor values;  // [B, C, T]
  std::vector<rf::ValidInterval> valid;
};

/// conv -> masked BN -> ReLU for each kernel, then an optional residual add
/// (identity, or pointwise conv + BN when channel counts differ) and an
/// optional max pool. Valid intervals follow every layer and are clamped to
/// at least one frame.
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(std::size_t in_channels, BlockConfig config, Rng& rng);

  FeatureMap forward(const FeatureMap& input, Mode mode) const;

  /// Geometry of the sliding-window layers in order (convs, then pool).
  std::vector<rf::LayerGeom> geometry() const;
  const BlockConfig& config() const { return config_; }
  std::size_t out_channels() const { return config_.channels; }

  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;

 private:
  BlockConfig config_;
  std::vector<Conv1d> convs_;
  std::vector<MaskedBatchNorm> norms_;
  bool projection_ = false;
  Conv1d shortcut_conv_;
  MaskedBatchNorm shortcut_norm_;
};

/// Single-layer LSTM run from a zero state. Gate order: input, forget,
/// candidate, output. Returns the last hidden state of each sample.
class RecurrentAggregator {
 public:
  RecurrentAggregator() = default;
  RecurrentAggregator(std::size_t input_size, std::size_t hidden_size, Rng& rng);

  /// `sequence[s]` is [B, F]; sample b stops updating after lengths[b] steps.
  Tensor forward(std::span<const Tensor> sequence, std::span<const std::size_t> lengths) const;
  Tensor forward(std::span<const Tensor> sequence) const;

  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_size_; }
  void collect_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;

  Tensor w_input;   // [4H, F]
  Tensor w_hidden;  // [4H, H]
  Tensor bias;      // [4H]

 private:
  std::size_t input_size_ = 0;
  std::size_t hidden_size_ = 0;
};

/// Masked global average pooling of [B, C, T] over each sample's interval.
inline Tensor masked_gap(const Tensor& x, std::span<const rf::ValidInterval> valid) {
  return ops::masked_mean(x, valid);
}

}  // namespace layers
PTSC_END_NAMESPACE
