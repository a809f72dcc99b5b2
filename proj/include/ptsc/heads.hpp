// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ptsc/layers.hpp"

PTSC_BEGIN_NAMESPACE
namespace heads {

/// gap: BaseCNN, multi_scale: MSCNN, adaptive_scale: ASCNN,
/// adaptive_multi_scale: AMSCNN (adaptive multi-scale pooling).
enum class HeadVariant { gap, multi_scale, adaptive_scale, adaptive_multi_scale };

std::string_view to_string(HeadVariant v);
HeadVariant parse_head_variant(std::string_view name);

struct HeadConfig {
  HeadVariant variant = HeadVariant::adaptive_multi_scale;
  std::size_t projection_channels = 64;
  /// Treat the (encoded) input itself as level 0 of the multi-scale sequence.
  bool include_input_level = true;
  std::size_t hidden_size = 64;
};

/// z_l = GAP(F_l(f_l)) for a pointwise projection F_l. Both maps are linear,
/// so the masked mean is taken first and the projection applied to the
/// [B, C] result; the value equals projecting every frame and then pooling.
Tensor project_and_pool(const layers::FeatureMap& features, const layers::Affine& projection);

struct MultiScaleSequence {
  std::vector<Tensor> steps;         // [B, F] each, ascending level
  std::vector<std::size_t> levels;   // level index of each step (0 = input)
  std::vector<std::size_t> lengths;  // per-sample effective length T'
};

/// Orders the per-level features z_0..z_L (index = level; z_0 ignored unless
/// the input level is included) and computes each sample's effective length:
/// include_input_level + |{l : rf_l <= T}|. Steps past every sample's length
/// are dropped.
MultiScaleSequence build_sequence(std::span<const Tensor> level_features, std::span<const std::int64_t> block_rfs,
                                  std::span<const std::int64_t> lengths, const HeadConfig& config);

/// Fixed-size summary z_f of a variable number of blocks.
class Head {
 public:
  Head() = default;
  /// `level_channels[l]` is the channel count of level l (0 = input).
  Head(HeadConfig config, std::span<const std::size_t> level_channels, layers::Rng& rng);

  /// `levels[l]` holds f_l with its valid intervals; `lengths` are the input
  /// lengths T of the samples.
  Tensor forward(std::span<const layers::FeatureMap> levels, std::span<const std::int64_t> block_rfs,
                 std::span<const std::int64_t> lengths) const;

  std::size_t output_size() const { return output_size_; }
  const HeadConfig& config() const { return config_; }
  void collect_parameters(const std::string& prefix, std::vector<layers::NamedTensor>& out) const;

 private:
  /// Levels past `max_level` are not needed by any sample and stay uncomputed.
  std::vector<Tensor> projected_levels(std::span<const layers::FeatureMap> levels, std::size_t max_level) const;
  std::size_t level_for(std::size_t surviving) const;

  HeadConfig config_;
  std::vector<std::optional<layers::Affine>> projections_;  // indexed by level
  layers::RecurrentAggregator aggregator_;
  std::size_t output_size_ = 0;
};

}  // namespace heads
PTSC_END_NAMESPACE
