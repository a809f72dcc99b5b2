// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptsc/checkpoint.hpp"
#include "ptsc/heads.hpp"
#include "ptsc/layers.hpp"
#include "ptsc/temporal_encoding.hpp"

PTSC_BEGIN_NAMESPACE
namespace models {

enum class LengthPolicy {
  /// Inputs are resampled to a common length upstream; every frame is valid.
  fixed_interpolate,
  /// Inputs keep their timestamps inside a padded canvas; valid intervals
  /// are threaded through the backbone.
  variable_masked,
};

std::string_view to_string(LengthPolicy p);
LengthPolicy parse_length_policy(std::string_view name);

struct TeConfig {
  bool enabled = false;
  /// 0 means "as many channels as the input".
  std::size_t channels = 0;
  bool cyclic = false;
};

/// Declarative model description. JSON schema:
///
///   {
///     "name": "amscnn-te",
///     "input_channels": 5, "classes": 2, "t_max": 980,
///     "length_policy": "variable_masked" | "fixed_interpolate",
///     "blocks": [ {"kernels": [7], "channels": 32, "pool_window": 2,
///                  "pool_stride": 2, "residual": false}, ... ],
///     "temporal_encoding": {"enabled": true, "channels": 0, "cyclic": false},
///     "head": {"variant": "adaptive_multi_scale", "projection_channels": 64,
///              "include_input_level": true, "hidden_size": 64},
///     "classifier_hidden": 64
///   }
///
/// input_channels, classes and t_max may be 0 (or omitted) in a preset and
/// filled in from the dataset before building.
struct ModelConfig {
  std::string name;
  std::size_t input_channels = 0;
  std::size_t classes = 0;
  std::size_t t_max = 0;
  LengthPolicy length_policy = LengthPolicy::variable_masked;
  std::vector<layers::BlockConfig> blocks;
  TeConfig te;
  heads::HeadConfig head;
  /// Width of the hidden affine layer before the output; 0 gives a single
  /// affine output layer.
  std::size_t classifier_hidden = 64;

  /// Throws std::invalid_argument when the description cannot be built.
  void validate() const;
};

ModelConfig parse_model_config(std::string_view json_text);
std::string model_config_json(const ModelConfig& config);
ModelConfig load_model_config(const std::filesystem::path& path);

/// Names accepted by `preset`: basecnn, mscnn, ascnn, amscnn (each also with
/// a -te suffix), basecnn-intp, resnet, resnet-vl, resnet-te, amsresnet,
/// amsresnet-te.
std::vector<std::string> preset_names();
ModelConfig preset(std::string_view name);

struct RfReport {
  std::vector<std::string> layer_names;   // e.g. block0.conv0, block0.pool
  std::vector<rf::LayerGeom> layers;
  std::vector<rf::RfEntry> entries;        // one per layer
  std::vector<std::size_t> block_last;     // index into entries of each block's output
  std::vector<std::int64_t> block_rfs;
  std::vector<std::int64_t> block_jumps;
  std::int64_t final_rf = 1;
  std::int64_t cumulative_stride = 1;
};

RfReport rf_report(const ModelConfig& config);
std::string format_rf_report(const RfReport& report, const ModelConfig& config);
std::string rf_report_json(const RfReport& report, const ModelConfig& config);

struct PredictionOutput {
  Tensor logits;                     // [B, N]
  std::vector<Real> probabilities;   // [B, N] row-major
  std::vector<int> predicted;        // argmax, lowest index on ties
};

struct ForwardTrace {
  std::vector<layers::FeatureMap> levels;  // input level (after TE) then each block
  Tensor features;                         // z_f
  PredictionOutput prediction;
};

class Model {
 public:
  Model() = default;

  const ModelConfig& config() const { return config_; }
  const RfReport& rf() const { return rf_; }

  /// x is [B, D, T] with each sample placed at its timestamps; `valid` holds
  /// each sample's frames. Under fixed_interpolate every frame counts as
  /// valid and `valid` may be empty.
  PredictionOutput forward(const Tensor& x, std::span<const rf::ValidInterval> valid, layers::Mode mode) const;
  ForwardTrace trace(const Tensor& x, std::span<const rf::ValidInterval> valid, layers::Mode mode) const;

  std::vector<layers::NamedTensor> parameters() const;
  std::vector<layers::NamedTensor> buffers() const;

  /// Parameters followed by buffers.
  std::vector<NamedArray> state() const;
  /// Strict: every name must be present with the right shape; extra entries
  /// with names outside the model are ignored.
  void load_state(std::span<const NamedArray> entries);

  const std::optional<te::TemporalEncoding>& temporal_encoding() const { return te_; }

 private:
  friend Model build_model(const ModelConfig& config, std::uint64_t seed);

  ModelConfig config_;
  RfReport rf_;
  std::optional<te::TemporalEncoding> te_;
  std::vector<layers::ConvBlock> blocks_;
  heads::Head head_;
  std::vector<layers::Affine> classifier_;
};

/// Parameters are drawn in a fixed order from a generator seeded with `seed`:
/// temporal encoding, blocks, head, classifier.
Model build_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace models
PTSC_END_NAMESPACE
