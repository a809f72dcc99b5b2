// SPDX-License-Identifier: Apache-2.0
#include "ptsc/heads.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

PTSC_BEGIN_NAMESPACE
namespace heads {

std::string_view to_string(HeadVariant v) {
  switch (v) {
    case HeadVariant::gap: return "gap";
    case HeadVariant::multi_scale: return "multi_scale";
    case HeadVariant::adaptive_scale: return "adaptive_scale";
    case HeadVariant::adaptive_multi_scale: return "adaptive_multi_scale";
  }
  return "unknown";
}

HeadVariant parse_head_variant(std::string_view name) {
  for (auto v : {HeadVariant::gap, HeadVariant::multi_scale, HeadVariant::adaptive_scale,
                 HeadVariant::adaptive_multi_scale}) {
    if (name == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown head variant '" + std::string(name) +
                              "' (expected gap, multi_scale, adaptive_scale or adaptive_multi_scale)");
}

Tensor project_and_pool(const layers::FeatureMap& features, const layers::Affine& projection) {
  return projection.forward(ops::masked_mean(features.values, features.valid));
}

namespace {

std::size_t surviving(std::span<const std::int64_t> block_rfs, std::int64_t length) {
  return static_cast<std::size_t>(std::count_if(block_rfs.begin(), block_rfs.end(),
                                                [&](std::int64_t r) { return r <= length; }));
}

[[noreturn]] void empty_sequence(std::int64_t length, std::int64_t first_rf) {
  throw std::invalid_argument("sample of length " + std::to_string(length) +
                              " is shorter than the first block's receptive field (" + std::to_string(first_rf) +
                              ") and the input level is disabled; enable include_input_level");
}

}  // namespace

MultiScaleSequence build_sequence(std::span<const Tensor> level_features, std::span<const std::int64_t> block_rfs,
                                  std::span<const std::int64_t> lengths, const HeadConfig& config) {
  if (level_features.size() != block_rfs.size() + 1) {
    throw std::invalid_argument("build_sequence: need one feature per level (input + " +
                                std::to_string(block_rfs.size()) + " blocks), got " +
                                std::to_string(level_features.size()));
  }
  const std::size_t first = config.include_input_level ? 0 : 1;
  MultiScaleSequence seq;
  std::size_t longest = 0;
  for (auto len : lengths) {
    const std::size_t n = (config.include_input_level ? 1 : 0) + surviving(block_rfs, len);
    if (n == 0) empty_sequence(len, block_rfs.empty() ? 0 : block_rfs.front());
    seq.lengths.push_back(n);
    longest = std::max(longest, n);
  }
  for (std::size_t l = first; l < first + longest; ++l) {
    if (!level_features[l].defined()) {
      throw std::invalid_argument("build_sequence: level " + std::to_string(l) + " is needed but was not computed");
    }
    seq.steps.push_back(level_features[l]);
    seq.levels.push_back(l);
  }
  return seq;
}

Head::Head(HeadConfig config, std::span<const std::size_t> level_channels, layers::Rng& rng)
    : config_(config) {
  if (level_channels.size() < 2) throw std::invalid_argument("head needs at least one block");
  const std::size_t L = level_channels.size() - 1;
  const std::size_t F = config_.projection_channels;
  if (config_.variant == HeadVariant::gap) {
    output_size_ = level_channels.back();
    return;
  }
  if (F == 0) throw std::invalid_argument("head projection channels must be positive");
  projections_.resize(L + 1);
  std::size_t levels = 0;
  for (std::size_t l = config_.include_input_level ? 0 : 1; l <= L; ++l) {
    projections_[l].emplace(level_channels[l], F, rng);
    ++levels;
  }
  switch (config_.variant) {
    case HeadVariant::multi_scale: output_size_ = F * levels; break;
    case HeadVariant::adaptive_scale: output_size_ = F; break;
    case HeadVariant::adaptive_multi_scale:
      if (config_.hidden_size == 0) throw std::invalid_argument("recurrent hidden size must be positive");
      aggregator_ = layers::RecurrentAggregator(F, config_.hidden_size, rng);
      output_size_ = config_.hidden_size;
      break;
    case HeadVariant::gap: break;
  }
}

std::vector<Tensor> Head::projected_levels(std::span<const layers::FeatureMap> levels, std::size_t max_level) const {
  std::vector<Tensor> z(levels.size());
  for (std::size_t l = 0; l <= max_level && l < levels.size(); ++l) {
    if (projections_[l]) z[l] = project_and_pool(levels[l], *projections_[l]);
  }
  return z;
}

std::size_t Head::level_for(std::size_t n_surviving) const {
  return n_surviving;  // deepest surviving block; 0 (the input) when none survive
}

Tensor Head::forward(std::span<const layers::FeatureMap> levels, std::span<const std::int64_t> block_rfs,
                     std::span<const std::int64_t> lengths) const {
  if (levels.size() != block_rfs.size() + 1) {
    throw std::invalid_argument("head: need the input level plus one feature map per block");
  }
  const std::size_t L = block_rfs.size();
  const std::size_t B = levels.front().values.dim(0);
  if (lengths.size() != B) throw std::invalid_argument("head: need one length per sample");

  switch (config_.variant) {
    case HeadVariant::gap:
      return layers::masked_gap(levels.back().values, levels.back().valid);

    case HeadVariant::multi_scale: {
      const auto z = projected_levels(levels, L);
      std::vector<Tensor> parts;
      for (const auto& t : z) {
        if (t.defined()) parts.push_back(t);
      }
      return parts.size() == 1 ? parts.front() : ops::concat(parts, 1);
    }

    case HeadVariant::adaptive_scale: {
      std::vector<std::size_t> chosen(B);
      std::size_t deepest = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t n = surviving(block_rfs, lengths[b]);
        if (n == 0 && !config_.include_input_level) empty_sequence(lengths[b], block_rfs.front());
        chosen[b] = level_for(n);
        deepest = std::max(deepest, chosen[b]);
      }
      const auto z = projected_levels(levels, deepest);
      Tensor out;
      std::vector<Real> pick(B);
      for (std::size_t l = 0; l <= deepest; ++l) {
        bool any = false;
        for (std::size_t b = 0; b < B; ++b) {
          pick[b] = chosen[b] == l ? Real(1) : Real(0);
          any = any || chosen[b] == l;
        }
        if (!any) continue;
        const Tensor part = std::all_of(pick.begin(), pick.end(), [](Real p) { return p == Real(1); })
                                ? z[l]
                                : ops::scale_rows(z[l], pick);
        out = out.defined() ? ops::add(out, part) : part;
      }
      return out;
    }

    case HeadVariant::adaptive_multi_scale: {
      std::size_t deepest = 0;
      for (auto len : lengths) deepest = std::max(deepest, surviving(block_rfs, len));
      const auto z = projected_levels(levels, deepest);
      const auto seq = build_sequence(z, block_rfs, lengths, config_);
      return aggregator_.forward(seq.steps, seq.lengths);
    }
  }
  throw std::logic_error("head: unhandled variant");
}

void Head::collect_parameters(const std::string& prefix, std::vector<layers::NamedTensor>& out) const {
  for (std::size_t l = 0; l < projections_.size(); ++l) {
    if (projections_[l]) projections_[l]->collect_parameters(prefix + ".proj" + std::to_string(l), out);
  }
  if (config_.variant == HeadVariant::adaptive_multi_scale) aggregator_.collect_parameters(prefix + ".lstm", out);
}

}  // namespace heads
PTSC_END_NAMESPACE
