// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ptsc/config.hpp"

PTSC_BEGIN_NAMESPACE
namespace rf {

/// Geometry of one sliding-window layer (convolution or pooling).
/// Output frame j reads input frames [j*stride - padding, j*stride - padding + kernel).
struct LayerGeom {
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;

  void validate() const;
  /// Output extent for an input of `input_extent` frames, or a negative value
  /// when the input is shorter than one window.
  std::int64_t output_extent(std::int64_t input_extent) const;
};

struct RfEntry {
  std::size_t layer = 0;
  std::int64_t rf = 1;
  std::int64_t jump = 1;
  /// Input frame touched first by feature 0; negative when padding reaches
  /// past the start of the input.
  std::int64_t left_offset = 0;

  /// Half-open input window seen by feature `index`.
  std::int64_t window_begin(std::int64_t index) const { return left_offset + index * jump; }
  std::int64_t window_end(std::int64_t index) const { return window_begin(index) + rf; }
};

/// Half-open frame range [start, end) in the coordinates of one feature map.
/// An empty interval keeps its position so a fallback frame can be chosen.
struct ValidInterval {
  std::int64_t start = 0;
  std::int64_t end = 0;

  std::int64_t length() const { return end > start ? end - start : 0; }
  bool empty() const { return end <= start; }
  bool contains(std::int64_t frame) const { return frame >= start && frame < end; }
  friend bool operator==(const ValidInterval&, const ValidInterval&) = default;
};

std::string to_string(const ValidInterval& v);
std::ostream& operator<<(std::ostream& os, const ValidInterval& v);

/// Cumulative receptive field, jump and left offset after every layer.
std::vector<RfEntry> rf_of_stack(std::span<const LayerGeom> layers);

/// Maps an input valid interval through one layer: an output frame is valid
/// iff its whole window lies inside the input interval. When nothing is
/// valid, the returned empty interval sits at the output frame whose window
/// centre is nearest the centre of the input interval.
ValidInterval propagate_valid(const ValidInterval& interval, const LayerGeom& geom);

/// Length-1 fallback for empty intervals, clipped into [0, extent).
ValidInterval clamp_nonempty(const ValidInterval& interval, std::int64_t extent);

/// For each length, the number of blocks whose receptive field fits in it.
std::vector<std::size_t> truncation_table(std::span<const std::int64_t> block_rfs,
                                          std::span<const std::int64_t> lengths);
std::size_t surviving_blocks(std::span<const std::int64_t> block_rfs, std::int64_t length);

}  // namespace rf
PTSC_END_NAMESPACE
