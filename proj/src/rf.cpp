// SPDX-License-Identifier: Apache-2.0
#include "ptsc/rf.hpp"

#include <ostream>

#include <algorithm>
#include <stdexcept>

PTSC_BEGIN_NAMESPACE
namespace rf {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

}  // namespace

void LayerGeom::validate() const {
  if (kernel < 1 || stride < 1 || padding < 0) {
    throw std::invalid_argument("layer geometry needs kernel >= 1, stride >= 1, padding >= 0 (got k=" +
                                std::to_string(kernel) + " s=" + std::to_string(stride) +
                                " p=" + std::to_string(padding) + ")");
  }
}

std::int64_t LayerGeom::output_extent(std::int64_t input_extent) const {
  const std::int64_t span = input_extent + 2 * padding - kernel;
  if (span < 0) return -1;
  return span / stride + 1;
}

std::string to_string(const ValidInterval& v) {
  return "[" + std::to_string(v.start) + "," + std::to_string(v.end) + ")";
}

std::ostream& operator<<(std::ostream& os, const ValidInterval& v) { return os << to_string(v); }

std::vector<RfEntry> rf_of_stack(std::span<const LayerGeom> layers) {
  std::vector<RfEntry> out;
  out.reserve(layers.size());
  std::int64_t rf = 1, jump = 1, left = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& g = layers[i];
    g.validate();
    left -= g.padding * jump;
    rf += (g.kernel - 1) * jump;
    jump *= g.stride;
    out.push_back(RfEntry{i, rf, jump, left});
  }
  return out;
}

ValidInterval propagate_valid(const ValidInterval& interval, const LayerGeom& geom) {
  geom.validate();
  if (!interval.empty()) {
    const std::int64_t lo = ceil_div(interval.start + geom.padding, geom.stride);
    const std::int64_t hi = floor_div(interval.end + geom.padding - geom.kernel, geom.stride);
    if (lo <= hi) return {lo, hi + 1};
  }
  // Twice the input centre, shifted into output-window-centre units.
  const std::int64_t twice_centre =
      (interval.start + interval.end - 1) + 2 * geom.padding - (geom.kernel - 1);
  const std::int64_t pos = floor_div(twice_centre + geom.stride, 2 * geom.stride);
  return {pos, pos};
}

ValidInterval clamp_nonempty(const ValidInterval& interval, std::int64_t extent) {
  if (extent < 1) throw std::invalid_argument("clamp_nonempty: extent must be >= 1");
  if (!interval.empty()) return interval;
  const std::int64_t pos = std::clamp<std::int64_t>(interval.start, 0, extent - 1);
  return {pos, pos + 1};
}

std::size_t surviving_blocks(std::span<const std::int64_t> block_rfs, std::int64_t length) {
  return static_cast<std::size_t>(
      std::count_if(block_rfs.begin(), block_rfs.end(), [&](std::int64_t r) { return r <= length; }));
}

std::vector<std::size_t> truncation_table(std::span<const std::int64_t> block_rfs,
                                          std::span<const std::int64_t> lengths) {
  std::vector<std::size_t> out;
  out.reserve(lengths.size());
  for (auto t : lengths) out.push_back(surviving_blocks(block_rfs, t));
  return out;
}

}  // namespace rf
PTSC_END_NAMESPACE
