// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "ptsc/layers.hpp"
#include "ptsc/rf.hpp"
#include "ptsc/tensor.hpp"

PTSC_BEGIN_NAMESPACE
namespace te {

/// Learnable per-timestamp vectors. Column t of `table` encodes timestamp
/// t + 1, so frame t of a position-preserving padded input reads column t.
struct TemporalEncoding {
  Tensor table;  // [C_e, T_max]
  bool cyclic = false;

  /// Table drawn from N(0, stddev^2).
  static TemporalEncoding create(std::size_t channels, std::size_t t_max, bool cyclic, layers::Rng& rng,
                                 Real stddev = Real(0.05));

  std::size_t channels() const { return table.dim(0); }
  std::size_t t_max() const { return table.dim(1); }
};

/// Concatenates the encoding below the data channels of x [B, D, T]:
/// output [B, D + C_e, T]. In cyclic mode frame t reads column t mod T_max;
/// otherwise every valid interval must end at or before T_max.
Tensor apply_te(const TemporalEncoding& te, const Tensor& x, std::span<const rf::ValidInterval> valid);

struct PaddedSeries {
  Tensor values;  // [D, T_max]
  rf::ValidInterval valid;
};

/// Places x [D, T] at frames [t1 - 1, t1 - 1 + T) of a zero array of
/// length T_max (t1 is 1-based).
PaddedSeries pad_preserving_position(const Tensor& x, std::int64_t t1, std::size_t t_max);

/// Pearson correlation between columns of the table, taken over channels.
/// Columns with zero variance get 0 in every entry that involves them.
Tensor te_correlation(const TemporalEncoding& te);

}  // namespace te
PTSC_END_NAMESPACE
