// SPDX-License-Identifier: Apache-2.0
#include "ptsc/temporal_encoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ptsc/log.hpp"

PTSC_BEGIN_NAMESPACE
namespace te {

TemporalEncoding TemporalEncoding::create(std::size_t channels, std::size_t t_max, bool cyclic,
                                          layers::Rng& rng, Real stddev) {
  if (channels == 0 || t_max == 0) throw std::invalid_argument("temporal encoding needs channels and T_max >= 1");
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  std::vector<Real> values(channels * t_max);
  for (auto& v : values) v = static_cast<Real>(dist(rng));
  return {Tensor({channels, t_max}, std::move(values), true), cyclic};
}

Tensor apply_te(const TemporalEncoding& te, const Tensor& x, std::span<const rf::ValidInterval> valid) {
  if (x.rank() != 3) throw std::invalid_argument("apply_te: input must be [B, D, T]");
  const std::size_t T = x.dim(2), period = te.t_max();
  if (valid.size() != x.dim(0)) throw std::invalid_argument("apply_te: need one valid interval per sample");
  if (!te.cyclic) {
    if (T > period) {
      throw std::invalid_argument("apply_te: input length " + std::to_string(T) + " exceeds T_max " +
                                  std::to_string(period));
    }
    for (const auto& v : valid) {
      if (v.end > static_cast<std::int64_t>(period)) {
        throw std::invalid_argument("apply_te: series ends at timestamp " + std::to_string(v.end) +
                                    " beyond T_max " + std::to_string(period));
      }
    }
  }
  std::vector<std::size_t> columns(T);
  for (std::size_t t = 0; t < T; ++t) columns[t] = t % period;
  return ops::append_table_channels(x, te.table, columns);
}

PaddedSeries pad_preserving_position(const Tensor& x, std::int64_t t1, std::size_t t_max) {
  if (x.rank() != 2) throw std::invalid_argument("pad_preserving_position: series must be [D, T]");
  const std::size_t D = x.dim(0), T = x.dim(1);
  if (t1 < 1) throw std::invalid_argument("pad_preserving_position: t1 must be >= 1");
  const auto start = static_cast<std::size_t>(t1 - 1);
  if (start + T > t_max) {
    throw std::invalid_argument("pad_preserving_position: series [" + std::to_string(t1) + ", " +
                                std::to_string(start + T) + "] overruns T_max " + std::to_string(t_max));
  }
  std::vector<Real> out(D * t_max, Real(0));
  const auto src = x.data();
  for (std::size_t d = 0; d < D; ++d) {
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(d * T), src.begin() + static_cast<std::ptrdiff_t>((d + 1) * T),
              out.begin() + static_cast<std::ptrdiff_t>(d * t_max + start));
  }
  return {Tensor({D, t_max}, std::move(out)),
          {static_cast<std::int64_t>(start), static_cast<std::int64_t>(start + T)}};
}

Tensor te_correlation(const TemporalEncoding& te) {
  const std::size_t C = te.channels(), T = te.t_max();
  if (C < 2) throw std::invalid_argument("te_correlation: needs at least 2 channels");
  const auto e = te.table.data();
  std::vector<Real> centred(C * T), norm(T);
  std::size_t degenerate = 0;
  for (std::size_t t = 0; t < T; ++t) {
    Real mean = 0, lo = e[t], hi = e[t];
    for (std::size_t c = 0; c < C; ++c) {
      mean += e[c * T + t];
      lo = std::min(lo, e[c * T + t]);
      hi = std::max(hi, e[c * T + t]);
    }
    mean /= static_cast<Real>(C);
    Real ss = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const Real d = e[c * T + t] - mean;
      centred[t * C + c] = d;
      ss += d * d;
    }
    // A constant column can leave rounding residue in ss; test it exactly.
    norm[t] = lo == hi ? Real(0) : std::sqrt(ss);
    if (norm[t] == Real(0)) ++degenerate;
  }
  if (degenerate > 0) {
    warn("te_correlation: " + std::to_string(degenerate) + " column(s) have zero variance; their correlations are 0");
  }
  std::vector<Real> out(T * T, Real(0));
  for (std::size_t i = 0; i < T; ++i) {
    if (norm[i] == Real(0)) continue;
    out[i * T + i] = Real(1);
    for (std::size_t j = i + 1; j < T; ++j) {
      if (norm[j] == Real(0)) continue;
      Real s = 0;
      for (std::size_t c = 0; c < C; ++c) s += centred[i * C + c] * centred[j * C + c];
      const Real r = std::clamp(s / (norm[i] * norm[j]), Real(-1), Real(1));
      out[i * T + j] = out[j * T + i] = r;
    }
  }
  return Tensor({T, T}, std::move(out));
}

}  // namespace te
PTSC_END_NAMESPACE
