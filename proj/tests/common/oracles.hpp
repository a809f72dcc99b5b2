// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "ptsc/ops.hpp"
#include "ptsc/rf.hpp"

namespace ptsc::testing {

// ---------------------------------------------------------------------------
// Receptive fields by perturbation.

/// A random sliding-window stack: stride-1 convolutions with arbitrary
/// padding, and max pools with padding 0.
struct RandomStack {
  std::vector<rf::LayerGeom> layers;
  std::vector<bool> is_pool;
};

inline RandomStack random_stack(std::mt19937_64& rng) {
  RandomStack s;
  std::uniform_int_distribution<int> depth(2, 7), kern(1, 7), pool(1, 4), coin(0, 2);
  const int n = depth(rng);
  for (int i = 0; i < n; ++i) {
    if (coin(rng) == 0) {
      const std::int64_t w = pool(rng);
      std::uniform_int_distribution<std::int64_t> stride(1, w);
      s.layers.push_back({w, stride(rng), 0});
      s.is_pool.push_back(true);
    } else {
      const std::int64_t k = kern(rng);
      std::uniform_int_distribution<std::int64_t> pad(0, k);
      s.layers.push_back({k, 1, pad(rng)});
      s.is_pool.push_back(false);
    }
  }
  return s;
}

struct EmpiricalField {
  std::int64_t input_length = 0;
  /// Per output feature: [first, last + 1) of input frames whose perturbation
  /// changes it; {0, 0} when none does.
  std::vector<std::pair<std::int64_t, std::int64_t>> windows;
};

/// Runs the stack with the library's conv and pool ops on a positive input,
/// bumps one input frame at a time and records which outputs move.
inline EmpiricalField empirical_field(const RandomStack& s, std::int64_t T) {
  NoGradGuard guard;
  auto forward = [&](const std::vector<Real>& x) {
    Tensor t(Shape{1, 1, static_cast<std::size_t>(T)}, x);
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      const auto& g = s.layers[i];
      if (s.is_pool[i]) {
        t = ops::max_pool1d(t, static_cast<std::size_t>(g.kernel), static_cast<std::size_t>(g.stride));
      } else {
        Tensor k(Shape{1, 1, static_cast<std::size_t>(g.kernel)}, std::vector<Real>(static_cast<std::size_t>(g.kernel), 1));
        t = ops::conv1d(t, k, Tensor(), static_cast<std::size_t>(g.padding));
      }
    }
    return std::vector<Real>(t.data().begin(), t.data().end());
  };
  std::mt19937_64 rng(static_cast<std::uint64_t>(T));
  std::uniform_real_distribution<double> u(1.0, 2.0);
  std::vector<Real> x(static_cast<std::size_t>(T));
  for (auto& v : x) v = Real(u(rng));
  const auto base = forward(x);
  EmpiricalField f;
  f.input_length = T;
  f.windows.assign(base.size(), {0, 0});
  std::vector<bool> seen(base.size(), false);
  for (std::int64_t i = 0; i < T; ++i) {
    auto bumped = x;
    bumped[static_cast<std::size_t>(i)] += Real(1e12);
    const auto y = forward(bumped);
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] == base[j]) continue;
      if (!seen[j]) f.windows[j] = {i, i + 1};
      f.windows[j].second = i + 1;
      seen[j] = true;
    }
  }
  return f;
}

/// Compares rf_of_stack against perturbation on every output feature whose
/// computed window lies inside the input. Returns a description of the first
/// mismatch, or an empty string.
inline std::string compare_rf_with_perturbation(const RandomStack& s) {
  const auto entries = rf::rf_of_stack(s.layers);
  const auto& last = entries.back();
  const std::int64_t T = last.rf + 6 * last.jump + 2 * std::max<std::int64_t>(0, -last.left_offset) + 3;
  const auto field = empirical_field(s, T);
  std::size_t interior = 0;
  for (std::size_t j = 0; j < field.windows.size(); ++j) {
    const auto idx = static_cast<std::int64_t>(j);
    const std::int64_t b = last.window_begin(idx), e = last.window_end(idx);
    if (b < 0 || e > T) continue;
    ++interior;
    if (field.windows[j] != std::pair{b, e}) {
      return "feature " + std::to_string(j) + ": computed [" + std::to_string(b) + "," + std::to_string(e) +
             ") empirical [" + std::to_string(field.windows[j].first) + "," + std::to_string(field.windows[j].second) + ")";
    }
  }
  if (interior < 2) return "fewer than two interior features";
  return {};
}

// ---------------------------------------------------------------------------
// Masked batch norm against physically trimmed samples.

struct TrimmedStats {
  std::vector<double> mean, variance;
};

/// Statistics of the concatenation of every sample's valid frames, computed
/// in long double with a two-pass formula.
inline TrimmedStats trimmed_stats(const std::vector<Real>& x, std::size_t B, std::size_t C, std::size_t T,
                                  const std::vector<rf::ValidInterval>& valid) {
  TrimmedStats s;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<long double> kept;
    for (std::size_t b = 0; b < B; ++b)
      for (auto t = valid[b].start; t < valid[b].end; ++t) kept.push_back(x[(b * C + c) * T + static_cast<std::size_t>(t)]);
    long double m = 0;
    for (auto v : kept) m += v;
    m /= static_cast<long double>(kept.size());
    long double q = 0;
    for (auto v : kept) q += (v - m) * (v - m);
    s.mean.push_back(static_cast<double>(m));
    s.variance.push_back(static_cast<double>(q / static_cast<long double>(kept.size())));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Metrics.

/// Mean over classes of (correct in class) / (members of class), straight
/// from the sample lists.
inline double brute_balanced_accuracy(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t classes) {
  double total = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    double members = 0, hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] != static_cast<int>(c)) continue;
      members += 1;
      if (pred[i] == truth[i]) hits += 1;
    }
    total += hits / members;
  }
  return total / static_cast<double>(classes);
}

/// Area under the ROC polyline through every distinct threshold, by the
/// trapezoid rule.
inline double trapezoid_auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::map<double, std::pair<double, double>, std::greater<>> at;  // threshold -> (pos, neg)
  double P = 0, N = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& cell = at[scores[i]];
    if (labels[i] == 1) {
      cell.first += 1;
      P += 1;
    } else {
      cell.second += 1;
      N += 1;
    }
  }
  double tp = 0, fp = 0, area = 0;
  for (const auto& [thr, cell] : at) {
    const double tp2 = tp + cell.first, fp2 = fp + cell.second;
    area += (fp2 - fp) / N * (tp / P + tp2 / P) / 2;
    tp = tp2;
    fp = fp2;
  }
  return area;
}

}  // namespace ptsc::testing
