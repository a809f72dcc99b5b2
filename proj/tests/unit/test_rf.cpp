// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "../common/oracles.hpp"
#include "ptsc/models.hpp"
#include "ptsc/rf.hpp"

namespace {

namespace rf = ptsc::rf;
namespace models = ptsc::models;

TEST(Rf, SingleLayer) {
  const std::vector<rf::LayerGeom> s = {{5, 1, 2}};
  const auto e = rf::rf_of_stack(s);
  EXPECT_EQ(e[0].rf, 5);
  EXPECT_EQ(e[0].jump, 1);
  EXPECT_EQ(e[0].left_offset, -2);
}

TEST(Rf, ConvThenPoolThenConv) {
  // rf: 3, then +1*1 = 4, then +2*2 = 8; jump 1, 2, 2.
  const std::vector<rf::LayerGeom> s = {{3, 1, 1}, {2, 2, 0}, {3, 1, 1}};
  const auto e = rf::rf_of_stack(s);
  EXPECT_EQ(e[1].rf, 4);
  EXPECT_EQ(e[2].rf, 8);
  EXPECT_EQ(e[2].jump, 2);
  EXPECT_EQ(e[2].left_offset, -3);
}

TEST(Rf, RejectsBadGeometry) {
  const std::vector<rf::LayerGeom> s = {{0, 1, 0}};
  EXPECT_THROW(rf::rf_of_stack(s), std::invalid_argument);
}

TEST(Rf, BaseStackBlockFields) {
  const auto r = models::rf_report(models::preset("basecnn"));
  EXPECT_EQ(r.block_rfs, (std::vector<std::int64_t>{8, 22, 62, 142, 334, 974}));
  EXPECT_EQ(r.block_jumps, (std::vector<std::int64_t>{2, 8, 16, 64, 128, 512}));
  EXPECT_EQ(r.cumulative_stride, 512);
  // Convolution-only fields of each block, before its pool.
  std::vector<std::int64_t> conv_only;
  for (std::size_t i = 0; i < r.entries.size(); ++i)
    if (r.layer_names[i].find("conv") != std::string::npos) conv_only.push_back(r.entries[i].rf);
  EXPECT_EQ(conv_only, (std::vector<std::int64_t>{7, 16, 54, 94, 270, 590}));
}

TEST(Rf, ResidualStackIsFortyThree) { EXPECT_EQ(models::rf_report(models::preset("resnet")).final_rf, 43); }

TEST(Rf, JumpIsProductOfStrides) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto s = ptsc::testing::random_stack(rng);
    const auto e = rf::rf_of_stack(s.layers);
    std::int64_t prod = 1;
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      prod *= s.layers[l].stride;
      EXPECT_EQ(e[l].jump, prod);
      if (l > 0) EXPECT_GE(e[l].rf, e[l - 1].rf);
    }
  }
}

TEST(Rf, MatchesPerturbationOracle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 25; ++i) {
    const auto s = ptsc::testing::random_stack(rng);
    EXPECT_EQ(ptsc::testing::compare_rf_with_perturbation(s), "") << "stack " << i;
  }
}

TEST(Rf, PropagateValidKeepsOnlyCleanFrames) {
  // Same-padded kernel 3 over [2, 10): output frames 3..8 see only [2, 10).
  EXPECT_EQ(rf::propagate_valid({2, 10}, {3, 1, 1}), (rf::ValidInterval{3, 9}));
  // Pool 2/2 over [3, 9): windows [4,6) and [6,8) qualify.
  EXPECT_EQ(rf::propagate_valid({3, 9}, {2, 2, 0}), (rf::ValidInterval{2, 4}));
}

TEST(Rf, PropagateValidMatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> k(1, 6), st(1, 4), p(0, 4), pos(0, 40), len(0, 25);
  for (int i = 0; i < 2000; ++i) {
    const rf::LayerGeom g{k(rng), st(rng), p(rng)};
    if (g.padding > g.kernel) continue;
    const rf::ValidInterval in{pos(rng), 0};
    const rf::ValidInterval v{in.start, in.start + len(rng)};
    const auto out = rf::propagate_valid(v, g);
    std::int64_t first = -1, last = -2;
    for (std::int64_t j = -100; j < 200; ++j) {
      const std::int64_t b = j * g.stride - g.padding, e = b + g.kernel;
      if (!v.empty() && b >= v.start && e <= v.end) {
        if (first < 0) first = j;
        last = j;
      }
    }
    if (first >= 0) {
      EXPECT_EQ(out, (rf::ValidInterval{first, last + 1}));
    } else {
      EXPECT_TRUE(out.empty());
    }
  }
}

TEST(Rf, ClampNonEmptyFallsBackToOneFrame) {
  EXPECT_EQ(rf::clamp_nonempty({4, 4}, 10), (rf::ValidInterval{4, 5}));
  EXPECT_EQ(rf::clamp_nonempty({12, 12}, 10), (rf::ValidInterval{9, 10}));
  EXPECT_EQ(rf::clamp_nonempty({-3, -3}, 10), (rf::ValidInterval{0, 1}));
  EXPECT_EQ(rf::clamp_nonempty({2, 6}, 10), (rf::ValidInterval{2, 6}));
}

TEST(Rf, TruncationTable) {
  const std::vector<std::int64_t> rfs = {8, 22, 62, 142, 334, 974};
  const std::vector<std::int64_t> lengths = {5, 8, 100, 980};
  EXPECT_EQ(rf::truncation_table(rfs, lengths), (std::vector<std::size_t>{0, 1, 3, 6}));
}

}  // namespace
