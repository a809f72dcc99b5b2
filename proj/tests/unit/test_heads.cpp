// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "../unit/grad_check.hpp"
#include "ptsc/heads.hpp"

namespace {

using ptsc::Real;
using ptsc::Shape;
using ptsc::Tensor;
namespace heads = ptsc::heads;
namespace layers = ptsc::layers;
namespace rf = ptsc::rf;

std::vector<Tensor> level_stub(std::size_t levels, std::size_t batch) {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < levels; ++l) out.emplace_back(Shape{batch, 2});
  return out;
}

TEST(BuildSequence, LengthsFollowSurvivingBlocks) {
  const std::vector<std::int64_t> rfs = {8, 22, 62, 142, 334, 974};
  const std::vector<std::int64_t> lengths = {5, 100, 980, 22};
  heads::HeadConfig cfg;
  const auto seq = heads::build_sequence(level_stub(7, 4), rfs, lengths, cfg);
  EXPECT_EQ(seq.lengths, (std::vector<std::size_t>{1, 4, 7, 3}));
  EXPECT_EQ(seq.steps.size(), 7u);
  EXPECT_EQ(seq.levels.front(), 0u);
}

TEST(BuildSequence, StepsStopAtLongestSample) {
  const std::vector<std::int64_t> rfs = {8, 22, 62};
  const std::vector<std::int64_t> lengths = {10, 30};
  heads::HeadConfig cfg;
  auto levels = level_stub(4, 2);
  levels[3] = Tensor();  // never needed
  const auto seq = heads::build_sequence(levels, rfs, lengths, cfg);
  EXPECT_EQ(seq.levels, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(BuildSequence, EmptySequenceWithoutInputLevel) {
  const std::vector<std::int64_t> rfs = {8, 22};
  const std::vector<std::int64_t> lengths = {5};
  heads::HeadConfig cfg;
  cfg.include_input_level = false;
  EXPECT_THROW(heads::build_sequence(level_stub(3, 1), rfs, lengths, cfg), std::invalid_argument);
  const std::vector<std::int64_t> longer = {9};
  const auto seq = heads::build_sequence(level_stub(3, 1), rfs, longer, cfg);
  EXPECT_EQ(seq.lengths, (std::vector<std::size_t>{1}));
  EXPECT_EQ(seq.levels, (std::vector<std::size_t>{1}));
}

TEST(ProjectAndPool, EqualsProjectingEveryFrameThenPooling) {
  std::mt19937_64 rng(1);
  layers::Rng prng(2);
  layers::Affine proj(3, 4, prng);
  Tensor x = ptsc::testing::random_tensor({2, 3, 9}, rng, 1.0, false);
  const std::vector<rf::ValidInterval> valid = {{1, 6}, {4, 9}};
  const auto z = heads::project_and_pool({x, valid}, proj);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t o = 0; o < 4; ++o) {
      double acc = 0;
      for (auto t = valid[b].start; t < valid[b].end; ++t) {
        double y = proj.bias.data()[o];
        for (std::size_t c = 0; c < 3; ++c)
          y += proj.weight.data()[o * 3 + c] * x.data()[(b * 3 + c) * 9 + static_cast<std::size_t>(t)];
        acc += y;
      }
      EXPECT_NEAR(z.data()[b * 4 + o], acc / static_cast<double>(valid[b].length()), 1e-13);
    }
  }
}

struct HeadFixture {
  std::vector<layers::FeatureMap> levels;
  std::vector<std::int64_t> rfs = {4, 10};
  std::vector<std::size_t> channels = {2, 3, 4};
};

HeadFixture fixture(std::mt19937_64& rng) {
  HeadFixture f;
  const std::vector<std::size_t> extents = {16, 8, 4};
  for (std::size_t l = 0; l < 3; ++l) {
    f.levels.push_back({ptsc::testing::random_tensor({2, f.channels[l], extents[l]}, rng, 1.0, false),
                        {{0, static_cast<std::int64_t>(extents[l])}, {0, 1}}});
  }
  return f;
}

TEST(Head, OutputSizes) {
  std::mt19937_64 rng(3);
  auto f = fixture(rng);
  const std::vector<std::int64_t> lengths = {16, 6};
  for (auto [variant, size] : std::vector<std::pair<heads::HeadVariant, std::size_t>>{
           {heads::HeadVariant::gap, 4},
           {heads::HeadVariant::multi_scale, 15},
           {heads::HeadVariant::adaptive_scale, 5},
           {heads::HeadVariant::adaptive_multi_scale, 7}}) {
    layers::Rng prng(4);
    heads::Head head({variant, 5, true, 7}, f.channels, prng);
    EXPECT_EQ(head.output_size(), size);
    const auto z = head.forward(f.levels, f.rfs, lengths);
    EXPECT_EQ(z.dim(0), 2u);
    EXPECT_EQ(z.dim(1), size);
  }
}

TEST(Head, AdaptiveScalePicksDeepestSurvivingLevel) {
  std::mt19937_64 rng(5);
  auto f = fixture(rng);
  layers::Rng prng(6);
  heads::Head head({heads::HeadVariant::adaptive_scale, 5, true, 7}, f.channels, prng);
  // Sample 0 (length 16) keeps both blocks, sample 1 (length 6) only the first.
  const std::vector<std::int64_t> lengths = {16, 6};
  const auto z = head.forward(f.levels, f.rfs, lengths);
  std::vector<layers::NamedTensor> params;
  head.collect_parameters("head", params);
  auto find = [&](const std::string& n) {
    for (auto& p : params)
      if (p.name == n) return p.value;
    throw std::runtime_error("missing " + n);
  };
  layers::Affine p1, p2;
  p1.weight = find("head.proj1.weight");
  p1.bias = find("head.proj1.bias");
  p2.weight = find("head.proj2.weight");
  p2.bias = find("head.proj2.bias");
  const auto z2 = heads::project_and_pool(f.levels[2], p2);
  const auto z1 = heads::project_and_pool(f.levels[1], p1);
  for (std::size_t o = 0; o < 5; ++o) {
    EXPECT_NEAR(z.data()[o], z2.data()[o], 1e-14);
    EXPECT_NEAR(z.data()[5 + o], z1.data()[5 + o], 1e-14);
  }
}

TEST(Head, ParseVariantNames) {
  EXPECT_EQ(heads::parse_head_variant("gap"), heads::HeadVariant::gap);
  EXPECT_EQ(heads::parse_head_variant("adaptive_multi_scale"), heads::HeadVariant::adaptive_multi_scale);
  EXPECT_THROW(heads::parse_head_variant("attention"), std::invalid_argument);
  for (auto v : {heads::HeadVariant::gap, heads::HeadVariant::multi_scale, heads::HeadVariant::adaptive_scale,
                 heads::HeadVariant::adaptive_multi_scale})
    EXPECT_EQ(heads::parse_head_variant(heads::to_string(v)), v);
}

}  // namespace
