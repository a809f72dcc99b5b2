// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "../unit/grad_check.hpp"
#include "ptsc/temporal_encoding.hpp"

namespace {

using ptsc::Real;
using ptsc::Shape;
using ptsc::Tensor;
namespace te = ptsc::te;
namespace rf = ptsc::rf;

TEST(TemporalEncoding, PadPreservesPosition) {
  Tensor x(Shape{2, 3}, std::vector<Real>{1, 2, 3, 4, 5, 6});
  const auto p = te::pad_preserving_position(x, 4, 8);
  EXPECT_EQ(p.valid, (rf::ValidInterval{3, 6}));
  const std::vector<Real> want = {0, 0, 0, 1, 2, 3, 0, 0, 0, 0, 0, 4, 5, 6, 0, 0};
  EXPECT_EQ(std::vector<Real>(p.values.data().begin(), p.values.data().end()), want);
  EXPECT_THROW(te::pad_preserving_position(x, 7, 8), std::invalid_argument);
  EXPECT_THROW(te::pad_preserving_position(x, 0, 8), std::invalid_argument);
}

TEST(TemporalEncoding, FrameReadsItsOwnTimestamp) {
  ptsc::layers::Rng rng(1);
  auto enc = te::TemporalEncoding::create(2, 6, false, rng);
  Tensor x(Shape{1, 1, 6});
  const std::vector<rf::ValidInterval> valid = {{2, 5}};
  const auto y = te::apply_te(enc, x, valid);
  ASSERT_EQ(y.dim(1), 3u);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(y.data()[(1 + c) * 6 + t], enc.table.data()[c * 6 + t]);
}

TEST(TemporalEncoding, NonCyclicRejectsLateSeries) {
  ptsc::layers::Rng rng(1);
  auto enc = te::TemporalEncoding::create(1, 4, false, rng);
  Tensor x(Shape{1, 1, 8});
  const std::vector<rf::ValidInterval> valid = {{3, 6}};
  EXPECT_THROW(te::apply_te(enc, x, valid), std::invalid_argument);
}

TEST(TemporalEncoding, CyclicWrapsModuloTmax) {
  ptsc::layers::Rng rng(1);
  auto enc = te::TemporalEncoding::create(1, 4, true, rng);
  Tensor x(Shape{1, 1, 10});
  const std::vector<rf::ValidInterval> valid = {{0, 10}};
  const auto y = te::apply_te(enc, x, valid);
  for (std::size_t t = 0; t < 10; ++t) EXPECT_EQ(y.data()[10 + t], enc.table.data()[t % 4]);
}

TEST(TemporalEncoding, InitialTableScale) {
  ptsc::layers::Rng rng(2);
  auto enc = te::TemporalEncoding::create(8, 500, false, rng);
  double s = 0, q = 0;
  for (Real v : enc.table.data()) {
    s += v;
    q += v * v;
  }
  const double n = 4000;
  EXPECT_NEAR(s / n, 0.0, 0.005);
  EXPECT_NEAR(std::sqrt(q / n - (s / n) * (s / n)), 0.05, 0.005);
}

TEST(TemporalEncoding, CorrelationIsSymmetricWithUnitDiagonal) {
  ptsc::layers::Rng rng(3);
  auto enc = te::TemporalEncoding::create(6, 9, false, rng);
  const auto c = te::te_correlation(enc);
  ASSERT_EQ(c.dim(0), 9u);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_NEAR(c.data()[i * 9 + i], 1.0, 1e-12);
    for (std::size_t j = 0; j < 9; ++j) {
      EXPECT_NEAR(c.data()[i * 9 + j], c.data()[j * 9 + i], 1e-15);
      EXPECT_LE(std::abs(c.data()[i * 9 + j]), 1.0 + 1e-12);
    }
  }
}

TEST(TemporalEncoding, ConstantColumnCorrelatesToZero) {
  ptsc::layers::Rng rng(3);
  auto enc = te::TemporalEncoding::create(3, 4, false, rng);
  auto d = enc.table.mutable_data();
  for (std::size_t c = 0; c < 3; ++c) d[c * 4 + 2] = Real(0.7);
  const auto m = te::te_correlation(enc);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m.data()[2 * 4 + j], 0.0);
}

TEST(TemporalEncoding, GradientReachesOnlyCoveredColumns) {
  ptsc::layers::Rng rng(4);
  auto enc = te::TemporalEncoding::create(2, 8, false, rng);
  Tensor x(Shape{1, 1, 5});
  const std::vector<rf::ValidInterval> valid = {{0, 5}};
  ptsc::ops::sum(te::apply_te(enc, x, valid)).backward();
  for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ(enc.table.grad()[t], t < 5 ? 1.0 : 0.0);
}

}  // namespace
