// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "ptsc/checkpoint.hpp"

namespace {

using ptsc::NamedArray;

std::vector<NamedArray> sample() {
  return {{"a.weight", {2, 2}, {1.0, -0.0, 1e-310, std::numeric_limits<double>::infinity()}},
          {"scalar", {}, {3.25}},
          {"empty", {0}, {}}};
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::stringstream ss;
  ptsc::write_checkpoint(ss, sample());
  const auto back = ptsc::read_checkpoint(ss);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].name, sample()[i].name);
    EXPECT_EQ(back[i].shape, sample()[i].shape);
    ASSERT_EQ(back[i].values.size(), sample()[i].values.size());
    for (std::size_t k = 0; k < back[i].values.size(); ++k)
      EXPECT_EQ(std::signbit(back[i].values[k]), std::signbit(sample()[i].values[k]));
  }
  EXPECT_EQ(back[0].values, sample()[0].values);
}

TEST(Checkpoint, StartsWithMagic) {
  std::stringstream ss;
  ptsc::write_checkpoint(ss, sample());
  EXPECT_EQ(ss.str().substr(0, 8), "PTSCCKPT");
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream ss;
  ptsc::write_checkpoint(ss, sample());
  const std::string good = ss.str();
  std::istringstream magic("XXXXXXXX" + good.substr(8));
  EXPECT_THROW(ptsc::read_checkpoint(magic), ptsc::CheckpointError);
  std::istringstream truncated(good.substr(0, good.size() - 5));
  EXPECT_THROW(ptsc::read_checkpoint(truncated), ptsc::CheckpointError);
  std::string version = good;
  version[8] = 9;
  std::istringstream wrong(version);
  EXPECT_THROW(ptsc::read_checkpoint(wrong), ptsc::CheckpointError);
}

TEST(Checkpoint, RejectsMismatchedShape) {
  std::stringstream ss;
  const std::vector<NamedArray> bad = {{"x", {3}, {1.0, 2.0}}};
  EXPECT_THROW(ptsc::write_checkpoint(ss, bad), ptsc::CheckpointError);
}

TEST(Checkpoint, MissingFile) {
  EXPECT_THROW(ptsc::load_checkpoint("/nonexistent/dir/x.ckpt"), ptsc::CheckpointError);
}

}  // namespace
