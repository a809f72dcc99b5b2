// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "ptsc/data.hpp"
#include "ptsc/log.hpp"

namespace {

namespace data = ptsc::data;
namespace fs = std::filesystem;

data::SeriesRecord record(std::string id, int label, std::int64_t t1, std::size_t D, std::vector<double> v) {
  data::SeriesRecord r;
  r.id = std::move(id);
  r.label = label;
  r.t1 = t1;
  r.channels = D;
  r.values = std::move(v);
  return r;
}

data::Dataset small_dataset() {
  data::Dataset ds;
  ds.meta = {2, 2, 1, 10, {"calm", "storm"}};
  ds.records.push_back(record("a", 0, 1, 2, {0.1, 0.2, 0.3, -1, -2, -3}));
  ds.records.push_back(record("b", 1, 8, 2, {1.0 / 3, 1e-300, 5e300, 7}));
  return ds;
}

class QuietWarnings : public ::testing::Test {
 protected:
  void SetUp() override {
    previous_ = ptsc::set_warning_sink([this](std::string_view m) { warnings.emplace_back(m); });
  }
  void TearDown() override { ptsc::set_warning_sink(previous_); }
  std::vector<std::string> warnings;

 private:
  ptsc::WarningSink previous_;
};

TEST(Dataset, TextRoundTripIsExact) {
  const auto ds = small_dataset();
  std::stringstream ss;
  data::write_dataset(ss, ds);
  const auto back = data::read_dataset(ss);
  EXPECT_EQ(back.meta, ds.meta);
  EXPECT_EQ(back.records, ds.records);
}

TEST(Dataset, FileRoundTrip) {
  const auto path = fs::temp_directory_path() / "ptsc_data_roundtrip.ptsc";
  data::save_dataset(path, small_dataset());
  EXPECT_EQ(data::load_dataset(path).records, small_dataset().records);
  fs::remove(path);
}

TEST(Dataset, ParseErrorsCarryLineNumbers) {
  std::istringstream bad("PTSC v1 D=1 N=2 TMIN=1 TMAX=5\n# comment\nx,0,1,2,1.0,oops\n");
  try {
    data::read_dataset(bad, "bad.ptsc");
    FAIL() << "expected a parse error";
  } catch (const data::ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("bad.ptsc"), std::string::npos);
  }
  std::istringstream header("PTSD v1\n");
  EXPECT_THROW(data::read_dataset(header), data::ParseError);
  std::istringstream count("PTSC v1 D=1 N=2 TMIN=1 TMAX=5\nx,0,1,3,1,2\n");
  EXPECT_THROW(data::read_dataset(count), data::ParseError);
}

TEST(Dataset, RecordValidation) {
  data::DatasetMeta meta{1, 2, 2, 10, {}};
  EXPECT_NO_THROW(data::validate_record(record("ok", 1, 5, 1, {1, 2, 3}), meta));
  EXPECT_THROW(data::validate_record(record("late", 1, 9, 1, {1, 2, 3}), meta), std::invalid_argument);
  EXPECT_THROW(data::validate_record(record("short", 1, 1, 1, {1}), meta), std::invalid_argument);
  EXPECT_THROW(data::validate_record(record("label", 2, 1, 1, {1, 2}), meta), std::invalid_argument);
  EXPECT_THROW(data::validate_record(record("t1", 0, 0, 1, {1, 2}), meta), std::invalid_argument);
}

TEST(Dataset, TsvArchive) {
  std::istringstream in("2\t1.0\t2.0\t3.0\n-1\t4.0\t5.0\tNaN\n10\t0.5\t0.5\t0.5\n");
  const auto ds = data::read_tsv_archive(in);
  ASSERT_EQ(ds.records.size(), 3u);
  EXPECT_EQ(ds.meta.classes, 3u);
  // Numeric labels sort numerically: -1 -> 0, 2 -> 1, 10 -> 2.
  EXPECT_EQ(ds.records[0].label, 1);
  EXPECT_EQ(ds.records[1].label, 0);
  EXPECT_EQ(ds.records[2].label, 2);
  EXPECT_EQ(ds.records[1].length(), 2u);
  EXPECT_EQ(ds.records[0].t1, 1);
  std::istringstream hole("1\t1.0\tNaN\t3.0\n");
  EXPECT_THROW(data::read_tsv_archive(hole), data::ParseError);
}

TEST(Normalisation, MinMaxPerChannel) {
  std::vector<data::SeriesRecord> recs = {record("a", 0, 1, 2, {0, 10, 5, 5}), record("b", 0, 1, 2, {-10, 20, 5, 5})};
  const auto stats = data::fit_minmax(recs, 2);
  EXPECT_EQ(stats.min, (std::vector<double>{-10, 5}));
  EXPECT_EQ(stats.max, (std::vector<double>{20, 5}));
  data::apply_minmax(recs, stats);
  EXPECT_DOUBLE_EQ(recs[0].values[0], 10.0 / 30);
  EXPECT_DOUBLE_EQ(recs[1].values[1], 1.0);
  EXPECT_EQ(recs[0].values[2], 0.0);  // constant channel
}

TEST(Synthetic, SameSeedSameData) {
  data::SyntheticConfig cfg;
  const auto a = data::generate_synthetic(cfg, 20, 4, "t");
  const auto b = data::generate_synthetic(cfg, 20, 4, "t");
  const auto c = data::generate_synthetic(cfg, 20, 5, "t");
  EXPECT_EQ(a.records, b.records);
  EXPECT_NE(a.records, c.records);
}

TEST(Synthetic, RecordsRespectBounds) {
  data::SyntheticConfig cfg;
  const auto ds = data::generate_synthetic(cfg, 200, 1, "t");
  std::size_t per_class[2] = {0, 0};
  for (const auto& r : ds.records) {
    EXPECT_NO_THROW(data::validate_record(r, ds.meta));
    EXPECT_GE(static_cast<std::int64_t>(r.length()), 80);
    EXPECT_LE(static_cast<std::int64_t>(r.length()), 980);
    ++per_class[r.label];
  }
  EXPECT_EQ(per_class[0], 100u);
  EXPECT_EQ(per_class[1], 100u);
}

TEST(Synthetic, PreEventFramesCarryNoClassSignal) {
  data::SyntheticConfig cfg;
  data::Rng rng(9);
  std::vector<std::vector<double>> a, b;
  for (int i = 0; i < 300; ++i) {
    a.push_back(data::generate_latent(cfg, 0, rng));
    b.push_back(data::generate_latent(cfg, 1, rng));
  }
  EXPECT_LT(data::pre_event_mean_statistic(cfg, a, b), 4.0);
}

TEST(Synthetic, ClassesDifferAfterTheEvent) {
  data::SyntheticConfig cfg;
  cfg.noise = 0;
  data::Rng r1(3), r2(3);
  const auto x0 = data::generate_latent(cfg, 0, r1);
  const auto x1 = data::generate_latent(cfg, 1, r2);
  double pre = 0, post = 0;
  for (std::int64_t t = 0; t < cfg.t_max; ++t) {
    const double d = std::abs(x0[static_cast<std::size_t>(t)] - x1[static_cast<std::size_t>(t)]);
    (t < cfg.event_time - 1 ? pre : post) += d;
  }
  EXPECT_EQ(pre, 0.0);
  EXPECT_GT(post, 1.0);
}

TEST(Crop, RandomCropKeepsTimestamps) {
  const auto r = record("x", 0, 11, 1, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  data::Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto c = data::random_crop(r, 0.5, rng);
    EXPECT_GE(c.length(), 5u);
    EXPECT_LE(c.length(), 10u);
    // Values equal their offset, so the first value locates the window.
    EXPECT_EQ(c.t1, 11 + static_cast<std::int64_t>(c.values[0]));
    for (std::size_t t = 1; t < c.length(); ++t) EXPECT_EQ(c.values[t], c.values[0] + static_cast<double>(t));
  }
  EXPECT_THROW(data::random_crop(r, 0.0, rng), std::invalid_argument);
  EXPECT_EQ(data::random_crop(r, 1.0, rng), r);
}

TEST(Crop, Schedule) {
  EXPECT_DOUBLE_EQ(data::crop_schedule(0), 1.0);
  EXPECT_DOUBLE_EQ(data::crop_schedule(400), 0.55);
  EXPECT_DOUBLE_EQ(data::crop_schedule(800), 0.1);
  EXPECT_DOUBLE_EQ(data::crop_schedule(5000), 0.1);
  EXPECT_DOUBLE_EQ(data::crop_schedule(40, 80, 1.0, 0.1), 0.55);
}

TEST(Resample, LinearAndExactAtEnds) {
  const auto r = record("x", 0, 7, 2, {0, 1, 2, 3, 10, 20, 30, 40});
  const auto y = data::resample_linear(r, 7);
  EXPECT_EQ(y.t1, 1);
  EXPECT_EQ(y.length(), 7u);
  EXPECT_EQ(y.values[0], 0.0);
  EXPECT_EQ(y.values[6], 3.0);
  EXPECT_DOUBLE_EQ(y.values[1], 0.5);
  EXPECT_DOUBLE_EQ(y.values[7 + 3], 25.0);
  const auto same = data::resample_linear(r, 4);
  EXPECT_EQ(same.values, r.values);
}

class ResampleWarnings : public QuietWarnings {};

TEST_F(ResampleWarnings, SingleFrameReplicates) {
  const auto y = data::resample_linear(record("one", 0, 1, 1, {2.5}), 3);
  EXPECT_EQ(y.values, (std::vector<double>{2.5, 2.5, 2.5}));
  EXPECT_EQ(warnings.size(), 1u);
  const auto [a, b] = data::half_crops(record("one", 0, 1, 1, {2.5}));
  EXPECT_EQ(a, b);
  EXPECT_EQ(warnings.size(), 2u);
}

TEST(HalfCrops, SplitAtCeilHalf) {
  const auto r = record("x", 0, 4, 1, {0, 1, 2, 3, 4});
  const auto [a, b] = data::half_crops(r);
  EXPECT_EQ(a.values, (std::vector<double>{0, 1, 2}));
  EXPECT_EQ(a.t1, 4);
  EXPECT_EQ(b.values, (std::vector<double>{3, 4}));
  EXPECT_EQ(b.t1, 7);
}

TEST(Batch, PlacesRecordsAtTheirTimestamps) {
  std::vector<data::SeriesRecord> recs = {record("a", 1, 3, 1, {1, 2}), record("b", 0, 1, 1, {5, 6, 7})};
  const std::vector<double> w = {0.25, 4.0};
  const auto b = data::make_batch(recs, 6, w);
  const std::vector<ptsc::Real> want = {0, 0, 1, 2, 0, 0, 5, 6, 7, 0, 0, 0};
  EXPECT_EQ(std::vector<ptsc::Real>(b.x.data().begin(), b.x.data().end()), want);
  EXPECT_EQ(b.valid[0], (ptsc::rf::ValidInterval{2, 4}));
  EXPECT_EQ(b.weights, (std::vector<ptsc::Real>{4.0, 0.25}));
  EXPECT_EQ(b.lengths, (std::vector<std::int64_t>{2, 3}));
  std::vector<data::SeriesRecord> late = {record("c", 0, 6, 1, {1, 2})};
  EXPECT_THROW(data::make_batch(late, 6), std::invalid_argument);
}

}  // namespace
