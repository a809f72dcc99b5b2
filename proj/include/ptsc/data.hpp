// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ptsc/rf.hpp"
#include "ptsc/tensor.hpp"

PTSC_BEGIN_NAMESPACE
namespace data {

using Rng = std::mt19937_64;

/// One observed fragment. Values are stored channel-major ([D, T]) in double
/// precision whatever the model precision, so files round-trip exactly.
struct SeriesRecord {
  std::string id;
  int label = 0;
  std::int64_t t1 = 1;  // 1-based timestamp of the first frame
  std::size_t channels = 0;
  std::vector<double> values;

  std::size_t length() const { return channels ? values.size() / channels : 0; }
  double at(std::size_t channel, std::size_t frame) const { return values[channel * length() + frame]; }
  friend bool operator==(const SeriesRecord&, const SeriesRecord&) = default;
};

struct DatasetMeta {
  std::size_t channels = 0;
  std::size_t classes = 0;
  std::int64_t t_min = 1;
  std::int64_t t_max = 1;
  std::vector<std::string> class_names;  // empty means "0".."N-1"
  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<SeriesRecord> records;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Throws std::invalid_argument when the record breaks the dataset's bounds.
void validate_record(const SeriesRecord& record, const DatasetMeta& meta);

/// Text format:
///   PTSC v1 D=<d> N=<n> TMIN=<a> TMAX=<b>
///   # class_names=<name0>,<name1>,...        (optional)
///   <id>,<label>,<t1>,<T>,<D*T values, channel-major>
/// Other lines starting with '#' and blank lines are ignored.
Dataset read_dataset(std::istream& in, const std::string& source = "<stream>");
void write_dataset(std::ostream& out, const Dataset& dataset);

/// Tab-separated archive layout: one series per line, label first, values
/// after; trailing NaN entries mark a shorter series. Every record gets
/// t1 = 1 and a single channel. Labels are mapped to indices through
/// `class_names` when given, otherwise through the sorted set of labels seen
/// (numerically when every label is a number).
Dataset read_tsv_archive(std::istream& in, std::span<const std::string> class_names = {},
                         const std::string& source = "<stream>");

/// Dispatches on the extension: .tsv goes through the archive converter.
Dataset load_dataset(const std::filesystem::path& path, std::span<const std::string> class_names = {});
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Per-channel extrema of a training split.
struct NormStats {
  std::vector<double> min;
  std::vector<double> max;
  bool empty() const { return min.empty(); }
};

NormStats fit_minmax(std::span<const SeriesRecord> records, std::size_t channels);
/// Maps each channel through (v - min) / (max - min); constant channels map to 0.
void apply_minmax(std::span<SeriesRecord> records, const NormStats& stats);

struct SyntheticConfig {
  std::size_t channels = 5;
  std::int64_t t_max = 980;
  std::int64_t event_time = 40;  // 1-based timestamp of the event
  std::size_t classes = 2;
  std::int64_t min_length = 80;
  std::int64_t max_length = 980;
  double noise = 0.35;
};

/// Full latent series [D, t_max] for one sample of `label`. Frames before the
/// event are drawn identically for every class.
std::vector<double> generate_latent(const SyntheticConfig& config, int label, Rng& rng);

/// `count` balanced records, each a uniform fragment of its own latent series.
/// Ids carry `tag` and `seed`, so different tags or seeds never share ids.
Dataset generate_synthetic(const SyntheticConfig& config, std::size_t count, std::uint64_t seed,
                           const std::string& tag = "s");

/// Largest absolute two-sample z statistic of per-series channel means over
/// the pre-event frames of `a` versus `b` (each entry a latent series).
double pre_event_mean_statistic(const SyntheticConfig& config, std::span<const std::vector<double>> a,
                                std::span<const std::vector<double>> b);

/// Keeps a uniform window of length L ~ U[max(1, ceil(ratio*T)), T];
/// timestamps move with the window.
SeriesRecord random_crop(const SeriesRecord& record, double ratio, Rng& rng);

/// Linear ramp from `start` at epoch 0 to `end` at `ramp_end`, flat afterwards.
double crop_schedule(std::size_t epoch, std::size_t ramp_end = 800, double start = 1.0, double end = 0.1);

/// Per-channel linear interpolation onto `target` equally spaced points;
/// the result starts at t1 = 1.
SeriesRecord resample_linear(const SeriesRecord& record, std::size_t target);

/// First ceil(T/2) frames at the original t1, and the rest.
std::pair<SeriesRecord, SeriesRecord> half_crops(const SeriesRecord& record);

struct Batch {
  Tensor x;  // [B, D, T_max], zero outside each valid interval
  std::vector<rf::ValidInterval> valid;
  std::vector<int> labels;
  std::vector<Real> weights;
  std::vector<std::int64_t> lengths;
};

/// Places every record at frames [t1 - 1, t1 - 1 + T). An empty
/// `class_weights` gives every sample weight 1.
Batch make_batch(std::span<const SeriesRecord> records, std::size_t t_max, std::span<const double> class_weights = {});

}  // namespace data
PTSC_END_NAMESPACE
