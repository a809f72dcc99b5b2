// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptsc/data.hpp"
#include "ptsc/models.hpp"

PTSC_BEGIN_NAMESPACE
namespace evaluation {

/// confusion[true][predicted]
using Confusion = std::vector<std::vector<std::size_t>>;

Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t classes);
double accuracy(const Confusion& confusion);
/// Mean per-class recall; throws when a true class has no samples.
double balanced_accuracy(const Confusion& confusion);

/// Probability that a random positive scores above a random negative, ties
/// counting one half. `labels` are 0 (negative) or 1 (positive).
double auroc(std::span<const double> scores, std::span<const int> labels);
/// Binary AUROC on the class-1 column for two classes, otherwise the macro
/// average of one-vs-rest AUROCs. `probabilities` is [n, classes] row-major.
double auroc_multiclass(std::span<const double> probabilities, std::span<const int> labels, std::size_t classes);

/// Boundaries at the test-length tertiles: sorted[ceil(n/3) - 1] and
/// sorted[ceil(2n/3) - 1].
std::vector<std::int64_t> tertile_boundaries(std::span<const std::int64_t> lengths);
/// Group g holds lengths in (boundaries[g-1], boundaries[g]]; a length equal
/// to a boundary goes to the lower group.
std::vector<std::size_t> length_groups(std::span<const std::int64_t> lengths, std::span<const std::int64_t> boundaries);

/// Canvas batch matching the model's length policy: fixed_interpolate
/// resamples every record to the model's t_max first.
data::Batch prepare_batch(const models::Model& model, std::span<const data::SeriesRecord> records,
                          std::span<const double> class_weights = {});

struct Predictions {
  std::size_t classes = 0;
  std::vector<double> logits;         // [n, classes]
  std::vector<double> probabilities;  // [n, classes]
  std::vector<int> predicted;
  std::vector<int> labels;
  std::vector<std::int64_t> lengths;
};

/// Eval-mode forward over fixed chunks of `batch_size` records. Chunks run on
/// up to `threads` workers (0: the PTSC_THREADS environment variable, else
/// the hardware concurrency); results do not depend on the worker count.
Predictions predict(const models::Model& model, std::span<const data::SeriesRecord> records,
                    std::size_t batch_size = 64, std::size_t threads = 0);

/// Worker cap from PTSC_THREADS, falling back to the hardware concurrency.
std::size_t default_threads();

enum class Protocol { complete, half_crop, both };
std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view name);

inline constexpr const char* kGroupNames[] = {"short", "middle", "long"};

struct ViewReport {
  std::string view;  // "complete" or "half_crop"
  std::size_t samples = 0;
  double accuracy = 0;
  double balanced_accuracy = 0;
  std::optional<double> auroc;
  /// Per length group; empty when the group lacks one of the classes.
  std::vector<std::optional<double>> group_balanced_accuracy;
  std::vector<std::size_t> group_sizes;
  Confusion confusion;
};

struct EvalReport {
  std::string model;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> boundaries;
  std::vector<ViewReport> views;
};

ViewReport score_view(const std::string& name, const Predictions& predictions,
                      std::span<const std::int64_t> boundaries);

/// Deterministic evaluation. Length groups use `boundaries` when given,
/// otherwise the tertiles of the complete test lengths, for every view.
/// The half-crop view scores both halves of every record as separate samples.
EvalReport evaluate(const models::Model& model, std::span<const data::SeriesRecord> records, Protocol protocol,
                    std::uint64_t seed = 0, std::span<const std::int64_t> boundaries = {});

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

struct MetricSummary {
  std::string metric;  // e.g. "complete.balanced_accuracy.short"
  std::size_t runs = 0;
  double mean = 0;
  double median = 0;
  double std = 0;  // sample standard deviation
};

double median(std::vector<double> values);
double sample_std(std::span<const double> values);

/// Summaries of every metric present in all reports; needs >= 2 reports.
std::vector<MetricSummary> multi_seed_summary(std::span<const EvalReport> reports);
std::string summary_json(std::span<const MetricSummary> summary);

}  // namespace evaluation
PTSC_END_NAMESPACE
