// SPDX-License-Identifier: Apache-2.0
#include "ptsc/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

PTSC_BEGIN_NAMESPACE
namespace evaluation {

Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
  Confusion c(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes ||
        static_cast<std::size_t>(predicted[i]) >= classes) {
      throw std::invalid_argument("confusion_matrix: label outside [0, " + std::to_string(classes) + ")");
    }
    ++c[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return c;
}

double accuracy(const Confusion& c) {
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    hit += c[i][i];
    total += std::accumulate(c[i].begin(), c[i].end(), std::size_t{0});
  }
  if (total == 0) throw std::invalid_argument("accuracy: no samples");
  return static_cast<double>(hit) / static_cast<double>(total);
}

double balanced_accuracy(const Confusion& c) {
  if (c.empty()) throw std::invalid_argument("balanced_accuracy: no classes");
  double sum = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto n = std::accumulate(c[i].begin(), c[i].end(), std::size_t{0});
    if (n == 0) throw std::invalid_argument("balanced_accuracy: class " + std::to_string(i) + " has no samples");
    sum += static_cast<double>(c[i][i]) / static_cast<double>(n);
  }
  return sum / static_cast<double>(c.size());
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += rank;
        ++positives;
      } else if (labels[order[k]] != 0) {
        throw std::invalid_argument("auroc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw std::invalid_argument("auroc: both labels must be present");
  const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1) / 2) / (p * q);
}

double auroc_multiclass(std::span<const double> probabilities, std::span<const int> labels, std::size_t classes) {
  if (classes < 2 || probabilities.size() != labels.size() * classes) {
    throw std::invalid_argument("auroc_multiclass: probabilities must be [n, classes] with classes >= 2");
  }
  const std::size_t n = labels.size();
  std::vector<double> scores(n);
  std::vector<int> binary(n);
  auto one_vs_rest = [&](std::size_t c) {
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probabilities[i * classes + c];
      binary[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
    }
    return auroc(scores, binary);
  };
  if (classes == 2) return one_vs_rest(1);
  double sum = 0;
  for (std::size_t c = 0; c < classes; ++c) sum += one_vs_rest(c);
  return sum / static_cast<double>(classes);
}

std::vector<std::int64_t> tertile_boundaries(std::span<const std::int64_t> lengths) {
  if (lengths.empty()) throw std::invalid_argument("tertile_boundaries: no lengths");
  std::vector<std::int64_t> sorted(lengths.begin(), lengths.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  return {sorted[(n + 2) / 3 - 1], sorted[(2 * n + 2) / 3 - 1]};
}

std::vector<std::size_t> length_groups(std::span<const std::int64_t> lengths, std::span<const std::int64_t> boundaries) {
  if (!std::is_sorted(boundaries.begin(), boundaries.end())) {
    throw std::invalid_argument("length_groups: boundaries must be ascending");
  }
  std::vector<std::size_t> out;
  out.reserve(lengths.size());
  for (auto len : lengths) {
    out.push_back(static_cast<std::size_t>(std::lower_bound(boundaries.begin(), boundaries.end(), len) -
                                           boundaries.begin()));
  }
  return out;
}

data::Batch prepare_batch(const models::Model& model, std::span<const data::SeriesRecord> records,
                          std::span<const double> class_weights) {
  const auto& cfg = model.config();
  if (cfg.length_policy == models::LengthPolicy::fixed_interpolate) {
    std::vector<data::SeriesRecord> resampled;
    resampled.reserve(records.size());
    for (const auto& r : records) resampled.push_back(data::resample_linear(r, cfg.t_max));
    auto batch = data::make_batch(resampled, cfg.t_max, class_weights);
    // The model sees the resampled canvas, but grouping keeps the observed length.
    for (std::size_t i = 0; i < records.size(); ++i) batch.lengths[i] = static_cast<std::int64_t>(records[i].length());
    return batch;
  }
  return data::make_batch(records, cfg.t_max, class_weights);
}

std::size_t default_threads() {
  if (const char* env = std::getenv("PTSC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Predictions predict(const models::Model& model, std::span<const data::SeriesRecord> records, std::size_t batch_size,
                    std::size_t threads) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch size must be positive");
  Predictions out;
  const std::size_t n = records.size(), N = model.config().classes;
  out.classes = N;
  out.logits.assign(n * N, 0.0);
  out.probabilities.assign(n * N, 0.0);
  out.predicted.assign(n, 0);
  out.labels.resize(n);
  out.lengths.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = records[i].label;
    out.lengths[i] = static_cast<std::int64_t>(records[i].length());
  }
  const std::size_t chunks = (n + batch_size - 1) / batch_size;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    NoGradGuard no_grad;
    while (true) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        const std::size_t lo = c * batch_size, hi = std::min(n, lo + batch_size);
        const auto batch = prepare_batch(model, records.subspan(lo, hi - lo));
        const auto pred = model.forward(batch.x, batch.valid, layers::Mode::eval);
        const auto logits = pred.logits.data();
        for (std::size_t i = lo; i < hi; ++i) {
          out.predicted[i] = pred.predicted[i - lo];
          for (std::size_t k = 0; k < N; ++k) {
            out.logits[i * N + k] = static_cast<double>(logits[(i - lo) * N + k]);
            out.probabilities[i * N + k] = static_cast<double>(pred.probabilities[(i - lo) * N + k]);
          }
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = chunks;
      }
    }
  };
  const std::size_t workers = std::min(threads ? threads : default_threads(), std::max<std::size_t>(chunks, 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::complete: return "complete";
    case Protocol::half_crop: return "half_crop";
    case Protocol::both: return "both";
  }
  return "unknown";
}

Protocol parse_protocol(std::string_view name) {
  for (auto p : {Protocol::complete, Protocol::half_crop, Protocol::both}) {
    if (name == to_string(p)) return p;
  }
  throw std::invalid_argument("unknown protocol '" + std::string(name) + "' (expected complete, half_crop or both)");
}

namespace {

bool has_every_class(const Confusion& c) {
  return std::all_of(c.begin(), c.end(), [](const auto& row) {
    return std::accumulate(row.begin(), row.end(), std::size_t{0}) > 0;
  });
}

}  // namespace

ViewReport score_view(const std::string& name, const Predictions& p, std::span<const std::int64_t> boundaries) {
  ViewReport v;
  v.view = name;
  v.samples = p.labels.size();
  v.confusion = confusion_matrix(p.labels, p.predicted, p.classes);
  v.accuracy = accuracy(v.confusion);
  v.balanced_accuracy = balanced_accuracy(v.confusion);
  if (has_every_class(v.confusion)) v.auroc = auroc_multiclass(p.probabilities, p.labels, p.classes);

  const auto groups = length_groups(p.lengths, boundaries);
  const std::size_t G = boundaries.size() + 1;
  v.group_sizes.assign(G, 0);
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<int> truth, pred;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (groups[i] != g) continue;
      truth.push_back(p.labels[i]);
      pred.push_back(p.predicted[i]);
    }
    v.group_sizes[g] = truth.size();
    const auto c = confusion_matrix(truth, pred, p.classes);
    v.group_balanced_accuracy.push_back(has_every_class(c) ? std::optional(balanced_accuracy(c)) : std::nullopt);
  }
  return v;
}

EvalReport evaluate(const models::Model& model, std::span<const data::SeriesRecord> records, Protocol protocol,
                    std::uint64_t seed, std::span<const std::int64_t> boundaries) {
  if (records.empty()) throw std::invalid_argument("evaluate: no records");
  EvalReport report;
  report.model = model.config().name;
  report.seed = seed;
  if (boundaries.empty()) {
    std::vector<std::int64_t> lengths;
    for (const auto& r : records) lengths.push_back(static_cast<std::int64_t>(r.length()));
    report.boundaries = tertile_boundaries(lengths);
  } else {
    report.boundaries.assign(boundaries.begin(), boundaries.end());
  }
  if (protocol != Protocol::half_crop) {
    report.views.push_back(score_view("complete", predict(model, records), report.boundaries));
  }
  if (protocol != Protocol::complete) {
    std::vector<data::SeriesRecord> halves;
    halves.reserve(2 * records.size());
    for (const auto& r : records) {
      auto [first, latter] = data::half_crops(r);
      halves.push_back(std::move(first));
      halves.push_back(std::move(latter));
    }
    report.views.push_back(score_view("half_crop", predict(model, halves), report.boundaries));
  }
  return report;
}

namespace {

using nlohmann::json;

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string report_json(const EvalReport& r) {
  json views = json::array();
  for (const auto& v : r.views) {
    json groups = json::object();
    for (std::size_t g = 0; g < v.group_balanced_accuracy.size(); ++g) {
      const std::string name = g < 3 ? kGroupNames[g] : "group" + std::to_string(g);
      groups[name] = {{"balanced_accuracy", optional_json(v.group_balanced_accuracy[g])},
                      {"samples", v.group_sizes[g]}};
    }
    views.push_back({{"view", v.view},
                     {"samples", v.samples},
                     {"accuracy", v.accuracy},
                     {"balanced_accuracy", v.balanced_accuracy},
                     {"auroc", optional_json(v.auroc)},
                     {"length_groups", groups},
                     {"confusion", v.confusion}});
  }
  json j = {{"model", r.model}, {"seed", r.seed}, {"length_boundaries", r.boundaries}, {"views", views}};
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& r) {
  std::ostringstream out;
  char line[160];
  out << "model " << r.model << ", seed " << r.seed << ", length groups split at";
  for (auto b : r.boundaries) out << ' ' << b;
  out << "\n";
  std::snprintf(line, sizeof line, "%-12s %8s %8s %8s %8s %8s %8s %8s\n", "view", "samples", "acc", "bal_acc", "auroc",
                "short", "middle", "long");
  out << line;
  auto fmt = [](const std::optional<double>& v) {
    char b[16];
    if (v) {
      std::snprintf(b, sizeof b, "%.4f", *v);
    } else {
      std::snprintf(b, sizeof b, "-");
    }
    return std::string(b);
  };
  for (const auto& v : r.views) {
    std::string groups[3];
    for (std::size_t g = 0; g < 3; ++g) {
      groups[g] = g < v.group_balanced_accuracy.size() ? fmt(v.group_balanced_accuracy[g]) : "-";
    }
    std::snprintf(line, sizeof line, "%-12s %8zu %8.4f %8.4f %8s %8s %8s %8s\n", v.view.c_str(), v.samples, v.accuracy,
                  v.balanced_accuracy, fmt(v.auroc).c_str(), groups[0].c_str(), groups[1].c_str(), groups[2].c_str());
    out << line;
  }
  return out.str();
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("sample_std: needs at least 2 values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1));
}

namespace {

std::map<std::string, double> flatten(const EvalReport& r) {
  std::map<std::string, double> out;
  for (const auto& v : r.views) {
    out[v.view + ".accuracy"] = v.accuracy;
    out[v.view + ".balanced_accuracy"] = v.balanced_accuracy;
    if (v.auroc) out[v.view + ".auroc"] = *v.auroc;
    for (std::size_t g = 0; g < v.group_balanced_accuracy.size(); ++g) {
      if (v.group_balanced_accuracy[g] && g < 3) {
        out[v.view + ".balanced_accuracy." + kGroupNames[g]] = *v.group_balanced_accuracy[g];
      }
    }
  }
  return out;
}

}  // namespace

std::vector<MetricSummary> multi_seed_summary(std::span<const EvalReport> reports) {
  if (reports.size() < 2) throw std::invalid_argument("multi_seed_summary: needs at least 2 reports");
  std::vector<std::map<std::string, double>> flat;
  for (const auto& r : reports) flat.push_back(flatten(r));
  std::vector<MetricSummary> out;
  for (const auto& [name, unused] : flat.front()) {
    std::vector<double> values;
    for (const auto& f : flat) {
      const auto it = f.find(name);
      if (it != f.end()) values.push_back(it->second);
    }
    if (values.size() != reports.size()) continue;
    MetricSummary s;
    s.metric = name;
    s.runs = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    s.std = sample_std(values);
    s.median = median(values);
    out.push_back(s);
  }
  return out;
}

std::string summary_json(std::span<const MetricSummary> summary) {
  json j = json::array();
  for (const auto& s : summary) {
    j.push_back({{"metric", s.metric}, {"runs", s.runs}, {"mean", s.mean}, {"median", s.median}, {"std", s.std}});
  }
  return j.dump(2) + "\n";
}

}  // namespace evaluation
PTSC_END_NAMESPACE
