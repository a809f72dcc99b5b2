// SPDX-License-Identifier: Apache-2.0
#include "ptsc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "ptsc/log.hpp"

PTSC_BEGIN_NAMESPACE
namespace data {

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& message)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

void validate_record(const SeriesRecord& r, const DatasetMeta& meta) {
  const std::string who = "record '" + r.id + "'";
  if (r.channels != meta.channels) {
    throw std::invalid_argument(who + " has " + std::to_string(r.channels) + " channels, dataset has " +
                                std::to_string(meta.channels));
  }
  if (r.values.size() % std::max<std::size_t>(r.channels, 1) != 0) {
    throw std::invalid_argument(who + ": value count is not a multiple of the channel count");
  }
  const auto T = static_cast<std::int64_t>(r.length());
  if (T < 1) throw std::invalid_argument(who + " is empty");
  if (r.label < 0 || static_cast<std::size_t>(r.label) >= meta.classes) {
    throw std::invalid_argument(who + " has label " + std::to_string(r.label) + " outside [0, " +
                                std::to_string(meta.classes) + ")");
  }
  if (r.t1 < 1) throw std::invalid_argument(who + " starts at t1 = " + std::to_string(r.t1) + " (must be >= 1)");
  if (r.t1 + T - 1 > meta.t_max) {
    throw std::invalid_argument(who + " spans [" + std::to_string(r.t1) + ", " + std::to_string(r.t1 + T - 1) +
                                "], past TMAX = " + std::to_string(meta.t_max));
  }
  if (T < meta.t_min || T > meta.t_max) {
    throw std::invalid_argument(who + " has length " + std::to_string(T) + " outside [TMIN, TMAX] = [" +
                                std::to_string(meta.t_min) + ", " + std::to_string(meta.t_max) + "]");
  }
}

namespace {

template <class T>
bool parse_number(std::string_view s, T& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '+')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset read_dataset(std::istream& in, const std::string& source) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header) {
      if (line.empty()) continue;
      std::istringstream hs(line);
      std::string magic, version, tok;
      hs >> magic >> version;
      if (magic != "PTSC" || version != "v1") {
        throw ParseError(source, lineno, "expected header 'PTSC v1 D=<d> N=<n> TMIN=<a> TMAX=<b>'");
      }
      std::map<std::string, std::int64_t> fields;
      while (hs >> tok) {
        const auto eq = tok.find('=');
        std::int64_t v = 0;
        if (eq == std::string::npos || !parse_number(std::string_view(tok).substr(eq + 1), v)) {
          throw ParseError(source, lineno, "malformed header field '" + tok + "'");
        }
        fields[tok.substr(0, eq)] = v;
      }
      for (const char* key : {"D", "N", "TMIN", "TMAX"}) {
        if (!fields.count(key)) throw ParseError(source, lineno, std::string("header lacks ") + key);
      }
      if (fields["D"] < 1 || fields["N"] < 1 || fields["TMIN"] < 1 || fields["TMAX"] < fields["TMIN"]) {
        throw ParseError(source, lineno, "header needs D >= 1, N >= 1 and 1 <= TMIN <= TMAX");
      }
      ds.meta.channels = static_cast<std::size_t>(fields["D"]);
      ds.meta.classes = static_cast<std::size_t>(fields["N"]);
      ds.meta.t_min = fields["TMIN"];
      ds.meta.t_max = fields["TMAX"];
      header = true;
      continue;
    }
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view key = "# class_names=";
      if (line.starts_with(key)) {
        ds.meta.class_names.clear();
        for (auto name : split(std::string_view(line).substr(key.size()), ',')) ds.meta.class_names.emplace_back(name);
        if (ds.meta.class_names.size() != ds.meta.classes) {
          throw ParseError(source, lineno, "class_names lists " + std::to_string(ds.meta.class_names.size()) +
                                               " names for N = " + std::to_string(ds.meta.classes));
        }
      }
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() < 4) throw ParseError(source, lineno, "record needs <id>,<label>,<t1>,<T>,<values>");
    SeriesRecord r;
    r.id = std::string(fields[0]);
    r.channels = ds.meta.channels;
    std::int64_t T = 0;
    if (!parse_number(fields[1], r.label)) throw ParseError(source, lineno, "bad label '" + std::string(fields[1]) + "'");
    if (!parse_number(fields[2], r.t1)) throw ParseError(source, lineno, "bad t1 '" + std::string(fields[2]) + "'");
    if (!parse_number(fields[3], T) || T < 1) throw ParseError(source, lineno, "bad length '" + std::string(fields[3]) + "'");
    const std::size_t expected = ds.meta.channels * static_cast<std::size_t>(T);
    if (fields.size() - 4 != expected) {
      throw ParseError(source, lineno, "expected " + std::to_string(expected) + " values (D*T), got " +
                                           std::to_string(fields.size() - 4));
    }
    r.values.resize(expected);
    for (std::size_t i = 0; i < expected; ++i) {
      if (!parse_number(fields[4 + i], r.values[i])) {
        throw ParseError(source, lineno, "bad value '" + std::string(fields[4 + i]) + "' at position " +
                                             std::to_string(i));
      }
    }
    try {
      validate_record(r, ds.meta);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, lineno, e.what());
    }
    ds.records.push_back(std::move(r));
  }
  if (!header) throw ParseError(source, lineno, "missing PTSC header");
  return ds;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  out << "PTSC v1 D=" << ds.meta.channels << " N=" << ds.meta.classes << " TMIN=" << ds.meta.t_min
      << " TMAX=" << ds.meta.t_max << "\n";
  if (!ds.meta.class_names.empty()) {
    out << "# class_names=";
    for (std::size_t i = 0; i < ds.meta.class_names.size(); ++i) out << (i ? "," : "") << ds.meta.class_names[i];
    out << "\n";
  }
  for (const auto& r : ds.records) {
    if (r.id.find_first_of(",\n") != std::string::npos) {
      throw std::invalid_argument("record id '" + r.id + "' may not contain commas or newlines");
    }
    out << r.id << ',' << r.label << ',' << r.t1 << ',' << r.length();
    for (double v : r.values) out << ',' << format_double(v);
    out << '\n';
  }
}

Dataset read_tsv_archive(std::istream& in, std::span<const std::string> class_names, const std::string& source) {
  struct Raw {
    std::string label;
    std::vector<double> values;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
    const auto fields = split(line, sep);
    Raw r;
    r.label = std::string(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      std::string_view f = fields[i];
      double v = 0;
      if (f == "NaN" || f == "nan" || f == "NAN" || f.empty()) {
        v = std::numeric_limits<double>::quiet_NaN();
      } else if (!parse_number(f, v)) {
        throw ParseError(source, lineno, "bad value '" + std::string(f) + "'");
      }
      r.values.push_back(v);
    }
    while (!r.values.empty() && std::isnan(r.values.back())) r.values.pop_back();
    if (r.values.empty()) throw ParseError(source, lineno, "series has no values");
    if (std::any_of(r.values.begin(), r.values.end(), [](double v) { return std::isnan(v); })) {
      throw ParseError(source, lineno, "missing values inside a series are not supported");
    }
    raw.push_back(std::move(r));
  }
  if (raw.empty()) throw ParseError(source, lineno, "archive contains no series");

  std::vector<std::string> names(class_names.begin(), class_names.end());
  if (names.empty()) {
    std::set<std::string> seen;
    for (const auto& r : raw) seen.insert(r.label);
    names.assign(seen.begin(), seen.end());
    const bool numeric = std::all_of(names.begin(), names.end(), [](const std::string& s) {
      double v = 0;
      return parse_number(std::string_view(s), v);
    });
    if (numeric) {
      std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
        double x = 0, y = 0;
        parse_number(std::string_view(a), x);
        parse_number(std::string_view(b), y);
        return x < y;
      });
    }
  }
  Dataset ds;
  ds.meta.channels = 1;
  ds.meta.classes = names.size();
  ds.meta.class_names = names;
  ds.meta.t_min = std::numeric_limits<std::int64_t>::max();
  ds.meta.t_max = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto it = std::find(names.begin(), names.end(), raw[i].label);
    if (it == names.end()) throw std::invalid_argument(source + ": unknown class label '" + raw[i].label + "'");
    SeriesRecord r;
    r.id = "row" + std::to_string(i);
    r.label = static_cast<int>(it - names.begin());
    r.t1 = 1;
    r.channels = 1;
    r.values = std::move(raw[i].values);
    const auto T = static_cast<std::int64_t>(r.values.size());
    ds.meta.t_min = std::min(ds.meta.t_min, T);
    ds.meta.t_max = std::max(ds.meta.t_max, T);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, std::span<const std::string> class_names) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset " + path.string());
  if (path.extension() == ".tsv") return read_tsv_archive(in, class_names, path.string());
  return read_dataset(in, path.string());
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  write_dataset(out, dataset);
  if (!out) throw std::runtime_error("failed writing dataset " + path.string());
}

NormStats fit_minmax(std::span<const SeriesRecord> records, std::size_t channels) {
  if (records.empty()) throw std::invalid_argument("fit_minmax: no records");
  NormStats s;
  s.min.assign(channels, std::numeric_limits<double>::infinity());
  s.max.assign(channels, -std::numeric_limits<double>::infinity());
  for (const auto& r : records) {
    const std::size_t T = r.length();
    for (std::size_t d = 0; d < channels; ++d) {
      const auto first = r.values.begin() + static_cast<std::ptrdiff_t>(d * T);
      const auto [lo, hi] = std::minmax_element(first, first + static_cast<std::ptrdiff_t>(T));
      s.min[d] = std::min(s.min[d], *lo);
      s.max[d] = std::max(s.max[d], *hi);
    }
  }
  return s;
}

void apply_minmax(std::span<SeriesRecord> records, const NormStats& stats) {
  for (auto& r : records) {
    if (r.channels != stats.min.size()) throw std::invalid_argument("apply_minmax: channel count mismatch");
    const std::size_t T = r.length();
    for (std::size_t d = 0; d < r.channels; ++d) {
      const double range = stats.max[d] - stats.min[d];
      for (std::size_t t = 0; t < T; ++t) {
        double& v = r.values[d * T + t];
        v = range > 0 ? (v - stats.min[d]) / range : 0.0;
      }
    }
  }
}

std::vector<double> generate_latent(const SyntheticConfig& cfg, int label, Rng& rng) {
  const std::size_t D = cfg.channels, T = static_cast<std::size_t>(cfg.t_max);
  const std::size_t coords = std::min<std::size_t>(3, D);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Every draw happens in the same order for every class so the pre-event
  // segment has one distribution.
  std::vector<double> base(D), amplitude(D);
  for (auto& b : base) b = 0.5 * gauss(rng);
  for (auto& a : amplitude) a = 0.8 + 0.4 * unit(rng);
  const double period_draw = unit(rng);
  const double phase = 2 * std::numbers::pi * unit(rng);

  // The post-event span is cut into one window per class. Class c
  // oscillates only inside window c, so class 0 rings right after the event
  // and then settles, while later classes stay calm at first and start to
  // oscillate late. Classes above 0 also drift slowly away from their
  // starting level. The waveform and its period range are shared.
  const double period = 20.0 + 8.0 * period_draw;
  const double classes = static_cast<double>(cfg.classes);
  const double span = static_cast<double>(cfg.t_max - cfg.event_time) / classes;
  const double on = span * label, off = label + 1 < static_cast<int>(cfg.classes) ? span * (label + 1) : 1e300;
  const double drift = 0.6 * label / (classes - 1);
  auto logistic = [](double x) { return 1 / (1 + std::exp(-x)); };

  const double rho = 0.6, innov = std::sqrt(1 - rho * rho);
  double shared = gauss(rng);
  std::vector<double> own(D);
  for (auto& o : own) o = gauss(rng);

  std::vector<double> out(D * T);
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      shared = rho * shared + innov * gauss(rng);
      for (auto& o : own) o = rho * o + innov * gauss(rng);
    }
    const double u = static_cast<double>(t + 1) - static_cast<double>(cfg.event_time);
    double envelope = 0;
    if (u > 0) {
      const double rise = label == 0 ? 1 - std::exp(-u / 20.0) : logistic((u - on) / 15.0);
      envelope = rise * logistic((off - u) / 15.0);
    }
    for (std::size_t d = 0; d < D; ++d) {
      double v = base[d] + cfg.noise * (0.6 * shared + 0.8 * own[d]);
      if (d < coords && u > 0) {
        v += amplitude[d] * (envelope * std::sin(2 * std::numbers::pi * u / period + phase + 0.5 * d) +
                             drift * u / static_cast<double>(cfg.t_max));
      }
      out[d * T + t] = v;
    }
  }
  return out;
}

Dataset generate_synthetic(const SyntheticConfig& cfg, std::size_t count, std::uint64_t seed, const std::string& tag) {
  if (cfg.channels == 0 || cfg.classes < 2) throw std::invalid_argument("synthetic: need channels >= 1 and classes >= 2");
  if (cfg.min_length < 1 || cfg.max_length < cfg.min_length) {
    throw std::invalid_argument("synthetic: need 1 <= min_length <= max_length");
  }
  if (cfg.t_max < cfg.min_length) {
    throw std::invalid_argument("synthetic: T_max " + std::to_string(cfg.t_max) + " is shorter than the minimum length " +
                                std::to_string(cfg.min_length));
  }
  if (cfg.event_time < 1 || cfg.event_time > cfg.t_max) throw std::invalid_argument("synthetic: event outside [1, T_max]");
  Rng rng(seed);
  Dataset ds;
  ds.meta.channels = cfg.channels;
  ds.meta.classes = cfg.classes;
  ds.meta.t_min = cfg.min_length;
  ds.meta.t_max = cfg.t_max;
  const std::int64_t longest = std::min(cfg.max_length, cfg.t_max);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % cfg.classes);
    const auto latent = generate_latent(cfg, label, rng);
    const std::int64_t T = std::uniform_int_distribution<std::int64_t>(cfg.min_length, longest)(rng);
    const std::int64_t t1 = std::uniform_int_distribution<std::int64_t>(1, cfg.t_max - T + 1)(rng);
    SeriesRecord r;
    r.id = tag + "-" + std::to_string(seed) + "-" + std::to_string(i);
    r.label = label;
    r.t1 = t1;
    r.channels = cfg.channels;
    r.values.resize(cfg.channels * static_cast<std::size_t>(T));
    for (std::size_t d = 0; d < cfg.channels; ++d) {
      const auto src = latent.begin() + static_cast<std::ptrdiff_t>(d * static_cast<std::size_t>(cfg.t_max) + (t1 - 1));
      std::copy(src, src + T, r.values.begin() + static_cast<std::ptrdiff_t>(d * static_cast<std::size_t>(T)));
    }
    ds.records.push_back(std::move(r));
  }
  std::shuffle(ds.records.begin(), ds.records.end(), rng);
  return ds;
}

double pre_event_mean_statistic(const SyntheticConfig& cfg, std::span<const std::vector<double>> a,
                                std::span<const std::vector<double>> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("pre_event_mean_statistic: need >= 2 series per group");
  const auto T = static_cast<std::size_t>(cfg.t_max);
  const auto pre = static_cast<std::size_t>(std::max<std::int64_t>(cfg.event_time - 1, 1));
  double worst = 0;
  for (std::size_t d = 0; d < cfg.channels; ++d) {
    auto moments = [&](std::span<const std::vector<double>> group) {
      double s = 0, ss = 0;
      for (const auto& x : group) {
        double m = 0;
        for (std::size_t t = 0; t < pre; ++t) m += x[d * T + t];
        m /= static_cast<double>(pre);
        s += m;
        ss += m * m;
      }
      const double n = static_cast<double>(group.size());
      const double mean = s / n;
      return std::pair{mean, (ss - n * mean * mean) / (n - 1)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    const double se = std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
    worst = std::max(worst, se > 0 ? std::abs(ma - mb) / se : 0.0);
  }
  return worst;
}

namespace {

SeriesRecord window(const SeriesRecord& r, std::size_t offset, std::size_t length) {
  SeriesRecord out;
  out.id = r.id;
  out.label = r.label;
  out.t1 = r.t1 + static_cast<std::int64_t>(offset);
  out.channels = r.channels;
  const std::size_t T = r.length();
  out.values.resize(r.channels * length);
  for (std::size_t d = 0; d < r.channels; ++d) {
    const auto src = r.values.begin() + static_cast<std::ptrdiff_t>(d * T + offset);
    std::copy(src, src + static_cast<std::ptrdiff_t>(length), out.values.begin() + static_cast<std::ptrdiff_t>(d * length));
  }
  return out;
}

}  // namespace

SeriesRecord random_crop(const SeriesRecord& record, double ratio, Rng& rng) {
  if (!(ratio > 0 && ratio <= 1)) throw std::invalid_argument("random_crop: ratio must lie in (0, 1]");
  const std::size_t T = record.length();
  const auto shortest = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(T))));
  const std::size_t L = std::uniform_int_distribution<std::size_t>(std::min(shortest, T), T)(rng);
  const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, T - L)(rng);
  return window(record, offset, L);
}

double crop_schedule(std::size_t epoch, std::size_t ramp_end, double start, double end) {
  if (ramp_end == 0 || epoch >= ramp_end) return end;
  const double f = static_cast<double>(epoch) / static_cast<double>(ramp_end);
  return start + (end - start) * f;
}

SeriesRecord resample_linear(const SeriesRecord& record, std::size_t target) {
  if (target < 2) throw std::invalid_argument("resample_linear: target length must be >= 2");
  const std::size_t T = record.length();
  SeriesRecord out = record;
  out.t1 = 1;
  out.values.assign(record.channels * target, 0.0);
  if (T == 1) {
    warn("resample_linear: record '" + record.id + "' has a single frame; replicating it");
    for (std::size_t d = 0; d < record.channels; ++d) {
      std::fill_n(out.values.begin() + static_cast<std::ptrdiff_t>(d * target), target, record.values[d]);
    }
    return out;
  }
  for (std::size_t i = 0; i < target; ++i) {
    const double pos = static_cast<double>(i) * static_cast<double>(T - 1) / static_cast<double>(target - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), T - 2);
    const double frac = pos - static_cast<double>(lo);
    for (std::size_t d = 0; d < record.channels; ++d) {
      const double a = record.values[d * T + lo], b = record.values[d * T + lo + 1];
      out.values[d * target + i] = frac == 0.0 ? a : frac == 1.0 ? b : a + (b - a) * frac;
    }
  }
  return out;
}

std::pair<SeriesRecord, SeriesRecord> half_crops(const SeriesRecord& record) {
  const std::size_t T = record.length();
  if (T < 2) {
    warn("half_crops: record '" + record.id + "' has a single frame; both halves repeat it");
    return {record, record};
  }
  const std::size_t first = (T + 1) / 2;
  return {window(record, 0, first), window(record, first, T - first)};
}

Batch make_batch(std::span<const SeriesRecord> records, std::size_t t_max, std::span<const double> class_weights) {
  if (records.empty()) throw std::invalid_argument("make_batch: no records");
  const std::size_t B = records.size(), D = records.front().channels;
  Batch batch;
  std::vector<Real> x(B * D * t_max, Real(0));
  for (std::size_t b = 0; b < B; ++b) {
    const auto& r = records[b];
    const std::size_t T = r.length();
    if (r.channels != D) throw std::invalid_argument("make_batch: records disagree on the channel count");
    if (r.t1 < 1 || static_cast<std::size_t>(r.t1 - 1) + T > t_max) {
      throw std::invalid_argument("make_batch: record '" + r.id + "' spanning [" + std::to_string(r.t1) + ", " +
                                  std::to_string(r.t1 + static_cast<std::int64_t>(T) - 1) + "] overruns T_max " +
                                  std::to_string(t_max));
    }
    const auto start = static_cast<std::size_t>(r.t1 - 1);
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t t = 0; t < T; ++t) x[(b * D + d) * t_max + start + t] = static_cast<Real>(r.values[d * T + t]);
    }
    batch.valid.push_back({static_cast<std::int64_t>(start), static_cast<std::int64_t>(start + T)});
    batch.labels.push_back(r.label);
    batch.lengths.push_back(static_cast<std::int64_t>(T));
    if (class_weights.empty()) {
      batch.weights.push_back(Real(1));
    } else {
      if (r.label < 0 || static_cast<std::size_t>(r.label) >= class_weights.size()) {
        throw std::invalid_argument("make_batch: label " + std::to_string(r.label) + " has no class weight");
      }
      batch.weights.push_back(static_cast<Real>(class_weights[static_cast<std::size_t>(r.label)]));
    }
  }
  batch.x = Tensor({B, D, t_max}, std::move(x));
  return batch;
}

}  // namespace data
PTSC_END_NAMESPACE
