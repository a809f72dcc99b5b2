// SPDX-License-Identifier: Apache-2.0
// Compiled once per precision; each copy lands in that precision's namespace.
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "cli.hpp"
#include "ptsc/data.hpp"
#include "ptsc/evaluation.hpp"
#include "ptsc/models.hpp"
#include "ptsc/temporal_encoding.hpp"
#include "ptsc/training.hpp"

PTSC_BEGIN_NAMESPACE
namespace commands {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

/// Creates `dir` and refuses to replace any of `files` unless forced.
void prepare_outputs(const fs::path& dir, const std::vector<std::string>& files, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
  if (!force) {
    for (const auto& f : files) {
      if (fs::exists(dir / f)) throw UsageError((dir / f).string() + " already exists (pass --force to overwrite)");
    }
  }
  fs::create_directories(dir);
}

void write_manifest(const fs::path& dir, const cli::Options& o, const std::string& config_text, std::uint64_t seed,
                    const std::vector<std::string>& outputs) {
  json m;
  m["command"] = o.command;
  m["config_hash"] = "fnv1a64:" + cli::fnv1a_hex(config_text);
  m["config_file"] = "config.json";
  m["seed"] = seed;
  m["precision"] = kPrecisionName;
  m["versions"] = {{"ptsc", cli::kVersion}, {"checkpoint_format", kCheckpointVersion}, {"dataset_format", "PTSC v1"}};
  m["outputs"] = outputs;
  m["args"] = o.args;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

struct ResolvedConfig {
  models::ModelConfig model;
  std::optional<training::TrainConfig> training;
};

/// A preset name, a model JSON, or a run's config.json ({"model", "training"}).
ResolvedConfig resolve_config(const std::string& spec) {
  if (spec.empty()) throw UsageError("no model configuration given (--config)");
  if (!fs::exists(spec)) {
    const auto names = models::preset_names();
    if (std::find(names.begin(), names.end(), spec) == names.end()) {
      throw UsageError("--config: '" + spec + "' is neither a file nor a preset name");
    }
    return {models::preset(spec), std::nullopt};
  }
  const std::string text = read_text(spec);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(spec + ": not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("model")) {
    ResolvedConfig r{models::parse_model_config(j["model"].dump()), std::nullopt};
    if (j.contains("training")) r.training = training::parse_train_config(j["training"].dump());
    return r;
  }
  return {models::parse_model_config(text), std::nullopt};
}

training::TrainConfig resolve_training(const std::string& spec) {
  if (fs::exists(spec)) return training::parse_train_config(read_text(spec));
  return training::train_preset(spec);
}

std::string run_config_text(const models::ModelConfig& mc, const training::TrainConfig& tc) {
  json j;
  j["model"] = json::parse(models::model_config_json(mc));
  j["training"] = json::parse(training::train_config_json(tc));
  return j.dump(2) + "\n";
}

void fill_from_dataset(models::ModelConfig& mc, const data::DatasetMeta& meta) {
  auto fill = [](std::size_t& field, std::size_t value, const char* what) {
    if (field == 0) field = value;
    else if (field != value) {
      throw std::invalid_argument(std::string("model expects ") + std::to_string(field) + " " + what +
                                  ", dataset has " + std::to_string(value));
    }
  };
  fill(mc.input_channels, meta.channels, "channels");
  fill(mc.classes, meta.classes, "classes");
  if (mc.t_max == 0) mc.t_max = static_cast<std::size_t>(meta.t_max);
  if (mc.length_policy == models::LengthPolicy::variable_masked && meta.t_max > static_cast<std::int64_t>(mc.t_max)) {
    throw std::invalid_argument("dataset timestamps reach " + std::to_string(meta.t_max) + " but the model canvas is " +
                                std::to_string(mc.t_max));
  }
}

data::Dataset load_data(const std::string& path) {
  if (path.empty()) throw UsageError("no dataset given (--data)");
  if (!fs::exists(path)) throw UsageError("dataset " + path + " does not exist");
  return data::load_dataset(path);
}

std::vector<NamedArray> with_norm(std::vector<NamedArray> state, const data::NormStats& norm) {
  const Shape shape{norm.min.size()};
  state.push_back({"norm.min", shape, norm.min});
  state.push_back({"norm.max", shape, norm.max});
  return state;
}

int gen_data(const cli::Options& o, std::ostream& out) {
  data::SyntheticConfig sc;
  if (!o.config.empty()) {
    const json j = json::parse(read_text(o.config));
    for (const auto& [k, v] : j.items()) {
      if (k == "channels") sc.channels = v.get<std::size_t>();
      else if (k == "t_max") sc.t_max = v.get<std::int64_t>();
      else if (k == "event_time") sc.event_time = v.get<std::int64_t>();
      else if (k == "classes") sc.classes = v.get<std::size_t>();
      else if (k == "min_length") sc.min_length = v.get<std::int64_t>();
      else if (k == "max_length") sc.max_length = v.get<std::int64_t>();
      else if (k == "noise") sc.noise = v.get<double>();
      else throw std::invalid_argument("generator config: unknown key '" + k + "'");
    }
  }
  const std::uint64_t seed = o.seed.value_or(0);
  json cfg = {{"channels", sc.channels},     {"t_max", sc.t_max},           {"event_time", sc.event_time},
              {"classes", sc.classes},       {"min_length", sc.min_length}, {"max_length", sc.max_length},
              {"noise", sc.noise},           {"train_count", o.train_count}, {"test_count", o.test_count},
              {"train_seed", 2 * seed},      {"test_seed", 2 * seed + 1}};
  const std::vector<std::string> files = {"train.ptsc", "test.ptsc", "config.json", "manifest.json"};
  const fs::path dir = o.out;
  prepare_outputs(dir, files, o.force);
  const auto train = data::generate_synthetic(sc, o.train_count, 2 * seed, "train");
  const auto test = data::generate_synthetic(sc, o.test_count, 2 * seed + 1, "test");
  data::save_dataset(dir / "train.ptsc", train);
  data::save_dataset(dir / "test.ptsc", test);
  const std::string config_text = cfg.dump(2) + "\n";
  write_text(dir / "config.json", config_text);
  write_manifest(dir, o, config_text, seed, files);
  out << "wrote " << train.records.size() << " training and " << test.records.size() << " test records to "
      << dir.string() << "\n";
  return cli::kSuccess;
}

int train_cmd(const cli::Options& o, std::ostream& out, std::ostream& err) {
  auto resolved = resolve_config(o.config);
  auto mc = resolved.model;
  training::TrainConfig tc = !o.training.empty() ? resolve_training(o.training)
                             : resolved.training   ? *resolved.training
                                                   : training::train_preset("trajectory");
  if (o.seed) tc.seed = *o.seed;
  if (o.epochs) tc.epochs = *o.epochs;
  tc.validate();

  auto dataset = load_data(o.data);
  fill_from_dataset(mc, dataset.meta);
  mc.validate();

  const fs::path dir = o.out;
  const std::vector<std::string> files = {"config.json", "manifest.json", "best.ckpt", "last.ckpt", "history.csv"};
  prepare_outputs(dir, files, o.force);
  const std::string config_text = run_config_text(mc, tc);
  write_text(dir / "config.json", config_text);

  const auto norm = data::fit_minmax(dataset.records, dataset.meta.channels);
  data::apply_minmax(dataset.records, norm);
  auto model = models::build_model(mc, tc.seed);

  std::vector<training::EpochRecord> seen;
  auto on_epoch = [&](const training::EpochRecord& r) {
    seen.push_back(r);
    if (o.quiet) return;
    err << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss;
    if (tc.monitor == training::Monitor::val_auroc) err << " val_auroc " << r.val_auroc;
    err << " lr " << r.lr << " crop " << r.crop_ratio << "\n";
  };
  training::TrainResult result;
  try {
    result = training::train(model, dataset.records, mc.classes, tc, on_epoch);
  } catch (const training::TrainingAborted& e) {
    save_checkpoint(dir / "diagnostic.ckpt", with_norm(e.state(), norm));
    std::ofstream hist(dir / "history.csv");
    training::write_history_csv(hist, seen);
    throw;
  }
  save_checkpoint(dir / "best.ckpt", with_norm(result.best_state, norm));
  save_checkpoint(dir / "last.ckpt", with_norm(model.state(), norm));
  {
    std::ofstream hist(dir / "history.csv");
    training::write_history_csv(hist, result.history);
    if (!hist) throw std::runtime_error("failed writing history.csv");
  }
  write_manifest(dir, o, config_text, tc.seed, files);
  out << "trained " << mc.name << " for " << result.history.size() << " epochs"
      << (result.stopped_early ? " (stopped early)" : "") << "; best epoch " << result.best_epoch << ", "
      << (tc.monitor == training::Monitor::val_loss ? "val_loss " : "val_auroc ") << result.best_metric << "\n";
  return cli::kSuccess;
}

struct LoadedRun {
  models::Model model;
  data::NormStats norm;
  std::string config_text;
};

LoadedRun load_run(const cli::Options& o) {
  fs::path ckpt = o.checkpoint;
  if (o.checkpoint == "best" || o.checkpoint == "last") {
    if (o.run.empty()) throw UsageError("--checkpoint " + o.checkpoint + " needs --run");
    ckpt = fs::path(o.run) / (o.checkpoint + ".ckpt");
  }
  if (!fs::exists(ckpt)) throw UsageError("checkpoint " + ckpt.string() + " does not exist");
  const fs::path config_path = !o.config.empty() ? fs::path(o.config)
                               : !o.run.empty()  ? fs::path(o.run) / "config.json"
                                                 : ckpt.parent_path() / "config.json";
  if (!fs::exists(config_path)) throw UsageError("config " + config_path.string() + " does not exist");
  LoadedRun r;
  r.config_text = read_text(config_path);
  auto mc = resolve_config(config_path.string()).model;
  mc.validate();
  r.model = models::build_model(mc, 0);
  const auto entries = load_checkpoint(ckpt);
  r.model.load_state(entries);
  for (const auto& e : entries) {
    if (e.name == "norm.min") r.norm.min = e.values;
    if (e.name == "norm.max") r.norm.max = e.values;
  }
  if (r.norm.min.size() != mc.input_channels || r.norm.max.size() != mc.input_channels) {
    throw CheckpointError("checkpoint " + ckpt.string() + " lacks normalisation statistics for every channel");
  }
  return r;
}

std::string matrix_csv(const Tensor& m, const std::string& corner, std::int64_t first_label) {
  std::ostringstream ss;
  ss << std::setprecision(17);
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  ss << corner;
  for (std::size_t c = 0; c < cols; ++c) ss << ',' << first_label + static_cast<std::int64_t>(c);
  ss << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    ss << first_label + static_cast<std::int64_t>(r);
    for (std::size_t c = 0; c < cols; ++c) ss << ',' << m.data()[r * cols + c];
    ss << '\n';
  }
  return ss.str();
}

const te::TemporalEncoding& require_te(const models::Model& model) {
  if (!model.temporal_encoding()) throw UsageError("model " + model.config().name + " has no temporal encoding");
  return *model.temporal_encoding();
}

int eval_cmd(const cli::Options& o, std::ostream& out) {
  const auto protocol = evaluation::parse_protocol(o.protocol);
  auto loaded = load_run(o);
  auto dataset = load_data(o.data);
  auto mc = loaded.model.config();
  fill_from_dataset(mc, dataset.meta);
  if (o.dump_te_correlation) require_te(loaded.model);

  std::vector<std::string> files = {"report.json", "manifest.json"};
  if (o.dump_te_correlation) files.push_back("te_correlation.csv");
  const fs::path dir = o.out;
  prepare_outputs(dir, files, o.force);

  data::apply_minmax(dataset.records, loaded.norm);
  const std::uint64_t seed = o.seed.value_or(0);
  const auto report = evaluation::evaluate(loaded.model, dataset.records, protocol, seed);
  write_text(dir / "report.json", evaluation::report_json(report) + "\n");
  if (o.dump_te_correlation) {
    write_text(dir / "te_correlation.csv", matrix_csv(te::te_correlation(require_te(loaded.model)), "t", 1));
  }
  write_manifest(dir, o, loaded.config_text, seed, files);
  out << evaluation::report_table(report);
  return cli::kSuccess;
}

int dump_te(const cli::Options& o, std::ostream& out) {
  auto loaded = load_run(o);
  const auto& enc = require_te(loaded.model);
  const std::vector<std::string> files = {"te_table.csv", "te_correlation.csv", "manifest.json"};
  const fs::path dir = o.out;
  prepare_outputs(dir, files, o.force);

  std::ostringstream table;
  table << std::setprecision(17) << "timestamp";
  for (std::size_t c = 0; c < enc.channels(); ++c) table << ",e" << c;
  table << '\n';
  for (std::size_t t = 0; t < enc.t_max(); ++t) {
    table << t + 1;
    for (std::size_t c = 0; c < enc.channels(); ++c) table << ',' << enc.table.data()[c * enc.t_max() + t];
    table << '\n';
  }
  write_text(dir / "te_table.csv", table.str());
  write_text(dir / "te_correlation.csv", matrix_csv(te::te_correlation(enc), "t", 1));
  write_manifest(dir, o, loaded.config_text, o.seed.value_or(0), files);
  out << "wrote a " << enc.channels() << " x " << enc.t_max() << " encoding table to " << dir.string() << "\n";
  return cli::kSuccess;
}

int rf_report_cmd(const cli::Options& o, std::ostream& out) {
  const auto mc = resolve_config(o.config).model;
  const auto report = models::rf_report(mc);
  const std::string text = o.json ? models::rf_report_json(report, mc) + "\n" : models::format_rf_report(report, mc);
  if (!o.out.empty()) {
    const std::vector<std::string> files = {"rf_report.json", "config.json", "manifest.json"};
    const fs::path dir = o.out;
    prepare_outputs(dir, files, o.force);
    const std::string config_text = models::model_config_json(mc) + "\n";
    write_text(dir / "rf_report.json", models::rf_report_json(report, mc) + "\n");
    write_text(dir / "config.json", config_text);
    write_manifest(dir, o, config_text, o.seed.value_or(0), files);
  }
  out << text;
  return cli::kSuccess;
}

}  // namespace

int execute(const cli::Options& o, std::ostream& out, std::ostream& err) {
  try {
    if (o.command == "gen-data") return gen_data(o, out);
    if (o.command == "train") return train_cmd(o, out, err);
    if (o.command == "eval") return eval_cmd(o, out);
    if (o.command == "dump-te") return dump_te(o, out);
    if (o.command == "rf-report") return rf_report_cmd(o, out);
    err << "error: unknown command '" << o.command << "'\n";
    return cli::kValidationError;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return cli::kValidationError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return cli::kValidationError;
  } catch (const data::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return cli::kValidationError;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return cli::kValidationError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return cli::kValidationError;
  } catch (const training::TrainingAborted& e) {
    err << "error: training aborted: " << e.what() << " (state saved to diagnostic.ckpt)\n";
    return cli::kRuntimeFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return cli::kRuntimeFailure;
  }
}

}  // namespace commands
PTSC_END_NAMESPACE
