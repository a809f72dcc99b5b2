// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <ostream>
#include <sstream>

namespace ptsc::cli {

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void build_app(CLI::App& app, Options& o) {
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.add_option("--precision", o.precision, "Floating-point precision of the model")
      ->check(CLI::IsMember({"f32", "f64"}));
  app.add_flag("--force", o.force, "Overwrite existing outputs");
  app.add_flag("--quiet", o.quiet, "No per-epoch progress");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic train/test pair");
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--seed", o.seed, "Generator seed (default 0)");
  gen->add_option("--train-count", o.train_count, "Training records")->check(CLI::PositiveNumber);
  gen->add_option("--test-count", o.test_count, "Test records")->check(CLI::PositiveNumber);
  gen->add_option("--config", o.config, "Generator JSON overriding the default settings");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", o.config, "Model preset name, model JSON, or a run's config.json")->required();
  train->add_option("--training", o.training, "Training preset (archive, trajectory) or JSON");
  train->add_option("--data", o.data, "Training dataset (.ptsc or .tsv)")->required();
  train->add_option("--out", o.out, "Run directory")->required();
  train->add_option("--seed", o.seed, "Model and training seed (default 0)");
  train->add_option("--epochs", o.epochs, "Override the number of epochs")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Score a trained model");
  eval->add_option("--run", o.run, "Run directory holding config.json and checkpoints");
  eval->add_option("--checkpoint", o.checkpoint, "best, last, or a checkpoint path");
  eval->add_option("--config", o.config, "Config JSON (default: the run's config.json)");
  eval->add_option("--data", o.data, "Test dataset")->required();
  eval->add_option("--out", o.out, "Output directory for the report")->required();
  eval->add_option("--protocol", o.protocol, "complete, half_crop or both")
      ->check(CLI::IsMember({"complete", "half_crop", "both"}));
  eval->add_option("--seed", o.seed, "Seed recorded in the report");
  eval->add_flag("--dump-te-correlation", o.dump_te_correlation, "Also write the encoding correlation matrix");

  auto* rf = app.add_subcommand("rf-report", "Receptive fields of a model configuration");
  rf->add_option("--config", o.config, "Model preset name or JSON")->required();
  rf->add_option("--out", o.out, "Also write the report and a manifest here");
  rf->add_flag("--json", o.json, "Print JSON instead of a table");

  auto* te = app.add_subcommand("dump-te", "Export a trained temporal encoding");
  te->add_option("--run", o.run, "Run directory");
  te->add_option("--checkpoint", o.checkpoint, "best, last, or a checkpoint path");
  te->add_option("--config", o.config, "Config JSON (default: the run's config.json)");
  te->add_option("--out", o.out, "Output directory")->required();

  for (auto* sub : {gen, train, eval, rf, te}) {
    sub->callback([&o, sub] { o.command = sub->get_name(); });
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  o.args = args;
  CLI::App app{"Partial time series classification toolkit", "ptsc"};
  app.set_version_flag("--version", kVersion);
  build_app(app, o);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kValidationError;
  }
  if (o.precision == "f32") return ptsc::f32::commands::execute(o, out, err);
  return ptsc::f64::commands::execute(o, out, err);
}

}  // namespace ptsc::cli
