// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ptsc::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kSuccess = 0, kValidationError = 1, kRuntimeFailure = 2 };

struct Options {
  std::string command;  // gen-data | train | eval | rf-report | dump-te
  std::string config;   // preset name or JSON path
  std::string training;  // empty: the config's own, else "trajectory"
  std::string data;
  std::string out;
  std::string run;
  std::string checkpoint = "best";
  std::optional<std::uint64_t> seed;
  std::string protocol = "both";
  std::string precision = "f64";
  bool force = false;
  bool json = false;
  bool dump_te_correlation = false;
  std::optional<std::size_t> epochs;
  std::size_t train_count = 2000;
  std::size_t test_count = 2000;
  bool quiet = false;
  /// Original argument list, recorded in the manifest.
  std::vector<std::string> args;
};

/// Parses and runs one command. Returns the process exit code: 0 on success,
/// 1 on a validation error (bad flags, bad inputs, existing outputs without
/// --force), 2 on a runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a of `text`, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace ptsc::cli

namespace ptsc::inline f64::commands {
int execute(const cli::Options& options, std::ostream& out, std::ostream& err);
}
namespace ptsc::inline f32::commands {
int execute(const cli::Options& options, std::ostream& out, std::ostream& err);
}
