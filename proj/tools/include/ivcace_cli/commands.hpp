#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace ivcace::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kNonConvergence = 3, kPartialFailure = 4 };

struct CommandOptions {
  std::optional<std::string> config;
  std::optional<std::string> data;
  std::optional<std::string> out;
  std::optional<std::string> debug;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> scenario;
  std::optional<std::size_t> n;
  std::optional<std::size_t> reps;
  std::optional<int> resamples;
  std::optional<std::string> methods;
  std::optional<std::string> cells;
  std::optional<std::string> format;
  bool study = false;
};

int cmd_simulate(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_fit(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_baselines(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_sensitivity(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_bootstrap(const CommandOptions& opts, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches; never throws. Tables go to --out when given,
/// else to `out`; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ivcace::cli
