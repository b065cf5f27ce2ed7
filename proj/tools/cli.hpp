#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace mixlq::cli {

enum ExitCode : int {
  kPass = 0,
  kVerifyFailed = 1,
  kInputError = 2,
  kNumericFailure = 3,
  kNoConvergence = 4,
};

struct RunConfig {
  std::filesystem::path problem_path;
  int steps = 512;
  int paths = 20000;
  std::uint64_t seed = 42;
  double tol = 1e-8;
  double t_step = 5.0;
  double t_max = 500.0;
  std::filesystem::path out_dir = ".";
  bool antithetic = false;
  // GainSchedule JSON replacing the optimal gains in simulate/verify.
  std::optional<std::filesystem::path> policy;
  int workers = 0;
  // Also write gains.json next to gains.csv (usable as --policy).
  bool gains_json = false;
  bool write_paths = false;
};

/// Throws mixlq::Error(InvalidArgument) when an invariant is violated.
void check_config(const RunConfig& config);

int cmd_solve(const RunConfig& config, std::ostream& out);
int cmd_simulate(const RunConfig& config, std::ostream& out);
int cmd_verify(const RunConfig& config, std::ostream& out);
int cmd_are(const RunConfig& config, std::ostream& out);

/// Parses argv, dispatches, and maps errors to exit codes. Diagnostics go to
/// err, the human-readable summary to out.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mixlq::cli
