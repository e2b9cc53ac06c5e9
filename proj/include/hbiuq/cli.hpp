#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hbiuq::cli {

/// Process exit codes. These are part of the command-line contract.
enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,       // numerical or evaluation failure
  kConfig = 2,        // invalid config, arguments or data layout
  kConvergence = 3,   // sampler non-convergence or failed coverage checks
  kIo = 4,            // unreadable input, unwritable output, locked directory
  kZeroVariance = 5,  // sensitivity run on a constant output
};

struct BenchmarkOptions {
  std::size_t groups = 100;
  std::size_t per_group = 5;
  std::uint64_t seed = 7;
  /// Kept draws summed over chains.
  std::size_t draws = 20000;
  std::size_t chains = 4;
  std::size_t burn_in = 1000;
  std::size_t splits = 1;
  std::filesystem::path output = "benchmark-toy-out";
};

int benchmark_toy(const BenchmarkOptions& options, std::ostream& log);
int calibrate(const std::filesystem::path& config, const std::optional<std::filesystem::path>& output,
              std::ostream& log);
int screen(const std::filesystem::path& config, const std::optional<std::filesystem::path>& output,
           std::ostream& log);
int sobol(const std::filesystem::path& config, const std::optional<std::filesystem::path>& output,
          std::ostream& log);

/// Parses arguments, dispatches, and maps exceptions onto exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hbiuq::cli
