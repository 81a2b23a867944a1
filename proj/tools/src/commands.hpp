#pragma once

#include "config.hpp"

#include "mass/experiments.hpp"
#include "mass/optim.hpp"
#include "mass/problem.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mass::cli {

enum ExitCode : int { kOk = 0, kFailed = 1, kUsage = 2 };

struct Context {
  Config config;
  std::filesystem::path out_dir;
  std::size_t jobs = 0;
  std::ostream* log = nullptr;
};

LinearProblem make_problem(const Config& c);
BatchSize parse_batch(const std::string& text);
LossTarget make_target(const Config& c);
RunSpec make_run_spec(const Config& c, const SpectralProfile& profile, BatchSize batch);

/// Ordered record of the resolved config plus command-specific entries.
experiments::Manifest base_manifest(const Context& ctx, const std::string& command);

int cmd_generate(const Context& ctx);
int cmd_run(const Context& ctx);
int cmd_compare(const Context& ctx);
int cmd_regimes(const Context& ctx);
int cmd_nesterov_phase(const Context& ctx);
int cmd_verify(const Context& ctx);
int cmd_plot(const std::vector<std::filesystem::path>& csv_paths, const Context& ctx);

/// Parses argv and dispatches. Output and diagnostics go to the given streams.
int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mass::cli
