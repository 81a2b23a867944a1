#include "commands.hpp"

#include <CLI11.hpp>

#include <ostream>

namespace mass::cli {

int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MaSS optimizer experiments on interpolated least squares", "mass"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string out_dir;
  app.add_option("--config", config_path, "Configuration file (sectioned key = value)");
  app.add_option("--seed", seed, "Override [run] seed");
  app.add_option("--jobs", jobs, "Worker cap; 0 uses every hardware thread");
  app.add_option("--out", out_dir, "Output directory, overrides [output] dir");

  std::vector<std::string> plot_inputs;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"generate", "Write a dataset CSV and its spectral profile"},
      {"run", "Run one optimizer and write trajectory CSVs"},
      {"compare", "Grid-searched baselines against untuned MaSS"},
      {"regimes", "MaSS speed-up across mini-batch sizes"},
      {"nesterov-phase", "SGD+Nesterov second-moment stability map"},
      {"verify", "Lyapunov, variance and structural self-checks"},
      {"plot", "Render trajectory or regime CSVs to SVG"},
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    if (std::string(s.name) == "plot") sub->add_option("csv", plot_inputs, "CSV files")->required();
  }

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    Context ctx;
    ctx.log = &out;
    if (command == "plot") {
      ctx.config = config_path.empty() ? Config::defaults() : Config::load(config_path);
    } else {
      if (config_path.empty()) throw UsageError(command + " needs --config <path>");
      ctx.config = Config::load(config_path);
    }
    if (seed) ctx.config.set("run.seed", std::to_string(*seed));
    if (jobs) ctx.config.set("run.jobs", std::to_string(*jobs));
    ctx.jobs = ctx.config.integer("run.jobs");
    ctx.out_dir = out_dir.empty() ? ctx.config.resolve_path("output.dir") : std::filesystem::absolute(out_dir);

    if (command == "generate") return cmd_generate(ctx);
    if (command == "run") return cmd_run(ctx);
    if (command == "compare") return cmd_compare(ctx);
    if (command == "regimes") return cmd_regimes(ctx);
    if (command == "nesterov-phase") return cmd_nesterov_phase(ctx);
    if (command == "verify") return cmd_verify(ctx);
    std::vector<std::filesystem::path> paths(plot_inputs.begin(), plot_inputs.end());
    return cmd_plot(paths, ctx);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailed;
  }
}

}  // namespace mass::cli
