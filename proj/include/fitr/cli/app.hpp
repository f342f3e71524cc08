#ifndef FITR_CLI_APP_HPP
#define FITR_CLI_APP_HPP

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fitr/cli/commands.hpp"
#include "fitr/cli/config.hpp"

namespace fitr::cli {

/// Logs go to stderr; FITR_LOG selects the level (trace, debug, info, warn,
/// error, off; default info).
inline void configure_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("fitr");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)once;
  const char* env = std::getenv("FITR_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

/// Entry point shared by the executable and the tests. Returns the exit code.
inline int run_cli(int argc, const char* const* argv) {
  configure_logging();
  CLI::App app{"Fused individualized treatment rules: simulation and real-data commands"};
  app.require_subcommand(1);

  struct Flags {
    std::string config, out, data, model;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers, reps;
  };
  Flags flags;
  const auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "master seed (overrides the config)");
    sub->add_option("--workers", flags.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--reps", flags.reps, "replications (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_option("--data", flags.data, "input CSV (overrides the config)");
    sub->add_option("--model", flags.model, "model JSON (overrides the config)");
    return sub;
  };
  add("simulate", "run the replication harness on one scenario");
  add("sensitivity", "run the rho sweep of the sensitivity family");
  add("fit", "tune and fit a rule on a trial CSV");
  add("predict", "apply a saved model to new covariates");
  add("evaluate", "IPW value of a model, or cross-validated comparison of methods");
  add("generate", "write a synthetic trial CSV from a scenario");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalidInput;
  }

  const Command command = command_from_string(app.get_subcommands().front()->get_name());
  try {
    ExperimentConfig cfg = flags.config.empty() ? parse_config(command, json::object())
                                                : load_config(command, flags.config);
    if (!flags.out.empty()) cfg.out = flags.out;
    if (!flags.data.empty()) cfg.data = flags.data;
    if (!flags.model.empty()) cfg.model = flags.model;
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.workers) cfg.workers = *flags.workers;
    if (flags.reps) cfg.reps = *flags.reps;
    cfg.validate();
    const CommandOutput out = run_command(cfg);
    for (const auto& f : out.files) spdlog::debug("wrote {}", f);
    return out.exit_code;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kInvalidInput;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kInvalidInput;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeError;
  }
}

}  // namespace fitr::cli

#endif  // FITR_CLI_APP_HPP
