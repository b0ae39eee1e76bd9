#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rcca/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Canonical correlation analysis with regularised estimators"};
  app.set_version_flag("--version", rcca::cli::kVersion);
  rcca::cli::Options opts;
  std::uint64_t seed = 0;
  app.add_option("command", opts.command, "fit | sweep | compare | biplot | synth-bench")
      ->required()
      ->check(CLI::IsMember(rcca::cli::commands()));
  app.add_option("--config", opts.config_path, "JSON config file")->required();
  app.add_option("--out", opts.out_dir, "output directory")->required();
  app.add_option("--jobs", opts.jobs, "worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "base seed, overrides the config");
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return rcca::cli::kConfigError;
  }
  if (seed_opt->count() > 0) opts.seed = seed;
  return rcca::cli::run(opts, std::cerr);
}
