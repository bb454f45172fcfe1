// nzk: run one experiment command and write its artifacts plus a manifest.
//
//   nzk <train|kernel|dynamics|check|sweep> [--config FILE] [--out DIR] [--seed N] [--threads N]
//
// Exit status: 0 when every verdict passes or is inconclusive, 1 when a
// verdict fails, 2 on configuration, parse or divergence errors.

#include "nzk/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Zeroth-order kernel experiments"};
  app.require_subcommand(1);

  nzk::cli::Options opt;
  std::uint64_t seed = 0;
  for (const char* name : {"train", "kernel", "dynamics", "check", "sweep"}) {
    auto* sub = app.add_subcommand(name);
    if (std::string(name) != "check")
      sub->add_option("--config", opt.config_path, "Config file (key = value)")->required()->check(CLI::ExistingFile);
    else
      sub->add_option("--config", opt.config_path, "Config file (key = value)")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "Output directory")->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", opt.threads, "Worker threads for ensembles and Monte Carlo")->check(CLI::PositiveNumber);
  }
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  if (app.get_subcommands().front()->count("--seed")) opt.seed = seed;

  try {
    const nzk::RunManifest m = nzk::cli::dispatch(command, opt);
    for (const auto& v : m.verdicts)
      std::cout << v.name << ": " << nzk::to_string(v.status) << " (measured " << nzk::format_double(v.measured)
                << ", tolerance " << nzk::format_double(v.tolerance) << ")\n";
    std::cout << "wrote " << m.artifacts.size() << " artifact(s) and manifest to " << opt.out_dir.string() << '\n';
    return m.ok() ? 0 : 1;
  } catch (const nzk::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
