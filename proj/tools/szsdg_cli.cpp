// Command-line front end: `szsdg run <config.json>` executes one experiment
// and writes a content-addressed artifact directory; `szsdg catalog` lists
// the built-in instances.  Exit codes: 0 success, 2 usage/config error,
// 3 budget exceeded, 4 numerical failure, 1 anything else.
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "szsdg/runner.hpp"
#include "szsdg/threads.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Path-dependent stochastic zero-sum game toolkit"};
  app.fallthrough();
  bool as_json = false;
  int threads = 0;
  app.add_flag("--json", as_json, "Emit machine-readable JSON on stdout");
  app.add_option("--threads", threads,
                 "Worker thread cap (default: SZSDG_THREADS or hardware)")
      ->check(CLI::PositiveNumber);

  std::string config_path;
  std::string output_dir;
  CLI::App* run = app.add_subcommand("run", "Execute one experiment config");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--output-dir", output_dir,
                  "Root directory for run artifacts (default: config value "
                  "or 'runs')");

  CLI::App* cat =
      app.add_subcommand("catalog", "List the built-in game instances");

  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help prints cleanly; real parse errors -> 2
  }

  if (threads > 0) szsdg::set_max_threads(threads);

  if (cat->parsed()) {
    if (as_json)
      std::cout << szsdg::catalog_json().dump(2) << "\n";
    else
      std::cout << szsdg::catalog_text();
    return 0;
  }

  const szsdg::RunResult res =
      szsdg::run_experiment_file(config_path, output_dir);
  if (as_json) {
    nlohmann::json out = {{"exit_code", res.exit_code},
                          {"run_dir", res.run_dir},
                          {"message", res.message}};
    if (res.exit_code == 0) out["report"] = res.report;
    std::cout << out.dump(2) << "\n";
  } else if (res.exit_code == 0) {
    std::cout << res.message << "\n";
  } else {
    std::cerr << "error: " << res.message << "\n";
  }
  return res.exit_code;
}
