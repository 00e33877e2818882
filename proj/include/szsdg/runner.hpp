#pragma once

#include <json.hpp>
#include <string>

// Configuration-driven experiment runner: validates a strict JSON config,
// executes the named method on a catalog instance, and writes deterministic
// artifacts into a content-addressed run directory.
//
// Config schema (unknown keys are rejected at every level):
//   {
//     "instance": {"name": <catalog name>, "params": {...}},
//     "method":   "tree" | "lsmc" | "residual" | "dpp_check"
//               | "isaacs" | "ito_verify",
//     "seed":     <non-negative integer, required>,
//     "numerics": {... method-specific block, defaults applied ...},
//     "output":   {"dir": <output root, default "runs">}
//   }
//
// Artifacts per run directory (named run-<fnv1a64 of the semantic config>):
//   config.json   semantic config (instance+method+seed+numerics), resolved
//   report.json   results, embedding the full resolved numerics block
//   summary.txt   human-readable one-screen summary
//   *.csv         method-specific plot-ready tables
//   meta.json     timestamps and host details (excluded from byte-identity)
// plus an append-only ledger.csv in the output root.  Re-running the same
// config rewrites byte-identical artifacts (meta.json aside).

namespace szsdg {

struct RunResult {
  int exit_code = 0;       // 0 ok, 2 config, 3 budget, 4 numerical, 1 other
  std::string run_dir;     // empty when the config never validated
  nlohmann::json report;   // report.json content on success
  std::string message;     // error text or success note
};

RunResult run_experiment(const nlohmann::json& config,
                         const std::string& output_root_override = "");

RunResult run_experiment_file(const std::string& config_path,
                              const std::string& output_root_override = "");

// Catalog listing for the CLI: human-readable text and machine-readable JSON.
std::string catalog_text();
nlohmann::json catalog_json();

}  // namespace szsdg
