// pybind11 surface: the run-config entry point, the instance catalog, and a
// direct hook into the scenario-tree game values.  JSON crosses the boundary
// as text so the python side stays dependency-free.
#include <pybind11/pybind11.h>

#include <json.hpp>
#include <string>
#include <utility>

#include "szsdg/catalog.hpp"
#include "szsdg/game_value.hpp"
#include "szsdg/runner.hpp"
#include "szsdg/threads.hpp"

namespace py = pybind11;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Path-dependent stochastic zero-sum game toolkit (C++ core)";

  m.def(
      "catalog_json", [] { return szsdg::catalog_json().dump(); },
      "Instance catalog as a JSON array string.");

  m.def(
      "run",
      [](const std::string& config_json, const std::string& output_root) {
        const szsdg::RunResult res = szsdg::run_experiment(
            nlohmann::json::parse(config_json), output_root);
        return py::make_tuple(res.exit_code, res.run_dir, res.report.dump(),
                              res.message);
      },
      py::arg("config_json"), py::arg("output_root") = std::string(),
      "Execute one run config; returns (exit_code, run_dir, report_json, "
      "message).");

  m.def(
      "tree_value_bounds",
      [](const std::string& instance, const std::string& params_json,
         int n_steps, int grid_points) {
        const szsdg::Instance inst = szsdg::make_instance(
            instance, params_json.empty()
                          ? nlohmann::json::object()
                          : nlohmann::json::parse(params_json));
        szsdg::GameGridSpec spec;
        spec.n_steps = n_steps;
        const auto ug = inst.u_set.grid_points(grid_points);
        const auto vg = inst.v_set.grid_points(grid_points);
        const szsdg::ValueEstimate lo =
            szsdg::lower_value_tree(inst.c, inst.initial, inst.z0, inst.w0,
                                    ug, vg, inst.horizon, spec);
        const szsdg::ValueEstimate up =
            szsdg::upper_value_tree(inst.c, inst.initial, inst.z0, inst.w0,
                                    ug, vg, inst.horizon, spec);
        return std::make_pair(lo.value, up.value);
      },
      py::arg("instance"), py::arg("params_json") = std::string(),
      py::arg("n_steps") = 2, py::arg("grid_points") = 3,
      "Stagewise minimax value bounds (lower, upper) on a scenario tree.");

  m.def("set_max_threads", &szsdg::set_max_threads, py::arg("n"),
        "Cap the worker thread count (n <= 1 forces serial execution).");
}
