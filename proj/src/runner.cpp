#include "szsdg/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "szsdg/bsde.hpp"
#include "szsdg/catalog.hpp"
#include "szsdg/dynamics.hpp"
#include "szsdg/errors.hpp"
#include "szsdg/functional.hpp"
#include "szsdg/game_value.hpp"
#include "szsdg/hji.hpp"
#include "szsdg/rng.hpp"
#include "szsdg/serialize.hpp"
#include "szsdg/threads.hpp"

namespace szsdg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void config_error(const std::string& msg) {
  throw std::invalid_argument(msg);
}

void reject_unknown(const json& obj,
                    std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok)
      config_error("config: unknown field '" +
                   (where.empty() ? key : where + "." + key) + "'");
  }
}

json numerics_defaults(const std::string& method) {
  if (method == "tree")
    return {{"n_steps", 3},
            {"grid_points", 3},
            {"brute_force", false},
            {"work_budget", 10000000},
            {"table_budget", 2000000}};
  if (method == "lsmc")
    return {{"n_paths", 20000},
            {"n_steps", 16},
            {"u_gains", json::array({-1.5, -1.0, -0.5, 0.0})},
            {"v_gains", json::array({0.0, 0.25, 0.5, 0.75})}};
  if (method == "residual")
    return {{"side", "lower"}, {"n_points", 100}, {"grid_points", 5},
            {"refine_passes", 8}, {"kappa", 0.45}, {"mu", 2.0},
            {"mu0", 2.0},        {"k2", 1.0},      {"c_coeff", 1.0}};
  if (method == "dpp_check")
    return {{"n_steps", 2},
            {"split_level", 1},
            {"grid_points", 3},
            {"work_budget", 10000000},
            {"table_budget", 2000000}};
  if (method == "isaacs")
    return {{"n_inputs", 20}, {"grid_points", 2}, {"refine_passes", 0},
            {"kappa", 0.45},  {"mu", 2.0},        {"mu0", 2.0}};
  if (method == "ito_verify")
    return {{"n_paths", 256}, {"n_steps", 128}, {"n_doublings", 3}};
  config_error("config: method '" + method +
               "' is not one of tree, lsmc, residual, dpp_check, isaacs, "
               "ito_verify");
}

json resolve_numerics(const json& given, const json& defaults) {
  json out = defaults;
  for (const auto& [key, value] : given.items()) {
    if (!defaults.contains(key))
      config_error("config: unknown field 'numerics." + key + "'");
    const json& d = defaults.at(key);
    const char* want = nullptr;
    if (d.is_number() && !value.is_number()) want = "a number";
    if (d.is_boolean() && !value.is_boolean()) want = "a boolean";
    if (d.is_string() && !value.is_string()) want = "a string";
    if (d.is_array() && !value.is_array()) want = "an array";
    if (want)
      config_error("config: 'numerics." + key + "' must be " + want);
    out[key] = value;
  }
  return out;
}

int req_int(const json& numerics, const char* key, int lo) {
  const json& v = numerics.at(key);
  if (!v.is_number_integer())
    config_error(std::string("config: 'numerics.") + key +
                 "' must be an integer");
  const std::int64_t x = v.get<std::int64_t>();
  if (x < lo)
    config_error(std::string("config: 'numerics.") + key + "' must be >= " +
                 std::to_string(lo));
  return static_cast<int>(x);
}

std::uint64_t req_u64(const json& numerics, const char* key) {
  const json& v = numerics.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 1)
    config_error(std::string("config: 'numerics.") + key +
                 "' must be a positive integer");
  return v.get<std::uint64_t>();
}

double req_num(const json& numerics, const char* key) {
  return numerics.at(key).get<double>();
}

std::vector<double> req_array(const json& numerics, const char* key) {
  const json& v = numerics.at(key);
  std::vector<double> out;
  if (v.is_array())
    for (const auto& e : v) {
      if (!e.is_number()) break;
      out.push_back(e.get<double>());
    }
  if (out.empty() || out.size() != v.size())
    config_error(std::string("config: 'numerics.") + key +
                 "' must be a non-empty array of numbers");
  return out;
}

struct ParsedConfig {
  std::string instance_name;
  json instance_params;
  std::string method;
  std::uint64_t seed = 0;
  json numerics;
  std::string out_dir = "runs";
};

ParsedConfig parse_config(const json& cfg) {
  if (!cfg.is_object()) config_error("config: root must be an object");
  reject_unknown(cfg, {"instance", "method", "seed", "numerics", "output"},
                 "");
  ParsedConfig p;
  if (!cfg.contains("seed"))
    config_error("config: missing required field 'seed'");
  if (!cfg.at("seed").is_number_integer() ||
      cfg.at("seed").get<std::int64_t>() < 0)
    config_error("config: 'seed' must be a non-negative integer");
  p.seed = cfg.at("seed").get<std::uint64_t>();

  if (!cfg.contains("instance"))
    config_error("config: missing required field 'instance'");
  const json& inst = cfg.at("instance");
  if (!inst.is_object()) config_error("config: 'instance' must be an object");
  reject_unknown(inst, {"name", "params"}, "instance");
  if (!inst.contains("name") || !inst.at("name").is_string())
    config_error("config: 'instance.name' must be a string");
  p.instance_name = inst.at("name").get<std::string>();
  p.instance_params = inst.value("params", json::object());
  if (!p.instance_params.is_object())
    config_error("config: 'instance.params' must be an object");

  if (!cfg.contains("method") || !cfg.at("method").is_string())
    config_error("config: missing required string field 'method'");
  p.method = cfg.at("method").get<std::string>();
  p.numerics = resolve_numerics(cfg.value("numerics", json::object()),
                                numerics_defaults(p.method));

  if (cfg.contains("output")) {
    const json& out = cfg.at("output");
    if (!out.is_object()) config_error("config: 'output' must be an object");
    reject_unknown(out, {"dir"}, "output");
    if (out.contains("dir")) {
      if (!out.at("dir").is_string())
        config_error("config: 'output.dir' must be a string");
      p.out_dir = out.at("dir").get<std::string>();
    }
  }
  return p;
}

// ------------------------------------------------------------------ methods

struct MethodOutput {
  json results;
  std::vector<std::pair<std::string, std::string>> csvs;  // filename, bytes
  std::string summary;
};

json estimate_json(const ValueEstimate& e) {
  return {{"value", e.value},
          {"std_err", e.std_err},
          {"method", e.method},
          {"flag", e.flag},
          {"metadata", e.metadata}};
}

MinimaxOptions minimax_options(const Instance& inst, const json& n) {
  MinimaxOptions opt;
  opt.refine_passes = req_int(n, "refine_passes", 0);
  if (opt.refine_passes > 0 &&
      (inst.u_set.is_finite() || inst.v_set.is_finite()))
    config_error(
        "config: 'numerics.refine_passes' needs box control sets; this "
        "instance uses finite control levels");
  opt.u_box = &inst.u_set;
  opt.v_box = &inst.v_set;
  return opt;
}

HolderBall ball_from(const json& n) {
  HolderBall ball;
  ball.kappa = req_num(n, "kappa");
  ball.mu = req_num(n, "mu");
  ball.mu0 = req_num(n, "mu0");
  if (!(ball.kappa > 0.0) || !(ball.kappa < 0.5))
    config_error("config: 'numerics.kappa' must lie in (0, 0.5)");
  if (!(ball.mu > 0.0) || !(ball.mu0 > 0.0))
    config_error("config: 'numerics.mu' and 'numerics.mu0' must be positive");
  return ball;
}

MethodOutput run_tree(const Instance& inst, const json& n) {
  GameGridSpec spec;
  spec.n_steps = req_int(n, "n_steps", 0);
  spec.work_budget = req_u64(n, "work_budget");
  spec.table_budget = req_u64(n, "table_budget");
  const int gp = req_int(n, "grid_points", 1);
  const bool brute = n.at("brute_force").get<bool>();
  const auto ug = inst.u_set.grid_points(gp);
  const auto vg = inst.v_set.grid_points(gp);
  const ValueEstimate lo = lower_value_tree(
      inst.c, inst.initial, inst.z0, inst.w0, ug, vg, inst.horizon, spec,
      brute);
  const ValueEstimate hi = upper_value_tree(
      inst.c, inst.initial, inst.z0, inst.w0, ug, vg, inst.horizon, spec,
      brute);
  MethodOutput out;
  out.results = {{"lower", estimate_json(lo)},
                 {"upper", estimate_json(hi)},
                 {"order_gap", hi.value - lo.value}};
  std::string csv = "side,value,method,flag\n";
  csv += "lower," + format_double(lo.value) + "," + lo.method + "," +
         lo.flag + "\n";
  csv += "upper," + format_double(hi.value) + "," + hi.method + "," +
         hi.flag + "\n";
  out.csvs.emplace_back("values.csv", csv);
  std::ostringstream s;
  s << "instance " << inst.name << ": exact tree values\n"
    << "  steps " << spec.n_steps << ", grids " << ug.size() << " x "
    << vg.size() << (brute ? ", strategy enumeration" : "") << "\n"
    << "  lower value = " << format_double(lo.value) << "\n"
    << "  upper value = " << format_double(hi.value) << "\n"
    << "  upper - lower = " << format_double(hi.value - lo.value) << "\n";
  out.summary = s.str();
  return out;
}

std::vector<FeedbackRule> gain_rules(const ControlSet& set,
                                     const std::vector<double>& gains,
                                     const std::string& prefix) {
  std::vector<FeedbackRule> rules;
  for (double g : gains) {
    FeedbackRule r;
    r.name = prefix + format_double(g);
    r.eval = [set, g](double, const Path& x) {
      double val = g * x.terminal()(0);
      if (set.is_finite()) {
        // snap to the nearest admissible level (first wins on ties)
        double best = set.points.front()(0);
        for (const auto& pt : set.points)
          if (std::abs(pt(0) - val) < std::abs(best - val)) best = pt(0);
        val = best;
      } else {
        val = std::clamp(val, set.lo(0), set.hi(0));
      }
      return Eigen::VectorXd::Constant(1, val);
    };
    rules.push_back(std::move(r));
  }
  return rules;
}

std::string objective_csv(const json& metadata,
                          const std::vector<FeedbackRule>& u_rules,
                          const std::vector<FeedbackRule>& v_rules) {
  std::string csv = "u_rule,v_rule,value,std_err\n";
  const json& m = metadata.at("objective_matrix");
  for (std::size_t iu = 0; iu < m.size(); ++iu)
    for (std::size_t iv = 0; iv < m[iu].size(); ++iv) {
      csv += u_rules[iu].name + "," + v_rules[iv].name + ",";
      csv += format_double(m[iu][iv].at("value").get<double>()) + ",";
      csv += format_double(m[iu][iv].at("std_err").get<double>()) + "\n";
    }
  return csv;
}

MethodOutput run_lsmc(const Instance& inst, const json& n,
                      std::uint64_t seed) {
  if (inst.c.u_dim != 1 || inst.c.v_dim != 1 || inst.c.state_dim != 1)
    config_error(
        "config: method 'lsmc' ships linear-gain rule families for scalar "
        "instances only");
  const int n_paths = req_int(n, "n_paths", 2);
  const int n_steps = req_int(n, "n_steps", 1);
  const auto u_rules =
      gain_rules(inst.u_set, req_array(n, "u_gains"), "u_gain_");
  const auto v_rules =
      gain_rules(inst.v_set, req_array(n, "v_gains"), "v_gain_");
  const ValueEstimate lo =
      lower_value_lsmc(inst.c, inst.initial, inst.z0, inst.w0, u_rules,
                       v_rules, inst.horizon, n_paths, n_steps, seed);
  const ValueEstimate hi =
      upper_value_lsmc(inst.c, inst.initial, inst.z0, inst.w0, u_rules,
                       v_rules, inst.horizon, n_paths, n_steps, seed);
  MethodOutput out;
  out.results = {{"lower", estimate_json(lo)}, {"upper", estimate_json(hi)}};
  out.csvs.emplace_back("objective_lower.csv",
                        objective_csv(lo.metadata, u_rules, v_rules));
  out.csvs.emplace_back("objective_upper.csv",
                        objective_csv(hi.metadata, u_rules, v_rules));
  std::ostringstream s;
  s << "instance " << inst.name
    << ": Monte-Carlo minimax over linear-gain rule families\n"
    << "  " << n_paths << " paths, " << n_steps << " steps, "
    << u_rules.size() << " x " << v_rules.size() << " rules\n"
    << "  lower estimate = " << format_double(lo.value) << " +- "
    << format_double(lo.std_err) << " ("
    << lo.metadata.at("selected_u_rule").get<std::string>() << " vs "
    << lo.metadata.at("selected_v_rule").get<std::string>() << ")\n"
    << "  upper estimate = " << format_double(hi.value) << " +- "
    << format_double(hi.std_err) << " ("
    << hi.metadata.at("selected_u_rule").get<std::string>() << " vs "
    << hi.metadata.at("selected_v_rule").get<std::string>() << ")\n"
    << "  estimates are restricted to the configured rule families\n";
  out.summary = s.str();
  return out;
}

MethodOutput run_residual(const Instance& inst, const json& n,
                          std::uint64_t seed) {
  const std::string side_str = n.at("side").get<std::string>();
  if (side_str != "lower" && side_str != "upper" && side_str != "both")
    config_error(
        "config: 'numerics.side' must be 'lower', 'upper', or 'both'");
  const int n_points = req_int(n, "n_points", 1);
  const int gp = req_int(n, "grid_points", 1);
  const HolderBall ball = ball_from(n);
  const MinimaxOptions mopt = minimax_options(inst, n);
  const double k2 = req_num(n, "k2"), cc = req_num(n, "c_coeff");
  const double horizon = inst.horizon;

  // Quadratic stationary candidate value(t, x) = k2 |x|^2 + c_coeff (T - t).
  const CandidateSolution cand = markovian_candidate(
      [k2, cc, horizon](double t, const Eigen::VectorXd& x) {
        return k2 * x.squaredNorm() + cc * (horizon - t);
      },
      [cc](double, const Eigen::VectorXd&) { return -cc; },
      [k2](double, const Eigen::VectorXd& x) {
        return Eigen::VectorXd(2.0 * k2 * x);
      },
      [k2](double, const Eigen::VectorXd& x) {
        return Eigen::MatrixXd(
            2.0 * k2 *
            Eigen::MatrixXd::Identity(x.size(), x.size()));
      });

  const auto ug = inst.u_set.grid_points(gp);
  const auto vg = inst.v_set.grid_points(gp);
  std::vector<Side> sides;
  if (side_str == "lower" || side_str == "both") sides.push_back(Side::lower);
  if (side_str == "upper" || side_str == "both") sides.push_back(Side::upper);

  std::vector<ResidualSweepRow> rows;
  double max_abs_residual = 0.0, max_terminal_gap = 0.0;
  for (int i = 0; i < n_points; ++i) {
    std::mt19937_64 rng = substream(seed, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double ti = horizon * (0.05 + 0.9 * unif(rng));
    const Path a = sample_holder_ball(ball, ti, mix_seed(seed, 40000 + i));
    const CadlagPath z =
        CadlagPath::constant(ti, Eigen::VectorXd::Zero(inst.c.u_dim));
    const CadlagPath w =
        CadlagPath::constant(ti, Eigen::VectorXd::Zero(inst.c.v_dim));
    for (Side side : sides) {
      const ResidualReport rep = phji_residual(
          inst.c, cand, side, a, z, w, horizon, ug, vg, inst.u_set,
          inst.v_set, mopt);
      rows.push_back({i, side, rep.residual, rep.terminal_gap});
      max_abs_residual = std::max(max_abs_residual, std::abs(rep.residual));
      max_terminal_gap = std::max(max_terminal_gap, rep.terminal_gap);
    }
  }
  MethodOutput out;
  out.results = {{"side", side_str},
                 {"n_points", n_points},
                 {"max_abs_residual", max_abs_residual},
                 {"max_terminal_gap", max_terminal_gap},
                 {"candidate", {{"k2", k2}, {"c_coeff", cc}}}};
  out.csvs.emplace_back("residuals.csv", residual_sweep_csv(rows));
  std::ostringstream s;
  s << "instance " << inst.name << ": backward-equation residual sweep ("
    << side_str << ")\n"
    << "  candidate value = " << format_double(k2) << " x^2 + "
    << format_double(cc) << " (T - t), " << n_points << " sampled points\n"
    << "  max |residual| = " << format_double(max_abs_residual) << "\n"
    << "  max terminal gap = " << format_double(max_terminal_gap) << "\n";
  out.summary = s.str();
  return out;
}

MethodOutput run_dpp_check(const Instance& inst, const json& n) {
  GameGridSpec spec;
  spec.n_steps = req_int(n, "n_steps", 1);
  spec.work_budget = req_u64(n, "work_budget");
  spec.table_budget = req_u64(n, "table_budget");
  const int split = req_int(n, "split_level", 0);
  if (split > spec.n_steps)
    config_error("config: 'numerics.split_level' must be <= numerics.n_steps");
  const int gp = req_int(n, "grid_points", 1);
  const auto ug = inst.u_set.grid_points(gp);
  const auto vg = inst.v_set.grid_points(gp);
  const DppReport rep =
      check_dpp(inst.c, inst.initial, inst.z0, inst.w0, ug, vg, inst.horizon,
                spec, split);
  const double max_gap = std::max(rep.lower_gap, rep.upper_gap);
  MethodOutput out;
  out.results = rep.to_json();
  out.results["max_gap"] = max_gap;
  out.results["within_1e-12"] = max_gap <= 1e-12;
  std::string csv = "side,lhs,rhs,gap\n";
  csv += "lower," + format_double(rep.lower_lhs) + "," +
         format_double(rep.lower_rhs) + "," + format_double(rep.lower_gap) +
         "\n";
  csv += "upper," + format_double(rep.upper_lhs) + "," +
         format_double(rep.upper_rhs) + "," + format_double(rep.upper_gap) +
         "\n";
  out.csvs.emplace_back("dpp.csv", csv);
  std::ostringstream s;
  s << "instance " << inst.name
    << ": dynamic-programming split consistency\n"
    << "  steps " << spec.n_steps << ", split after step " << split
    << ", grids " << ug.size() << " x " << vg.size() << "\n"
    << "  lower: lhs = " << format_double(rep.lower_lhs)
    << ", rhs = " << format_double(rep.lower_rhs)
    << ", gap = " << format_double(rep.lower_gap) << "\n"
    << "  upper: lhs = " << format_double(rep.upper_lhs)
    << ", rhs = " << format_double(rep.upper_rhs)
    << ", gap = " << format_double(rep.upper_gap) << "\n"
    << "  max gap = " << format_double(max_gap)
    << (max_gap <= 1e-12 ? " (within 1e-12)" : " (EXCEEDS 1e-12)") << "\n";
  out.summary = s.str();
  return out;
}

MethodOutput run_isaacs(const Instance& inst, const json& n,
                        std::uint64_t seed) {
  const int n_inputs = req_int(n, "n_inputs", 1);
  const int gp = req_int(n, "grid_points", 1);
  const HolderBall ball = ball_from(n);
  const MinimaxOptions mopt = minimax_options(inst, n);
  const auto ug = inst.u_set.grid_points(gp);
  const auto vg = inst.v_set.grid_points(gp);
  const int sd = inst.c.state_dim;

  std::string csv = "input_id,lower,upper,raw_gap,gap\n";
  double max_gap = 0.0, min_raw = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_inputs; ++i) {
    std::mt19937_64 rng = substream(seed, 70000 + static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double ti = inst.horizon * (0.1 + 0.8 * unif(rng));
    const Path a = sample_holder_ball(ball, ti, mix_seed(seed, 80000 + i));
    const CadlagPath z =
        CadlagPath::constant(ti, Eigen::VectorXd::Zero(inst.c.u_dim));
    const CadlagPath w =
        CadlagPath::constant(ti, Eigen::VectorXd::Zero(inst.c.v_dim));
    const double y = normal(rng);
    Eigen::VectorXd p(sd);
    for (int k = 0; k < sd; ++k) p(k) = normal(rng);
    Eigen::MatrixXd g(sd, sd);
    for (int r = 0; r < sd; ++r)
      for (int cidx = 0; cidx < sd; ++cidx) g(r, cidx) = normal(rng);
    const HamiltonianInput in = HamiltonianInput::make(
        inst.c, a, z, w, y, p, 0.5 * (g + g.transpose()));
    const IsaacsReport rep = isaacs_gap(inst.c, in, {}, ug, vg, mopt);
    csv += std::to_string(i) + "," + format_double(rep.lower) + "," +
           format_double(rep.upper) + "," + format_double(rep.raw_gap) + "," +
           format_double(rep.gap) + "\n";
    max_gap = std::max(max_gap, rep.gap);
    min_raw = std::min(min_raw, rep.raw_gap);
  }
  MethodOutput out;
  out.results = {{"n_inputs", n_inputs},
                 {"max_gap", max_gap},
                 {"min_raw_gap", min_raw}};
  out.csvs.emplace_back("isaacs.csv", csv);
  std::ostringstream s;
  s << "instance " << inst.name
    << ": gap between the two Hamiltonian minimax orders\n"
    << "  " << n_inputs << " sampled inputs, grids " << ug.size() << " x "
    << vg.size() << "\n"
    << "  max gap = " << format_double(max_gap) << "\n"
    << "  min raw gap = " << format_double(min_raw)
    << " (negative would breach the minimax inequality)\n";
  out.summary = s.str();
  return out;
}

MethodOutput run_ito_verify(const Instance& inst, const json& n,
                            std::uint64_t seed) {
  const int n_paths = req_int(n, "n_paths", 2);
  const int base_steps = req_int(n, "n_steps", 1);
  const int n_doublings = req_int(n, "n_doublings", 0);
  const double t0 = inst.initial.t_end();
  const int finest = base_steps << n_doublings;
  const BrownianBatch master(seed, n_paths, finest, t0, inst.horizon,
                             inst.c.noise_dim);
  const CadlagPath u = CadlagPath::constant(
      inst.horizon, Eigen::VectorXd::Zero(inst.c.u_dim));
  const CadlagPath v = CadlagPath::constant(
      inst.horizon, Eigen::VectorXd::Zero(inst.c.v_dim));

  struct Family {
    const char* name;
    PathFunctional f;
  };
  const std::vector<Family> families = {
      {"terminal", PathFunctional::of_state(
                       [](const Path& a) { return a.terminal()(0); })},
      {"terminal_sq", PathFunctional::of_state([](const Path& a) {
         const double x = a.terminal()(0);
         return x * x;
       })},
      {"integral", PathFunctional::of_state([](const Path& a) {
         double acc = 0.0;
         for (std::size_t i = 1; i < a.size(); ++i)
           acc += 0.5 * (a.grid()[i] - a.grid()[i - 1]) *
                  (a.point(i)(0) + a.point(i - 1)(0));
         return acc;
       })}};

  // Same underlying noise at every level: the finest batch is merged in
  // pairs, so halving errors reflect the scheme, not fresh randomness.
  std::string csv = "family,n_steps,max_err,p50_err,p95_err,scale,rel_err\n";
  json fam_json = json::object();
  int monotone = 0;
  std::ostringstream lines;
  for (const auto& fam : families) {
    json levels = json::array();
    std::vector<double> errs, scales;
    for (int j = 0; j <= n_doublings; ++j) {
      const int steps = base_steps << j;
      const BrownianBatch batch =
          steps == finest ? master : master.coarsen(finest / steps);
      const ItoReport rep =
          verify_functional_ito(fam.f, inst.c, inst.initial, u, v,
                                inst.horizon, n_paths, steps, seed, &batch);
      levels.push_back(rep.to_json());
      errs.push_back(rep.max_err);
      scales.push_back(rep.scale);
      csv += std::string(fam.name) + "," + std::to_string(steps) + "," +
             format_double(rep.max_err) + "," + format_double(rep.p50_err) +
             "," + format_double(rep.p95_err) + "," +
             format_double(rep.scale) + "," + format_double(rep.rel_err) +
             "\n";
    }
    // Errors at measurement precision count as nonincreasing: once the
    // discrepancy sits at the round-off floor, halving steps cannot shrink
    // it further.
    bool mono = true;
    for (std::size_t j = 1; j < errs.size(); ++j) {
      const double floor = 1e-10 * std::max(1.0, scales[j]);
      if (errs[j] > errs[j - 1] && errs[j] > floor) mono = false;
    }
    if (mono) ++monotone;
    fam_json[fam.name] = {{"levels", levels}, {"nonincreasing", mono}};
    lines << "  " << fam.name << ": max_err " << format_double(errs.front())
          << " -> " << format_double(errs.back())
          << (mono ? " (nonincreasing)" : " (NOT nonincreasing)") << "\n";
  }
  MethodOutput out;
  out.results = {{"families", fam_json},
                 {"monotone_families", monotone},
                 {"n_families", static_cast<int>(families.size())},
                 {"roundoff_floor", 1e-10}};
  out.csvs.emplace_back("ito.csv", csv);
  std::ostringstream s;
  s << "instance " << inst.name
    << ": pathwise change-of-variables check under step doubling\n"
    << "  " << n_paths << " paths, steps " << base_steps << " to " << finest
    << ", shared noise across levels\n"
    << lines.str() << "  nonincreasing families: " << monotone << " / "
    << families.size() << "\n";
  out.summary = s.str();
  return out;
}

MethodOutput execute(const Instance& inst, const std::string& method,
                     const json& numerics, std::uint64_t seed) {
  if (method == "tree") return run_tree(inst, numerics);
  if (method == "lsmc") return run_lsmc(inst, numerics, seed);
  if (method == "residual") return run_residual(inst, numerics, seed);
  if (method == "dpp_check") return run_dpp_check(inst, numerics);
  if (method == "isaacs") return run_isaacs(inst, numerics, seed);
  return run_ito_verify(inst, numerics, seed);
}

// ---------------------------------------------------------------- artifacts

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex16(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string utc_now_iso() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

}  // namespace

RunResult run_experiment(const json& config,
                         const std::string& output_root_override) {
  RunResult res;
  try {
    const ParsedConfig p = parse_config(config);
    const Instance inst = make_instance(p.instance_name, p.instance_params);
    const json semantic = {
        {"instance", {{"name", inst.name}, {"params", inst.params}}},
        {"method", p.method},
        {"seed", p.seed},
        {"numerics", p.numerics}};
    const std::string root =
        output_root_override.empty() ? p.out_dir : output_root_override;

    const auto t_start = std::chrono::steady_clock::now();
    const MethodOutput mo = execute(inst, p.method, p.numerics, p.seed);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      t_start)
            .count();

    const std::string dir_name = "run-" + hex16(fnv1a64(semantic.dump()));
    const fs::path run_dir = fs::path(root) / dir_name;
    fs::create_directories(run_dir);

    const json report = {{"config", semantic}, {"results", mo.results}};
    write_file(run_dir / "config.json", semantic.dump(2) + "\n");
    write_file(run_dir / "report.json", report.dump(2) + "\n");
    write_file(run_dir / "summary.txt", mo.summary);
    for (const auto& [name, bytes] : mo.csvs)
      write_file(run_dir / name, bytes);
    const json meta = {{"written_utc", utc_now_iso()},
                       {"duration_seconds", secs},
                       {"threads", max_threads()}};
    write_file(run_dir / "meta.json", meta.dump(2) + "\n");

    const fs::path ledger = fs::path(root) / "ledger.csv";
    const bool existed = fs::exists(ledger);
    std::ofstream led(ledger, std::ios::app);
    if (!existed) led << "utc,run_dir,instance,method,seed\n";
    led << utc_now_iso() << ',' << dir_name << ',' << inst.name << ','
        << p.method << ',' << p.seed << '\n';

    res.exit_code = 0;
    res.run_dir = run_dir.string();
    res.report = report;
    res.message = mo.summary + "artifacts: " + run_dir.string();
  } catch (const std::invalid_argument& e) {
    res.exit_code = 2;
    res.message = e.what();
  } catch (const BudgetExceeded& e) {
    res.exit_code = 3;
    res.message = e.what();
  } catch (const NumericalFailure& e) {
    res.exit_code = 4;
    res.message = e.what();
  } catch (const std::exception& e) {
    res.exit_code = 1;
    res.message = e.what();
  }
  return res;
}

RunResult run_experiment_file(const std::string& config_path,
                              const std::string& output_root_override) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    RunResult res;
    res.exit_code = 2;
    res.message = "config: cannot read file '" + config_path + "'";
    return res;
  }
  json config;
  try {
    in >> config;
  } catch (const std::exception& e) {
    RunResult res;
    res.exit_code = 2;
    res.message = std::string("config: parse error: ") + e.what();
    return res;
  }
  return run_experiment(config, output_root_override);
}

std::string catalog_text() {
  std::ostringstream s;
  for (const auto& entry : catalog()) {
    s << entry.name << "\n  " << entry.summary << "\n  parameters:";
    bool first = true;
    for (const auto& [key, value] : entry.defaults.items()) {
      s << (first ? " " : ", ") << key << "=" << value.dump();
      first = false;
    }
    s << "\n";
  }
  return s.str();
}

nlohmann::json catalog_json() {
  json out = json::array();
  for (const auto& entry : catalog())
    out.push_back({{"name", entry.name},
                   {"summary", entry.summary},
                   {"defaults", entry.defaults}});
  return out;
}

}  // namespace szsdg
