#pragma once

#include <json.hpp>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "szsdg/dynamics.hpp"

// Backward solvers: an exact solver on binomial scenario trees, a
// regression-based Monte-Carlo solver, the one-step backward operator they
// share, and the induced objective functional.

namespace szsdg {

struct TreeSpec {
  int n_steps = 1;
  std::uint64_t node_budget = 1ull << 20;
};

// Non-recombining tree over tensorised two-point increments (+-sqrt(dt) per
// noise axis, uniform branch probabilities).  Node (k, i) has children
// (k+1, i*branching + j).
class ScenarioTree {
 public:
  double t0 = 0.0, t1 = 1.0;
  int n_steps = 0;
  int noise_dim = 1;
  int branching = 2;
  std::vector<Eigen::VectorXd> branch_inc;
  std::vector<double> branch_prob;
  std::vector<Path> states;  // level-major
  CadlagPath u, v;           // stepped controls used in construction
  std::vector<CadlagPath> u_prefix, v_prefix;  // per level

  double dt() const { return (t1 - t0) / n_steps; }
  double time_at(int level) const {
    return level == n_steps ? t1 : t0 + level * dt();
  }
  std::size_t level_size(int level) const;
  std::size_t level_offset(int level) const;
  const Path& state(int level, std::size_t i) const {
    return states[level_offset(level) + i];
  }
  int level_of_time(double t) const;  // throws off-grid
  nlohmann::json to_json() const;
};

std::vector<Eigen::VectorXd> binomial_increments(int noise_dim, double dt);

ScenarioTree build_tree(const GameCoefficients& c, const Path& initial,
                        const CadlagPath& u, const CadlagPath& v, double t1,
                        const TreeSpec& spec);

struct BsdeSolution {
  std::vector<std::vector<double>> y;              // y[level][node]
  std::vector<std::vector<Eigen::RowVectorXd>> q;  // q[level][node]
  double root_y() const { return y.at(0).at(0); }
  const Eigen::RowVectorXd& root_q() const { return q.at(0).at(0); }
  std::string to_csv() const;  // level,node,time?,y,q0..
};

// One implicit backward step: solves y = ybar + dt * l(x, y, q, u, v) by
// fixed point.  Requires lipschitz_L * dt < 1.
double implicit_step(const GameCoefficients& c, const Path& x,
                     const CadlagPath& u, const CadlagPath& v, double ybar,
                     const Eigen::RowVectorXd& q, double dt);

// Terminal data defaults to the terminal cost of the leaf paths.
BsdeSolution solve_bsde_tree(const ScenarioTree& tree,
                             const GameCoefficients& c,
                             const std::vector<double>* terminal = nullptr);

// Backward operator between two levels: values at `to_level` in, values at
// `from_level` out.  The flow identity (composing adjacent spans) is exact.
std::vector<double> pi_levels(const ScenarioTree& tree,
                              const GameCoefficients& c, int from_level,
                              int to_level, std::vector<double> values);

// Root value of the truncated backward problem on [t0, t_plus_tau] with
// terminal data b evaluated on the depth-(t_plus_tau) states.
double semigroup_pi(const ScenarioTree& tree, const GameCoefficients& c,
                    double t_plus_tau,
                    const std::function<double(const Path&)>& b);

// ------------------------------------------------------------------- LSMC

struct BasisSpec {
  int degree = 2;                // polynomial degree (1 or 2)
  bool terminal_coords = true;   // current state value
  bool running_integral = true;  // left-sum integral of the state
};

struct LsmcSolution {
  double y0 = 0.0;
  double std_err = 0.0;
  int basis_dim = 0;
  int ridge_steps = 0;  // backward steps that needed the ridge fallback
  std::vector<double> y0_samples;  // telescoped per-path contributions
  nlohmann::json metadata;
};

// Backward engine over an arbitrary batch of controlled paths; `u_at(i)` /
// `v_at(i)` expose the controls that produced path i.  The driving
// increments are needed to condition q whenever the driver reads (y, q);
// without them the driver is only ever called with a zero q row, which is
// rejected unless the coefficients declare driver_depends_yq == false.
LsmcSolution lsmc_backward(
    const GameCoefficients& c, const std::vector<Path>& paths,
    const std::function<const CadlagPath&(std::size_t)>& u_at,
    const std::function<const CadlagPath&(std::size_t)>& v_at, double t0,
    double t1, int n_steps, const BasisSpec& basis,
    const std::vector<double>* terminal = nullptr,
    const BrownianBatch* noise = nullptr);

LsmcSolution solve_bsde_lsmc(const GameCoefficients& c,
                             const SimulatedPaths& sim, const BasisSpec& basis,
                             const std::vector<double>* terminal = nullptr);

// ---------------------------------------------------------------- objective

struct ObjectiveValue {
  double value = 0.0;
  double std_err = 0.0;  // zero for the exact tree evaluation
};

ObjectiveValue objective_j_tree(const GameCoefficients& c, const Path& initial,
                                const CadlagPath& u, const CadlagPath& v,
                                double t1, const TreeSpec& spec);

ObjectiveValue objective_j_lsmc(const GameCoefficients& c, const Path& initial,
                                const CadlagPath& u, const CadlagPath& v,
                                double t1, int n_paths, int n_steps,
                                std::uint64_t seed,
                                const BasisSpec& basis = {});

// --------------------------------------------------------------- comparison

// Orders two backward solutions on the same tree after verifying the
// driver/terminal ordering hypothesis node by node (drivers compared at the
// smaller solution's (y, q)).
struct ComparisonReport {
  bool hypothesis_ok = true;
  bool ordered = true;
  double max_hypothesis_violation = 0.0;
  double max_order_violation = 0.0;
  int witness_level = -1;
  long witness_node = -1;
  double slack_scale = 1e-10;
  nlohmann::json to_json() const;
};

ComparisonReport check_comparison(const ScenarioTree& tree,
                                  const GameCoefficients& c1,
                                  const GameCoefficients& c2,
                                  const std::vector<double>* terminal1 = nullptr,
                                  const std::vector<double>* terminal2 = nullptr);

}  // namespace szsdg
