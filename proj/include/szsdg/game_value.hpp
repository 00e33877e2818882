#pragma once

#include <json.hpp>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "szsdg/bsde.hpp"

// Discrete game values on scenario trees: exact backward induction over
// (increment node x control history), an explicit strategy-table enumerator
// used as its oracle, the dynamic-programming consistency check, regularity
// probes, and Monte-Carlo minimax over finite feedback-rule families.
//
// Information pattern: the first player (controls u, minimises) responds to
// the second player's current move in the lower value; the roles flip for
// the upper value.  Stagewise this gives
//   lower: max over v of min over u,     upper: min over u of max over v.

namespace szsdg {

struct GameGridSpec {
  int n_steps = 1;
  // Leaf-work budget for backward induction: (|U| * |V| * branching)^n_steps.
  std::uint64_t work_budget = 10'000'000;
  // Strategy-table budget for the brute-force oracle: tables(own) * tables(opp).
  std::uint64_t table_budget = 2'000'000;
};

// Response strategy on the discretised game.  Entry (k, node, hist) is an
// own-grid index; `node` is the increment-history index at depth k and
// `hist` encodes the opponent's grid indices at steps 0..k in base
// `opp_grid` (most recent move in the lowest digit... highest; see encode).
// Nonanticipativity is structural: entries cannot reference moves after k.
struct StrategyMap {
  int side = 0;  // 0: u responds to v (lower game); 1: v responds to u
  int n_steps = 0;
  int branching = 2;
  int own_grid = 1;
  int opp_grid = 1;
  std::vector<std::vector<std::vector<int>>> table;  // [k][node][hist]

  static std::size_t encode(std::size_t prev_hist, int opp_move, int opp_grid) {
    return prev_hist * static_cast<std::size_t>(opp_grid) +
           static_cast<std::size_t>(opp_move);
  }
  int respond(int k, std::size_t node, std::size_t hist) const;
  bool well_formed() const;  // shape + range of every entry
};

struct ValueEstimate {
  double value = 0.0;
  double std_err = 0.0;       // zero / ignored for tree_exact
  std::string method;         // "tree_exact" or "lsmc"
  std::string flag;           // "backward_induction" | "brute_force" | ""
  nlohmann::json metadata;
};

// Exact lower/upper values over finite control grids on the binomial tree.
// z0, w0 are the control histories on [0, t]; they must end exactly at
// initial.t_end().  With brute_force the optimal response strategy is also
// returned when `strategy` is non-null.
ValueEstimate lower_value_tree(const GameCoefficients& c, const Path& initial,
                               const CadlagPath& z0, const CadlagPath& w0,
                               const std::vector<Eigen::VectorXd>& u_grid,
                               const std::vector<Eigen::VectorXd>& v_grid,
                               double t1, const GameGridSpec& spec,
                               bool brute_force = false,
                               StrategyMap* strategy = nullptr);

ValueEstimate upper_value_tree(const GameCoefficients& c, const Path& initial,
                               const CadlagPath& z0, const CadlagPath& w0,
                               const std::vector<Eigen::VectorXd>& u_grid,
                               const std::vector<Eigen::VectorXd>& v_grid,
                               double t1, const GameGridSpec& spec,
                               bool brute_force = false,
                               StrategyMap* strategy = nullptr);

// Objective of an explicit play: `response` answers the opponent's moves,
// `openloop[k][node]` is the opponent's adapted move at each tree node.
// Returns the root backward value of that control assignment.
double play_game_tree(const GameCoefficients& c, const Path& initial,
                      const CadlagPath& z0, const CadlagPath& w0,
                      const std::vector<Eigen::VectorXd>& u_grid,
                      const std::vector<Eigen::VectorXd>& v_grid, double t1,
                      int n_steps, const StrategyMap& response,
                      const std::vector<std::vector<int>>& openloop);

// ---------------------------------------------------------------------- DPP

struct DppReport {
  int split_level = 0;
  double lower_lhs = 0.0, lower_rhs = 0.0, lower_gap = 0.0;
  double upper_lhs = 0.0, upper_rhs = 0.0, upper_gap = 0.0;
  nlohmann::json to_json() const;
};

// LHS: value over [t, T].  RHS: the same stagewise minimax on [t, t_split],
// with the value functional re-solved from scratch at every depth-split node
// (fresh state/control histories) as terminal data.
DppReport check_dpp(const GameCoefficients& c, const Path& initial,
                    const CadlagPath& z0, const CadlagPath& w0,
                    const std::vector<Eigen::VectorXd>& u_grid,
                    const std::vector<Eigen::VectorXd>& v_grid, double t1,
                    const GameGridSpec& spec, int split_level);

// ----------------------------------------------------------- regularity probe

struct RegularityProbe {
  struct Row {
    double scale = 0.0;     // perturbation size multiplier
    double d_input = 0.0;   // d_infty(base, perturbed)
    double dv_lower = 0.0;  // |V_lower(perturbed) - V_lower(base)|
    double dv_upper = 0.0;
    double ratio_lower = 0.0;  // dv / d_input
    double ratio_upper = 0.0;
  };
  double base_lower = 0.0, base_upper = 0.0;
  std::vector<Row> rows;
  nlohmann::json to_json() const;
};

// Perturbs the initial path by scale * direction (shared grid) and reports
// value-difference-to-input-distance ratios per scale.
RegularityProbe value_regularity_probe(
    const GameCoefficients& c, const Path& initial, const CadlagPath& z0,
    const CadlagPath& w0, const std::vector<Eigen::VectorXd>& u_grid,
    const std::vector<Eigen::VectorXd>& v_grid, double t1,
    const GameGridSpec& spec, const Path& direction,
    const std::vector<double>& scales);

// ----------------------------------------------------------------- LSMC game

// One feedback rule: control value from the current time and state prefix.
struct FeedbackRule {
  std::string name;
  std::function<Eigen::VectorXd(double, const Path&)> eval;
};

// Monte-Carlo minimax restricted to finite rule families under common random
// numbers.  The lower estimate is min over u-rules of max over v-rules of
// the estimated objective; the upper estimate flips the order.  Both are
// family-restricted bounds, reported with the full objective matrix.
ValueEstimate lower_value_lsmc(const GameCoefficients& c, const Path& initial,
                               const CadlagPath& z0, const CadlagPath& w0,
                               const std::vector<FeedbackRule>& u_rules,
                               const std::vector<FeedbackRule>& v_rules,
                               double t1, int n_paths, int n_steps,
                               std::uint64_t seed, const BasisSpec& basis = {});

ValueEstimate upper_value_lsmc(const GameCoefficients& c, const Path& initial,
                               const CadlagPath& z0, const CadlagPath& w0,
                               const std::vector<FeedbackRule>& u_rules,
                               const std::vector<FeedbackRule>& v_rules,
                               double t1, int n_paths, int n_steps,
                               std::uint64_t seed, const BasisSpec& basis = {});

}  // namespace szsdg
