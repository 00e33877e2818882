#include "szsdg/game_value.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "szsdg/errors.hpp"
#include "szsdg/threads.hpp"

namespace szsdg {

namespace {

std::uint64_t saturating_pow(std::uint64_t base, std::uint64_t exp,
                             std::uint64_t cap) {
  std::uint64_t r = 1;
  for (std::uint64_t i = 0; i < exp; ++i) {
    if (base == 0) return 0;
    if (r > cap / base) return cap + 1;
    r *= base;
  }
  return r;
}

struct CtrlUndo {
  bool appended = false;
  double old_t_end = 0.0;
  Eigen::VectorXd old_value;
};

// Extend a control history with the move chosen at time t (append a knot, or
// overwrite the value if a knot already sits exactly at t — concatenation
// replaces the value at the junction).
CtrlUndo push_ctrl(CadlagPath& z, double t, const Eigen::VectorXd& val) {
  CtrlUndo undo;
  undo.old_t_end = z.t_end();
  double back = z.grid().back();
  if (back < t) {
    z.append(t, val);
    undo.appended = true;
  } else if (back == t) {
    undo.old_value = z.point(z.size() - 1);
    z.replace_terminal(val);
  } else {
    throw std::logic_error("game: control history extends past the move time");
  }
  return undo;
}

void pop_ctrl(CadlagPath& z, const CtrlUndo& undo) {
  if (undo.appended) {
    z.pop();
    z.set_t_end(undo.old_t_end);
  } else {
    z.replace_terminal(undo.old_value);
  }
}

// Move supplier for explicit play: given (step, node, opponent history so
// far) produce grid indices for both players and the updated history code.
struct Moves {
  int ui = 0, vi = 0;
  std::size_t hist_next = 0;
};
using MovePolicy = std::function<Moves(int, std::size_t, std::size_t)>;

// Backward game solver over full (increment, control) histories.  The same
// recursion serves backward induction (stagewise minimax), explicit play
// under a MovePolicy, and DPP right-hand sides via stop_value.
class TreeGame {
 public:
  const GameCoefficients* c = nullptr;
  const std::vector<Eigen::VectorXd>* u_grid = nullptr;
  const std::vector<Eigen::VectorXd>* v_grid = nullptr;
  double t0 = 0.0, t1 = 1.0, dt = 1.0;
  int K = 1;
  int branching = 2;
  std::vector<Eigen::VectorXd> incs;
  double prob = 0.5;
  bool lower = true;  // stagewise max_v min_u; false: min_u max_v
  bool parallel_root = true;
  int stop_level = -1;
  std::function<double(const Path&, const CadlagPath&, const CadlagPath&)>
      stop_value;
  MovePolicy policy;  // when set, rec() follows it instead of optimizing

  Path X;
  CadlagPath Z, W;

  double time_at(int k) const { return k == K ? t1 : t0 + k * dt; }

  double solve() {
    if (K == 0 || policy || !parallel_root) return rec(0);
    // The root stage parallelizes over control pairs; each pair's subtree is
    // evaluated serially in an independent copy, and the minimax reduction
    // runs in fixed index order, so values are thread-count independent.
    const auto& outer = lower ? *v_grid : *u_grid;
    const auto& inner = lower ? *u_grid : *v_grid;
    std::vector<double> vals(outer.size() * inner.size());
    parallel_for(vals.size(), [&](std::size_t p) {
      std::size_t oi = p / inner.size(), ii = p % inner.size();
      TreeGame g(*this);
      g.parallel_root = false;
      double tk = time_at(0);
      CadlagPath& opath = lower ? g.W : g.Z;
      CadlagPath& ipath = lower ? g.Z : g.W;
      CtrlUndo uo = push_ctrl(opath, tk, outer[oi]);
      CtrlUndo ui = push_ctrl(ipath, tk, inner[ii]);
      vals[p] = g.one_step(0);
      pop_ctrl(ipath, ui);
      pop_ctrl(opath, uo);
    });
    double best_outer = 0.0;
    for (std::size_t oi = 0; oi < outer.size(); ++oi) {
      double best_inner = 0.0;
      for (std::size_t ii = 0; ii < inner.size(); ++ii) {
        double y = vals[oi * inner.size() + ii];
        if (ii == 0 || (lower ? y < best_inner : y > best_inner))
          best_inner = y;
      }
      if (oi == 0 || (lower ? best_inner > best_outer : best_inner < best_outer))
        best_outer = best_inner;
    }
    return best_outer;
  }

  double rec(int k) {
    if (k == stop_level && stop_value) {
      // The control histories were last extended at the previous stage; the
      // handed-off prefixes live on [0, t_k] (right-constant tail).
      double tk = time_at(k);
      if (Z.t_end() < tk || W.t_end() < tk) {
        CadlagPath z2 = Z, w2 = W;
        z2.set_t_end(tk);
        w2.set_t_end(tk);
        return stop_value(X, z2, w2);
      }
      return stop_value(X, Z, W);
    }
    if (k == K) return c->terminal_cost(X);
    if (policy) {
      Moves mv = policy(k, cur_node_, cur_hist_);
      double tk = time_at(k);
      CtrlUndo uz = push_ctrl(Z, tk, (*u_grid)[static_cast<std::size_t>(mv.ui)]);
      CtrlUndo uw = push_ctrl(W, tk, (*v_grid)[static_cast<std::size_t>(mv.vi)]);
      std::size_t saved = cur_hist_;
      cur_hist_ = mv.hist_next;
      double y = one_step(k);
      cur_hist_ = saved;
      pop_ctrl(W, uw);
      pop_ctrl(Z, uz);
      return y;
    }
    return stage(k);
  }

 private:
  std::size_t cur_node_ = 0, cur_hist_ = 0;

  double one_step(int k) {
    Eigen::VectorXd f = c->drift(X, Z, W);
    Eigen::MatrixXd sg = c->diffusion(X, Z, W);
    Eigen::VectorXd x = X.terminal();
    double tk1 = time_at(k + 1);
    double ybar = 0.0;
    Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(c->noise_dim);
    for (int b = 0; b < branching; ++b) {
      std::size_t saved = cur_node_;
      cur_node_ = cur_node_ * static_cast<std::size_t>(branching) +
                  static_cast<std::size_t>(b);
      X.append(tk1, x + f * dt + sg * incs[static_cast<std::size_t>(b)]);
      double yb = rec(k + 1);
      X.pop();
      cur_node_ = saved;
      ybar += prob * yb;
      q += (prob * yb / dt) * incs[static_cast<std::size_t>(b)].transpose();
    }
    return implicit_step(*c, X, Z, W, ybar, q, dt);
  }

  double stage(int k) {
    const auto& outer = lower ? *v_grid : *u_grid;
    const auto& inner = lower ? *u_grid : *v_grid;
    CadlagPath& opath = lower ? W : Z;
    CadlagPath& ipath = lower ? Z : W;
    double tk = time_at(k);
    double best_outer = 0.0;
    for (std::size_t oi = 0; oi < outer.size(); ++oi) {
      CtrlUndo uo = push_ctrl(opath, tk, outer[oi]);
      double best_inner = 0.0;
      for (std::size_t ii = 0; ii < inner.size(); ++ii) {
        CtrlUndo ui = push_ctrl(ipath, tk, inner[ii]);
        double y = one_step(k);
        pop_ctrl(ipath, ui);
        if (ii == 0 || (lower ? y < best_inner : y > best_inner))
          best_inner = y;
      }
      pop_ctrl(opath, uo);
      if (oi == 0 || (lower ? best_inner > best_outer : best_inner < best_outer))
        best_outer = best_inner;
    }
    return best_outer;
  }
};

TreeGame make_game(const GameCoefficients& c, const Path& initial,
                   const CadlagPath& z0, const CadlagPath& w0,
                   const std::vector<Eigen::VectorXd>& u_grid,
                   const std::vector<Eigen::VectorXd>& v_grid, double t1,
                   int n_steps, std::uint64_t work_budget, bool lower) {
  if (n_steps < 0) throw std::invalid_argument("game: n_steps must be >= 0");
  double t0 = initial.t_end();
  if (n_steps > 0 && !(t1 > t0))
    throw std::invalid_argument("game: t1 must exceed the initial time");
  if (z0.t_end() != t0 || w0.t_end() != t0)
    throw std::invalid_argument(
        "game: control histories must end exactly at the initial time");
  if (initial.dim() != c.state_dim)
    throw std::invalid_argument("game: initial path dim != state_dim");
  if (n_steps > 0 && (u_grid.empty() || v_grid.empty()))
    throw std::invalid_argument("game: control grids must be nonempty");
  for (const auto& u : u_grid)
    if (u.size() != c.u_dim)
      throw std::invalid_argument("game: u grid point dim mismatch");
  for (const auto& v : v_grid)
    if (v.size() != c.v_dim)
      throw std::invalid_argument("game: v grid point dim mismatch");

  TreeGame g;
  g.c = &c;
  g.u_grid = &u_grid;
  g.v_grid = &v_grid;
  g.t0 = t0;
  g.t1 = n_steps == 0 ? t0 : t1;
  g.K = n_steps;
  g.dt = n_steps == 0 ? 1.0 : (t1 - t0) / n_steps;
  g.branching = 1 << c.noise_dim;
  g.incs = binomial_increments(c.noise_dim, g.dt);
  g.prob = 1.0 / g.branching;
  g.lower = lower;
  g.X = initial;
  g.Z = z0;
  g.W = w0;

  std::uint64_t per_step =
      static_cast<std::uint64_t>(u_grid.size()) * v_grid.size() *
      static_cast<std::uint64_t>(g.branching);
  std::uint64_t leaves =
      saturating_pow(per_step, static_cast<std::uint64_t>(n_steps),
                     work_budget);
  if (leaves > work_budget) {
    std::ostringstream msg;
    msg << "game: enumeration budget exceeded: (" << u_grid.size() << " * "
        << v_grid.size() << " * " << g.branching << ")^" << n_steps << " > "
        << work_budget << "; reduce the grids or the step count";
    throw BudgetExceeded(msg.str());
  }
  return g;
}

// ------------------------------------------------------- brute-force oracle

struct BruteForce {
  double value = 0.0;
  StrategyMap strategy;
  std::uint64_t n_response_tables = 0, n_openloop_tables = 0;
};

// Explicit enumeration of response-strategy tables against opponent adapted
// controls (one move per tree node).  `lower` selects which player responds.
BruteForce brute_force_value(TreeGame& g, std::uint64_t table_budget) {
  const int K = g.K;
  const std::size_t b = static_cast<std::size_t>(g.branching);
  const std::size_t g_resp =
      g.lower ? g.u_grid->size() : g.v_grid->size();
  const std::size_t g_open =
      g.lower ? g.v_grid->size() : g.u_grid->size();

  // Entry offsets.  Open-loop tables: one digit per (step, node).  Response
  // tables: one digit per (step, node, opponent history of length k+1).
  std::vector<std::size_t> nodes_at(static_cast<std::size_t>(K));
  std::vector<std::size_t> open_off(static_cast<std::size_t>(K) + 1, 0);
  std::vector<std::size_t> resp_off(static_cast<std::size_t>(K) + 1, 0);
  std::vector<std::size_t> hist_count(static_cast<std::size_t>(K));
  {
    std::size_t nodes = 1, hists = 1;
    for (int k = 0; k < K; ++k) {
      nodes_at[static_cast<std::size_t>(k)] = nodes;
      hists *= g_open;  // histories of length k+1
      hist_count[static_cast<std::size_t>(k)] = hists;
      open_off[static_cast<std::size_t>(k) + 1] =
          open_off[static_cast<std::size_t>(k)] + nodes;
      resp_off[static_cast<std::size_t>(k) + 1] =
          resp_off[static_cast<std::size_t>(k)] + nodes * hists;
      nodes *= b;
    }
  }
  const std::size_t e_open = open_off[static_cast<std::size_t>(K)];
  const std::size_t e_resp = resp_off[static_cast<std::size_t>(K)];

  std::uint64_t n_open = saturating_pow(g_open, e_open, table_budget);
  std::uint64_t n_resp = saturating_pow(g_resp, e_resp, table_budget);
  if (n_open > table_budget || n_resp > table_budget ||
      (n_open != 0 && n_resp > table_budget / n_open)) {
    std::ostringstream msg;
    msg << "game: brute-force table budget exceeded: " << n_resp
        << " response tables x " << n_open << " open-loop tables > "
        << table_budget << "; reduce the grids or the step count";
    throw BudgetExceeded(msg.str());
  }

  auto decode = [](std::uint64_t code, std::size_t base, std::size_t len,
                   std::vector<int>& digits) {
    digits.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
      digits[i] = static_cast<int>(code % base);
      code /= base;
    }
  };

  // J(response-table, open-loop-table): inner aggregation over the opponent's
  // open-loop tables, outer optimization over response tables, both in
  // increasing code order with strict improvement (first optimum wins).
  std::vector<double> resp_scores(static_cast<std::size_t>(n_resp));
  parallel_for(static_cast<std::size_t>(n_resp), [&](std::size_t r) {
    TreeGame game(g);
    game.parallel_root = false;
    std::vector<int> rdig, odig;
    decode(r, g_resp, e_resp, rdig);
    double agg = 0.0;
    for (std::uint64_t o = 0; o < n_open; ++o) {
      decode(o, g_open, e_open, odig);
      game.policy = [&](int k, std::size_t node, std::size_t hist) {
        Moves mv;
        std::size_t ku = static_cast<std::size_t>(k);
        int open_move = odig[open_off[ku] + node];
        std::size_t h = StrategyMap::encode(hist, open_move,
                                            static_cast<int>(g_open));
        int resp_move =
            rdig[resp_off[ku] + node * hist_count[ku] + h];
        mv.hist_next = h;
        if (g.lower) {
          mv.ui = resp_move;
          mv.vi = open_move;
        } else {
          mv.ui = open_move;
          mv.vi = resp_move;
        }
        return mv;
      };
      double j = game.rec(0);
      // lower: opponent (v) maximizes; upper: opponent (u) minimizes.
      if (o == 0 || (g.lower ? j > agg : j < agg)) agg = j;
    }
    resp_scores[r] = agg;
  });

  BruteForce out;
  out.n_response_tables = n_resp;
  out.n_openloop_tables = n_open;
  std::uint64_t best_r = 0;
  for (std::uint64_t r = 0; r < n_resp; ++r) {
    double s = resp_scores[static_cast<std::size_t>(r)];
    // lower: responder (u) minimizes its worst case; upper: v maximizes.
    if (r == 0 || (g.lower ? s < out.value : s > out.value)) {
      out.value = s;
      best_r = r;
    }
  }

  std::vector<int> best(e_resp);
  decode(best_r, g_resp, e_resp, best);
  StrategyMap& sm = out.strategy;
  sm.side = g.lower ? 0 : 1;
  sm.n_steps = K;
  sm.branching = g.branching;
  sm.own_grid = static_cast<int>(g_resp);
  sm.opp_grid = static_cast<int>(g_open);
  sm.table.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    std::size_t ku = static_cast<std::size_t>(k);
    sm.table[ku].resize(nodes_at[ku]);
    for (std::size_t node = 0; node < nodes_at[ku]; ++node) {
      sm.table[ku][node].resize(hist_count[ku]);
      for (std::size_t h = 0; h < hist_count[ku]; ++h)
        sm.table[ku][node][h] =
            best[resp_off[ku] + node * hist_count[ku] + h];
    }
  }
  return out;
}

ValueEstimate value_tree_impl(const GameCoefficients& c, const Path& initial,
                              const CadlagPath& z0, const CadlagPath& w0,
                              const std::vector<Eigen::VectorXd>& u_grid,
                              const std::vector<Eigen::VectorXd>& v_grid,
                              double t1, const GameGridSpec& spec, bool lower,
                              bool brute_force, StrategyMap* strategy,
                              bool parallel_root = true) {
  TreeGame g = make_game(c, initial, z0, w0, u_grid, v_grid, t1, spec.n_steps,
                         spec.work_budget, lower);
  g.parallel_root = parallel_root;
  ValueEstimate est;
  est.method = "tree_exact";
  est.metadata["n_steps"] = spec.n_steps;
  est.metadata["u_grid_size"] = u_grid.size();
  est.metadata["v_grid_size"] = v_grid.size();
  est.metadata["branching"] = g.branching;
  est.metadata["t0"] = g.t0;
  est.metadata["t1"] = g.t1;
  if (brute_force) {
    BruteForce bf = brute_force_value(g, spec.table_budget);
    est.value = bf.value;
    est.flag = "brute_force";
    est.metadata["n_response_tables"] = bf.n_response_tables;
    est.metadata["n_openloop_tables"] = bf.n_openloop_tables;
    if (strategy) *strategy = std::move(bf.strategy);
  } else {
    est.value = g.solve();
    est.flag = "backward_induction";
    if (strategy) *strategy = StrategyMap{};
  }
  if (!std::isfinite(est.value))
    throw NumericalFailure("game: non-finite value");
  return est;
}

}  // namespace

int StrategyMap::respond(int k, std::size_t node, std::size_t hist) const {
  return table.at(static_cast<std::size_t>(k)).at(node).at(hist);
}

bool StrategyMap::well_formed() const {
  if (static_cast<int>(table.size()) != n_steps) return false;
  std::size_t nodes = 1, hists = 1;
  for (int k = 0; k < n_steps; ++k) {
    const auto& level = table[static_cast<std::size_t>(k)];
    hists *= static_cast<std::size_t>(opp_grid);
    if (level.size() != nodes) return false;
    for (const auto& per_node : level) {
      if (per_node.size() != hists) return false;
      for (int e : per_node)
        if (e < 0 || e >= own_grid) return false;
    }
    nodes *= static_cast<std::size_t>(branching);
  }
  return true;
}

ValueEstimate lower_value_tree(const GameCoefficients& c, const Path& initial,
                               const CadlagPath& z0, const CadlagPath& w0,
                               const std::vector<Eigen::VectorXd>& u_grid,
                               const std::vector<Eigen::VectorXd>& v_grid,
                               double t1, const GameGridSpec& spec,
                               bool brute_force, StrategyMap* strategy) {
  return value_tree_impl(c, initial, z0, w0, u_grid, v_grid, t1, spec, true,
                         brute_force, strategy);
}

ValueEstimate upper_value_tree(const GameCoefficients& c, const Path& initial,
                               const CadlagPath& z0, const CadlagPath& w0,
                               const std::vector<Eigen::VectorXd>& u_grid,
                               const std::vector<Eigen::VectorXd>& v_grid,
                               double t1, const GameGridSpec& spec,
                               bool brute_force, StrategyMap* strategy) {
  return value_tree_impl(c, initial, z0, w0, u_grid, v_grid, t1, spec, false,
                         brute_force, strategy);
}

double play_game_tree(const GameCoefficients& c, const Path& initial,
                      const CadlagPath& z0, const CadlagPath& w0,
                      const std::vector<Eigen::VectorXd>& u_grid,
                      const std::vector<Eigen::VectorXd>& v_grid, double t1,
                      int n_steps, const StrategyMap& response,
                      const std::vector<std::vector<int>>& openloop) {
  if (!response.well_formed())
    throw std::invalid_argument("play: malformed strategy table");
  if (response.n_steps != n_steps)
    throw std::invalid_argument("play: strategy step count mismatch");
  GameGridSpec spec;
  spec.n_steps = n_steps;
  TreeGame g = make_game(c, initial, z0, w0, u_grid, v_grid, t1, n_steps,
                         spec.work_budget, response.side == 0);
  if (static_cast<int>(openloop.size()) != n_steps)
    throw std::invalid_argument("play: open-loop table step count mismatch");
  const int opp = response.opp_grid;
  g.policy = [&](int k, std::size_t node, std::size_t hist) {
    Moves mv;
    int open_move = openloop.at(static_cast<std::size_t>(k)).at(node);
    if (open_move < 0 || open_move >= opp)
      throw std::invalid_argument("play: open-loop move out of range");
    std::size_t h = StrategyMap::encode(hist, open_move, opp);
    int resp_move = response.respond(k, node, h);
    mv.hist_next = h;
    if (response.side == 0) {
      mv.ui = resp_move;
      mv.vi = open_move;
    } else {
      mv.ui = open_move;
      mv.vi = resp_move;
    }
    return mv;
  };
  return g.rec(0);
}

nlohmann::json DppReport::to_json() const {
  nlohmann::json j;
  j["split_level"] = split_level;
  j["lower"] = {{"lhs", lower_lhs}, {"rhs", lower_rhs}, {"gap", lower_gap}};
  j["upper"] = {{"lhs", upper_lhs}, {"rhs", upper_rhs}, {"gap", upper_gap}};
  return j;
}

DppReport check_dpp(const GameCoefficients& c, const Path& initial,
                    const CadlagPath& z0, const CadlagPath& w0,
                    const std::vector<Eigen::VectorXd>& u_grid,
                    const std::vector<Eigen::VectorXd>& v_grid, double t1,
                    const GameGridSpec& spec, int split_level) {
  if (split_level < 0 || split_level > spec.n_steps)
    throw std::invalid_argument("dpp: split level outside [0, n_steps]");
  DppReport rep;
  rep.split_level = split_level;

  GameGridSpec tail = spec;
  tail.n_steps = spec.n_steps - split_level;

  for (bool lower : {true, false}) {
    double lhs = value_tree_impl(c, initial, z0, w0, u_grid, v_grid, t1, spec,
                                 lower, false, nullptr)
                     .value;
    TreeGame g = make_game(c, initial, z0, w0, u_grid, v_grid, t1, split_level,
                           spec.work_budget, lower);
    // Value on [t, t_split]; terminal data = the value functional re-solved
    // from scratch at every split node with its realized histories.
    double dt_full = spec.n_steps == 0 ? 1.0 : (t1 - initial.t_end()) / spec.n_steps;
    g.dt = dt_full;
    g.incs = binomial_increments(c.noise_dim, dt_full);
    g.t1 = initial.t_end() + split_level * dt_full;
    g.stop_level = split_level;
    g.stop_value = [&](const Path& a, const CadlagPath& z,
                       const CadlagPath& w) {
      return value_tree_impl(c, a, z, w, u_grid, v_grid, t1, tail, lower,
                             false, nullptr, /*parallel_root=*/false)
          .value;
    };
    double rhs = g.solve();
    if (lower) {
      rep.lower_lhs = lhs;
      rep.lower_rhs = rhs;
      rep.lower_gap = std::abs(lhs - rhs);
    } else {
      rep.upper_lhs = lhs;
      rep.upper_rhs = rhs;
      rep.upper_gap = std::abs(lhs - rhs);
    }
  }
  return rep;
}

nlohmann::json RegularityProbe::to_json() const {
  nlohmann::json j;
  j["base_lower"] = base_lower;
  j["base_upper"] = base_upper;
  j["rows"] = nlohmann::json::array();
  for (const Row& r : rows)
    j["rows"].push_back({{"scale", r.scale},
                         {"d_input", r.d_input},
                         {"dv_lower", r.dv_lower},
                         {"dv_upper", r.dv_upper},
                         {"ratio_lower", r.ratio_lower},
                         {"ratio_upper", r.ratio_upper}});
  return j;
}

RegularityProbe value_regularity_probe(
    const GameCoefficients& c, const Path& initial, const CadlagPath& z0,
    const CadlagPath& w0, const std::vector<Eigen::VectorXd>& u_grid,
    const std::vector<Eigen::VectorXd>& v_grid, double t1,
    const GameGridSpec& spec, const Path& direction,
    const std::vector<double>& scales) {
  if (direction.grid() != initial.grid() || direction.dim() != initial.dim())
    throw std::invalid_argument(
        "probe: direction must share the initial path's grid");
  RegularityProbe probe;
  probe.base_lower = lower_value_tree(c, initial, z0, w0, u_grid, v_grid, t1,
                                      spec)
                         .value;
  probe.base_upper = upper_value_tree(c, initial, z0, w0, u_grid, v_grid, t1,
                                      spec)
                         .value;
  for (double s : scales) {
    std::vector<double> vals = initial.raw_values();
    const std::vector<double>& dir = direction.raw_values();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] += s * dir[i];
    Path perturbed(initial.grid(), std::move(vals), initial.dim());
    RegularityProbe::Row row;
    row.scale = s;
    row.d_input = d_infty(initial, perturbed);
    row.dv_lower = std::abs(lower_value_tree(c, perturbed, z0, w0, u_grid,
                                             v_grid, t1, spec)
                                .value -
                            probe.base_lower);
    row.dv_upper = std::abs(upper_value_tree(c, perturbed, z0, w0, u_grid,
                                             v_grid, t1, spec)
                                .value -
                            probe.base_upper);
    row.ratio_lower = row.d_input > 0.0 ? row.dv_lower / row.d_input : 0.0;
    row.ratio_upper = row.d_input > 0.0 ? row.dv_upper / row.d_input : 0.0;
    probe.rows.push_back(row);
  }
  return probe;
}

// ------------------------------------------------------------------ LSMC

namespace {

struct PairEstimate {
  double value = 0.0;
  double std_err = 0.0;
};

// Simulate the controlled system under a pair of feedback rules with common
// random numbers, then evaluate the objective: directly for drivers that
// ignore (y, q), through the regression backward pass otherwise.
PairEstimate estimate_pair(const GameCoefficients& c, const Path& initial,
                           const CadlagPath& z0, const CadlagPath& w0,
                           const FeedbackRule& ru, const FeedbackRule& rv,
                           const BrownianBatch& noise,
                           const BasisSpec& basis) {
  const int n = noise.n_paths();
  const int K = noise.n_steps();
  const double t0 = noise.t0(), t1 = noise.t1();
  const double dt = noise.dt();
  const bool direct = !c.driver_depends_yq;

  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  std::vector<Path> xs;
  std::vector<CadlagPath> us, vs;
  if (!direct) {
    xs.resize(static_cast<std::size_t>(n));
    us.resize(static_cast<std::size_t>(n));
    vs.resize(static_cast<std::size_t>(n));
  }
  const Eigen::RowVectorXd q0 = Eigen::RowVectorXd::Zero(c.noise_dim);

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    Path x = initial;
    CadlagPath up = z0, vp = w0;
    Eigen::VectorXd state = initial.terminal();
    double run = 0.0;
    for (int k = 0; k < K; ++k) {
      double tk = t0 + k * dt;
      double tk1 = (k + 1 == K) ? t1 : t0 + (k + 1) * dt;
      Eigen::VectorXd uk = ru.eval(tk, x);
      Eigen::VectorXd vk = rv.eval(tk, x);
      if (uk.size() != c.u_dim || vk.size() != c.v_dim)
        throw std::invalid_argument("lsmc game: rule output dim mismatch");
      push_ctrl(up, tk, uk);
      push_ctrl(vp, tk, vk);
      if (direct) run += dt * c.driver(x, 0.0, q0, up, vp);
      Eigen::VectorXd f = c.drift(x, up, vp);
      Eigen::MatrixXd sg = c.diffusion(x, up, vp);
      state += f * dt + sg * noise.increment(static_cast<int>(i), k);
      if (!state.allFinite())
        throw NumericalFailure("lsmc game: non-finite state");
      x.append(tk1, state);
    }
    if (direct) {
      acc[i] = run + c.terminal_cost(x);
    } else {
      xs[i] = std::move(x);
      us[i] = std::move(up);
      vs[i] = std::move(vp);
    }
  });

  PairEstimate est;
  if (direct) {
    double mean = std::accumulate(acc.begin(), acc.end(), 0.0) /
                  static_cast<double>(n);
    double var = 0.0;
    for (double a : acc) var += (a - mean) * (a - mean);
    var /= static_cast<double>(std::max(1, n - 1));
    est.value = mean;
    est.std_err = std::sqrt(var / static_cast<double>(n));
  } else {
    auto u_at = [&us](std::size_t i) -> const CadlagPath& { return us[i]; };
    auto v_at = [&vs](std::size_t i) -> const CadlagPath& { return vs[i]; };
    LsmcSolution sol = lsmc_backward(c, xs, u_at, v_at, t0, t1, K, basis,
                                     nullptr, &noise);
    est.value = sol.y0;
    est.std_err = sol.std_err;
  }
  return est;
}

ValueEstimate value_lsmc_impl(const GameCoefficients& c, const Path& initial,
                              const CadlagPath& z0, const CadlagPath& w0,
                              const std::vector<FeedbackRule>& u_rules,
                              const std::vector<FeedbackRule>& v_rules,
                              double t1, int n_paths, int n_steps,
                              std::uint64_t seed, const BasisSpec& basis,
                              bool lower) {
  if (u_rules.empty() || v_rules.empty())
    throw std::invalid_argument("lsmc game: rule families must be nonempty");
  double t0 = initial.t_end();
  if (z0.t_end() != t0 || w0.t_end() != t0)
    throw std::invalid_argument(
        "lsmc game: control histories must end exactly at the initial time");
  BrownianBatch noise(seed, n_paths, n_steps, t0, t1, c.noise_dim);

  const std::size_t nu = u_rules.size(), nv = v_rules.size();
  std::vector<PairEstimate> cells(nu * nv);
  for (std::size_t iu = 0; iu < nu; ++iu)
    for (std::size_t iv = 0; iv < nv; ++iv)
      cells[iu * nv + iv] = estimate_pair(c, initial, z0, w0, u_rules[iu],
                                          v_rules[iv], noise, basis);

  // lower: min over u-rules of max over v-rules; upper: the reverse order.
  std::size_t best_u = 0, best_v = 0;
  double value = 0.0;
  if (lower) {
    for (std::size_t iu = 0; iu < nu; ++iu) {
      std::size_t arg_v = 0;
      double worst = cells[iu * nv].value;
      for (std::size_t iv = 1; iv < nv; ++iv)
        if (cells[iu * nv + iv].value > worst) {
          worst = cells[iu * nv + iv].value;
          arg_v = iv;
        }
      if (iu == 0 || worst < value) {
        value = worst;
        best_u = iu;
        best_v = arg_v;
      }
    }
  } else {
    for (std::size_t iv = 0; iv < nv; ++iv) {
      std::size_t arg_u = 0;
      double worst = cells[iv].value;
      for (std::size_t iu = 1; iu < nu; ++iu)
        if (cells[iu * nv + iv].value < worst) {
          worst = cells[iu * nv + iv].value;
          arg_u = iu;
        }
      if (iv == 0 || worst > value) {
        value = worst;
        best_u = arg_u;
        best_v = iv;
      }
    }
  }

  ValueEstimate est;
  est.value = value;
  est.std_err = cells[best_u * nv + best_v].std_err;
  est.method = "lsmc";
  est.metadata["n_paths"] = n_paths;
  est.metadata["n_steps"] = n_steps;
  est.metadata["seed"] = seed;
  est.metadata["selected_u_rule"] = u_rules[best_u].name;
  est.metadata["selected_v_rule"] = v_rules[best_v].name;
  nlohmann::json matrix = nlohmann::json::array();
  for (std::size_t iu = 0; iu < nu; ++iu) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t iv = 0; iv < nv; ++iv)
      row.push_back({{"value", cells[iu * nv + iv].value},
                     {"std_err", cells[iu * nv + iv].std_err}});
    matrix.push_back(row);
  }
  est.metadata["objective_matrix"] = matrix;
  return est;
}

}  // namespace

ValueEstimate lower_value_lsmc(const GameCoefficients& c, const Path& initial,
                               const CadlagPath& z0, const CadlagPath& w0,
                               const std::vector<FeedbackRule>& u_rules,
                               const std::vector<FeedbackRule>& v_rules,
                               double t1, int n_paths, int n_steps,
                               std::uint64_t seed, const BasisSpec& basis) {
  return value_lsmc_impl(c, initial, z0, w0, u_rules, v_rules, t1, n_paths,
                         n_steps, seed, basis, true);
}

ValueEstimate upper_value_lsmc(const GameCoefficients& c, const Path& initial,
                               const CadlagPath& z0, const CadlagPath& w0,
                               const std::vector<FeedbackRule>& u_rules,
                               const std::vector<FeedbackRule>& v_rules,
                               double t1, int n_paths, int n_steps,
                               std::uint64_t seed, const BasisSpec& basis) {
  return value_lsmc_impl(c, initial, z0, w0, u_rules, v_rules, t1, n_paths,
                         n_steps, seed, basis, false);
}

}  // namespace szsdg
