#include "szsdg/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "szsdg/errors.hpp"
#include "szsdg/serialize.hpp"
#include "szsdg/threads.hpp"

namespace szsdg {

namespace {

// Piecewise-constant restriction of a control to the tree grid: knots at
// t0, t0+dt, ..., carrying the control's value at each step start.
CadlagPath step_control(const CadlagPath& z, double t0, double dt,
                        int n_steps) {
  std::vector<double> grid, values;
  grid.reserve(n_steps);
  values.reserve(static_cast<std::size_t>(n_steps) * z.dim());
  for (int k = 0; k < n_steps; ++k) {
    double tk = t0 + k * dt;
    grid.push_back(tk);
    Eigen::VectorXd val = z.value_at(tk);
    values.insert(values.end(), val.data(), val.data() + val.size());
  }
  return CadlagPath(std::move(grid), std::move(values), z.dim(),
                    t0 + n_steps * dt);
}

}  // namespace

std::size_t ScenarioTree::level_size(int level) const {
  std::size_t s = 1;
  for (int i = 0; i < level; ++i) s *= static_cast<std::size_t>(branching);
  return s;
}

std::size_t ScenarioTree::level_offset(int level) const {
  std::size_t off = 0, s = 1;
  for (int i = 0; i < level; ++i) {
    off += s;
    s *= static_cast<std::size_t>(branching);
  }
  return off;
}

int ScenarioTree::level_of_time(double t) const {
  double span = t1 - t0;
  double raw = (t - t0) / dt();
  int level = static_cast<int>(std::lround(raw));
  if (level < 0 || level > n_steps ||
      std::abs(t - time_at(level)) > 1e-9 * std::max(1.0, span))
    throw std::invalid_argument("ScenarioTree: time is not on the tree grid");
  return level;
}

nlohmann::json ScenarioTree::to_json() const {
  nlohmann::json j;
  j["t0"] = t0;
  j["t1"] = t1;
  j["n_steps"] = n_steps;
  j["noise_dim"] = noise_dim;
  j["branching"] = branching;
  j["n_nodes"] = states.size();
  return j;
}

std::vector<Eigen::VectorXd> binomial_increments(int noise_dim, double dt) {
  if (noise_dim < 1) throw std::invalid_argument("noise_dim must be >= 1");
  double step = std::sqrt(dt);
  int branching = 1 << noise_dim;
  std::vector<Eigen::VectorXd> incs;
  incs.reserve(branching);
  for (int b = 0; b < branching; ++b) {
    Eigen::VectorXd inc(noise_dim);
    for (int c = 0; c < noise_dim; ++c)
      inc[c] = (b >> c) & 1 ? step : -step;
    incs.push_back(std::move(inc));
  }
  return incs;
}

ScenarioTree build_tree(const GameCoefficients& c, const Path& initial,
                        const CadlagPath& u, const CadlagPath& v, double t1,
                        const TreeSpec& spec) {
  if (spec.n_steps < 1) throw std::invalid_argument("tree: n_steps >= 1");
  double t0 = initial.t_end();
  if (!(t1 > t0)) throw std::invalid_argument("tree: t1 must exceed t0");

  ScenarioTree tree;
  tree.t0 = t0;
  tree.t1 = t1;
  tree.n_steps = spec.n_steps;
  tree.noise_dim = c.noise_dim;
  tree.branching = 1 << c.noise_dim;
  if (tree.branching < 2)
    throw std::invalid_argument("tree: branching must be at least 2");

  std::uint64_t nodes = 0, lvl = 1;
  for (int k = 0; k <= spec.n_steps; ++k) {
    nodes += lvl;
    if (nodes > spec.node_budget)
      throw BudgetExceeded(
          "tree: node budget exceeded; reduce n_steps or raise node_budget");
    lvl *= static_cast<std::uint64_t>(tree.branching);
  }

  double dt = tree.dt();
  tree.branch_inc = binomial_increments(c.noise_dim, dt);
  tree.branch_prob.assign(tree.branch_inc.size(), 1.0 / tree.branching);

  tree.u = step_control(u, t0, dt, spec.n_steps);
  tree.v = step_control(v, t0, dt, spec.n_steps);
  tree.u_prefix.reserve(spec.n_steps);
  tree.v_prefix.reserve(spec.n_steps);
  for (int k = 0; k < spec.n_steps; ++k) {
    tree.u_prefix.push_back(truncate_control(tree.u, tree.time_at(k)));
    tree.v_prefix.push_back(truncate_control(tree.v, tree.time_at(k)));
  }

  tree.states.reserve(nodes);
  tree.states.push_back(initial);
  for (int k = 0; k < spec.n_steps; ++k) {
    std::size_t off = tree.level_offset(k);
    std::size_t count = tree.level_size(k);
    double tk1 = tree.time_at(k + 1);
    for (std::size_t i = 0; i < count; ++i) {
      const Path& parent = tree.states[off + i];
      Eigen::VectorXd x = parent.terminal();
      Eigen::VectorXd f =
          c.drift(parent, tree.u_prefix[k], tree.v_prefix[k]);
      Eigen::MatrixXd sg =
          c.diffusion(parent, tree.u_prefix[k], tree.v_prefix[k]);
      for (int b = 0; b < tree.branching; ++b) {
        Path child = parent;
        child.append(tk1, x + f * dt + sg * tree.branch_inc[b]);
        tree.states.push_back(std::move(child));
      }
    }
  }
  return tree;
}

double implicit_step(const GameCoefficients& c, const Path& x,
                     const CadlagPath& u, const CadlagPath& v, double ybar,
                     const Eigen::RowVectorXd& q, double dt) {
  if (!(c.driver_y_lipschitz * dt < 1.0))
    throw std::invalid_argument(
        "implicit step: requires driver_y_lipschitz * dt < 1; use a smaller "
        "time step");
  double y = ybar;
  for (int it = 0; it < 50; ++it) {
    double y_new = ybar + dt * c.driver(x, y, q, u, v);
    if (std::abs(y_new - y) <= 1e-12 * (1.0 + std::abs(y_new))) return y_new;
    y = y_new;
  }
  throw NumericalFailure("implicit step: fixed point did not converge");
}

BsdeSolution solve_bsde_tree(const ScenarioTree& tree,
                             const GameCoefficients& c,
                             const std::vector<double>* terminal) {
  const int K = tree.n_steps;
  double dt = tree.dt();
  BsdeSolution sol;
  sol.y.resize(K + 1);
  sol.q.resize(K);

  std::size_t n_leaves = tree.level_size(K);
  sol.y[K].resize(n_leaves);
  if (terminal) {
    if (terminal->size() != n_leaves)
      throw std::invalid_argument("terminal data size mismatch");
    sol.y[K] = *terminal;
  } else {
    for (std::size_t i = 0; i < n_leaves; ++i)
      sol.y[K][i] = c.terminal_cost(tree.state(K, i));
  }

  for (int k = K - 1; k >= 0; --k) {
    std::size_t count = tree.level_size(k);
    sol.y[k].resize(count);
    sol.q[k].resize(count);
    const auto& next = sol.y[k + 1];
    for (std::size_t i = 0; i < count; ++i) {
      double ybar = 0.0;
      Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(tree.noise_dim);
      for (int b = 0; b < tree.branching; ++b) {
        double yb = next[i * tree.branching + b];
        ybar += tree.branch_prob[b] * yb;
        q += tree.branch_prob[b] * yb * tree.branch_inc[b].transpose() / dt;
      }
      sol.q[k][i] = q;
      sol.y[k][i] = implicit_step(c, tree.state(k, i), tree.u_prefix[k],
                                  tree.v_prefix[k], ybar, q, dt);
    }
  }
  return sol;
}

std::string BsdeSolution::to_csv() const {
  std::ostringstream out;
  int noise_dim =
      (q.empty() || q[0].empty()) ? 0 : static_cast<int>(q[0][0].size());
  out << "level,node,y";
  for (int c = 0; c < noise_dim; ++c) out << ",q" << c;
  out << "\n";
  for (std::size_t k = 0; k < y.size(); ++k) {
    for (std::size_t i = 0; i < y[k].size(); ++i) {
      out << k << "," << i << "," << format_double(y[k][i]);
      for (int c = 0; c < noise_dim; ++c)
        out << ","
            << format_double(k < q.size() ? q[k][i][c]
                                          : std::numeric_limits<double>::quiet_NaN());
      out << "\n";
    }
  }
  return out.str();
}

std::vector<double> pi_levels(const ScenarioTree& tree,
                              const GameCoefficients& c, int from_level,
                              int to_level, std::vector<double> values) {
  if (from_level < 0 || to_level > tree.n_steps || from_level > to_level)
    throw std::invalid_argument("pi_levels: invalid level span");
  if (values.size() != tree.level_size(to_level))
    throw std::invalid_argument("pi_levels: data size mismatch");
  double dt = tree.dt();
  for (int k = to_level - 1; k >= from_level; --k) {
    std::size_t count = tree.level_size(k);
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      double ybar = 0.0;
      Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(tree.noise_dim);
      for (int b = 0; b < tree.branching; ++b) {
        double yb = values[i * tree.branching + b];
        ybar += tree.branch_prob[b] * yb;
        q += tree.branch_prob[b] * yb * tree.branch_inc[b].transpose() / dt;
      }
      out[i] = implicit_step(c, tree.state(k, i), tree.u_prefix[k],
                             tree.v_prefix[k], ybar, q, dt);
    }
    values = std::move(out);
  }
  return values;
}

double semigroup_pi(const ScenarioTree& tree, const GameCoefficients& c,
                    double t_plus_tau,
                    const std::function<double(const Path&)>& b) {
  int to_level = tree.level_of_time(t_plus_tau);
  std::vector<double> data(tree.level_size(to_level));
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = b(tree.state(to_level, i));
  return pi_levels(tree, c, 0, to_level, std::move(data)).at(0);
}

// ----------------------------------------------------------------- LSMC

namespace {

struct Basis {
  int state_dim;
  BasisSpec spec;
  int raw_dim;  // state (+ integral) coordinates entering the monomials

  int dim() const {
    int d = 1;  // constant
    if (spec.degree >= 1) d += raw_dim;
    if (spec.degree >= 2) d += raw_dim * (raw_dim + 1) / 2;
    return d;
  }

  // z = (x_t coords, running integral coords) at the current step.
  void fill(const Eigen::VectorXd& z, Eigen::RowVectorXd& row) const {
    int at = 0;
    row[at++] = 1.0;
    if (spec.degree >= 1)
      for (int i = 0; i < raw_dim; ++i) row[at++] = z[i];
    if (spec.degree >= 2)
      for (int i = 0; i < raw_dim; ++i)
        for (int j = i; j < raw_dim; ++j) row[at++] = z[i] * z[j];
  }
};

// Least-squares fit with a logged ridge fallback when the Gram matrix is
// numerically rank-deficient.  Returns fitted values X * beta.
Eigen::VectorXd fit_predict(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            bool* used_ridge) {
  Eigen::MatrixXd G = X.transpose() * X;
  Eigen::VectorXd rhs = X.transpose() * y;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  bool ok = ldlt.info() == Eigen::Success;
  if (ok) {
    Eigen::VectorXd d = ldlt.vectorD();
    double dmax = d.cwiseAbs().maxCoeff();
    if (d.minCoeff() <= 1e-12 * std::max(1.0, dmax)) ok = false;
  }
  if (!ok) {
    if (used_ridge) *used_ridge = true;
    double lambda = 1e-10 * std::max(1.0, G.trace() / G.rows());
    ldlt.compute(G + lambda * Eigen::MatrixXd::Identity(G.rows(), G.cols()));
  }
  return X * ldlt.solve(rhs);
}

}  // namespace

LsmcSolution lsmc_backward(
    const GameCoefficients& c, const std::vector<Path>& paths,
    const std::function<const CadlagPath&(std::size_t)>& u_at,
    const std::function<const CadlagPath&(std::size_t)>& v_at, double t0,
    double t1, int n_steps, const BasisSpec& basis_spec,
    const std::vector<double>* terminal, const BrownianBatch* noise) {
  const std::size_t n = paths.size();
  if (n == 0) throw std::invalid_argument("lsmc: no paths");
  if (n_steps < 1) throw std::invalid_argument("lsmc: n_steps >= 1");
  const double dt = (t1 - t0) / n_steps;
  if (!(c.driver_y_lipschitz * dt < 1.0))
    throw std::invalid_argument(
        "lsmc: requires driver_y_lipschitz * dt < 1; use more time steps");
  if (c.driver_depends_yq && noise == nullptr)
    throw std::invalid_argument(
        "lsmc: a driver that reads (y, q) needs the driving increments to "
        "condition q; pass the noise batch");
  if (noise && (noise->n_paths() != static_cast<int>(n) ||
                noise->n_steps() != n_steps ||
                noise->noise_dim() != c.noise_dim))
    throw std::invalid_argument("lsmc: noise batch shape mismatch");

  // Simulated paths carry the initial history as a prefix; the step grid
  // starts after it.
  if (paths[0].size() < static_cast<std::size_t>(n_steps) + 1)
    throw std::invalid_argument("lsmc: paths shorter than the step grid");
  const std::size_t base =
      paths[0].size() - static_cast<std::size_t>(n_steps) - 1;
  for (const Path& p : paths)
    if (p.size() != paths[0].size())
      throw std::invalid_argument("lsmc: ragged path batch");

  Basis basis;
  basis.state_dim = c.state_dim;
  basis.spec = basis_spec;
  const bool use_state = basis_spec.terminal_coords || !basis_spec.running_integral;
  const bool use_integral = basis_spec.running_integral;
  basis.raw_dim = ((use_state ? 1 : 0) + (use_integral ? 1 : 0)) * c.state_dim;
  const int bd = basis.dim();

  // Left-sum integrals of the state over [t0, t_k], accumulated forward and
  // snapshotted per step.
  std::vector<Eigen::MatrixXd> integral_at;
  if (use_integral) {
    Eigen::MatrixXd acc =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), c.state_dim);
    integral_at.reserve(static_cast<std::size_t>(n_steps));
    for (int k = 0; k < n_steps; ++k) {
      integral_at.push_back(acc);
      for (std::size_t i = 0; i < n; ++i)
        acc.row(static_cast<Eigen::Index>(i)) +=
            dt * paths[i].point(base + static_cast<std::size_t>(k)).transpose();
    }
  }

  auto features_at = [&](int k) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), bd);
    Eigen::VectorXd z(basis.raw_dim);
    Eigen::RowVectorXd row(bd);
    for (std::size_t i = 0; i < n; ++i) {
      int at = 0;
      if (use_state)
        for (int d = 0; d < c.state_dim; ++d)
          z[at++] = paths[i].point(base + static_cast<std::size_t>(k))[d];
      if (use_integral)
        for (int d = 0; d < c.state_dim; ++d)
          z[at++] = integral_at[static_cast<std::size_t>(k)](
              static_cast<Eigen::Index>(i), d);
      basis.fill(z, row);
      X.row(static_cast<Eigen::Index>(i)) = row;
    }
    return X;
  };

  LsmcSolution sol;
  sol.basis_dim = bd;

  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  if (terminal) {
    if (terminal->size() != n)
      throw std::invalid_argument("lsmc: terminal data size mismatch");
    for (std::size_t i = 0; i < n; ++i)
      y[static_cast<Eigen::Index>(i)] = (*terminal)[i];
  } else {
    parallel_for(n, [&](std::size_t i) {
      y[static_cast<Eigen::Index>(i)] = c.terminal_cost(paths[i]);
    });
  }

  std::vector<double> xi(n);
  for (std::size_t i = 0; i < n; ++i) xi[i] = y[static_cast<Eigen::Index>(i)];

  for (int k = n_steps - 1; k >= 0; --k) {
    Eigen::MatrixXd X = features_at(k);
    bool ridge = false;
    Eigen::VectorXd ybar = fit_predict(X, y, &ridge);

    // Conditional q: regress y_{k+1} dB^T / dt on the same features.
    Eigen::MatrixXd qfit;
    if (noise) {
      qfit.resize(static_cast<Eigen::Index>(n), c.noise_dim);
      Eigen::VectorXd target(static_cast<Eigen::Index>(n));
      for (int d = 0; d < c.noise_dim; ++d) {
        for (std::size_t i = 0; i < n; ++i)
          target[static_cast<Eigen::Index>(i)] =
              y[static_cast<Eigen::Index>(i)] *
              noise->increment(static_cast<int>(i), k)[d] / dt;
        bool qridge = false;
        qfit.col(d) = fit_predict(X, target, &qridge);
        ridge = ridge || qridge;
      }
    }

    const double tk = t0 + k * dt;
    Eigen::VectorXd ynew(static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t i) {
      thread_local Path xpref;
      thread_local CadlagPath upref, vpref;
      xpref.assign_prefix_of(paths[i], base + static_cast<std::size_t>(k) + 1);
      upref.assign_truncated(u_at(i), tk);
      vpref.assign_truncated(v_at(i), tk);
      Eigen::RowVectorXd q =
          noise ? Eigen::RowVectorXd(qfit.row(static_cast<Eigen::Index>(i)))
                : Eigen::RowVectorXd::Zero(c.noise_dim);
      double yb = ybar[static_cast<Eigen::Index>(i)];
      double yi = implicit_step(c, xpref, upref, vpref, yb, q, dt);
      ynew[static_cast<Eigen::Index>(i)] = yi;
      xi[i] += yi - yb;  // driver contribution, telescoped
    });
    if (ridge) ++sol.ridge_steps;
    y = std::move(ynew);
  }

  // Features at k = 0 are constant across paths, so the k = 0 regression is
  // the sample mean and every entry of y agrees up to roundoff.
  sol.y0 = y.mean();
  sol.y0_samples = std::move(xi);
  double mean_xi =
      std::accumulate(sol.y0_samples.begin(), sol.y0_samples.end(), 0.0) /
      static_cast<double>(n);
  double var = 0.0;
  for (double w : sol.y0_samples) var += (w - mean_xi) * (w - mean_xi);
  var /= static_cast<double>(std::max<std::size_t>(1, n - 1));
  sol.std_err = std::sqrt(var / static_cast<double>(n));
  sol.metadata["n_paths"] = n;
  sol.metadata["n_steps"] = n_steps;
  sol.metadata["basis_dim"] = bd;
  sol.metadata["ridge_steps"] = sol.ridge_steps;
  sol.metadata["telescoped_mean"] = mean_xi;
  return sol;
}

LsmcSolution solve_bsde_lsmc(const GameCoefficients& c,
                             const SimulatedPaths& sim, const BasisSpec& basis,
                             const std::vector<double>* terminal) {
  auto u_at = [&sim](std::size_t) -> const CadlagPath& { return sim.u; };
  auto v_at = [&sim](std::size_t) -> const CadlagPath& { return sim.v; };
  return lsmc_backward(c, sim.paths, u_at, v_at, sim.t0, sim.t1, sim.n_steps,
                       basis, terminal,
                       sim.noise ? &*sim.noise : nullptr);
}

ObjectiveValue objective_j_tree(const GameCoefficients& c, const Path& initial,
                                const CadlagPath& u, const CadlagPath& v,
                                double t1, const TreeSpec& spec) {
  ScenarioTree tree = build_tree(c, initial, u, v, t1, spec);
  BsdeSolution sol = solve_bsde_tree(tree, c);
  return {sol.root_y(), 0.0};
}

ObjectiveValue objective_j_lsmc(const GameCoefficients& c, const Path& initial,
                                const CadlagPath& u, const CadlagPath& v,
                                double t1, int n_paths, int n_steps,
                                std::uint64_t seed, const BasisSpec& basis) {
  BrownianBatch noise(seed, n_paths, n_steps, initial.t_end(), t1,
                      c.noise_dim);
  SimulatedPaths sim = simulate_sde(c, initial, u, v, noise);
  LsmcSolution sol = solve_bsde_lsmc(c, sim, basis);
  return {sol.y0, sol.std_err};
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json j;
  j["hypothesis_ok"] = hypothesis_ok;
  j["ordered"] = ordered;
  j["max_hypothesis_violation"] = max_hypothesis_violation;
  j["max_order_violation"] = max_order_violation;
  j["witness_level"] = witness_level;
  j["witness_node"] = witness_node;
  j["slack_scale"] = slack_scale;
  return j;
}

ComparisonReport check_comparison(const ScenarioTree& tree,
                                  const GameCoefficients& c1,
                                  const GameCoefficients& c2,
                                  const std::vector<double>* terminal1,
                                  const std::vector<double>* terminal2) {
  BsdeSolution s1 = solve_bsde_tree(tree, c1, terminal1);
  BsdeSolution s2 = solve_bsde_tree(tree, c2, terminal2);
  ComparisonReport rep;
  const int K = tree.n_steps;

  // Hypothesis: terminal ordering leafwise, and driver ordering evaluated at
  // the second solution's (y, q) along every node.
  for (std::size_t i = 0; i < tree.level_size(K); ++i) {
    double gap = s1.y[K][i] - s2.y[K][i];
    if (gap > rep.max_hypothesis_violation) {
      rep.max_hypothesis_violation = gap;
      rep.witness_level = K;
      rep.witness_node = static_cast<long>(i);
    }
  }
  for (int k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      const Path& x = tree.state(k, static_cast<std::size_t>(i));
      double l1 = c1.driver(x, s2.y[k][i], s2.q[k][i], tree.u_prefix[k],
                            tree.v_prefix[k]);
      double l2 = c2.driver(x, s2.y[k][i], s2.q[k][i], tree.u_prefix[k],
                            tree.v_prefix[k]);
      double gap = l1 - l2;
      double slack = rep.slack_scale * (1.0 + std::abs(s2.y[k][i]));
      if (gap > slack && gap > rep.max_hypothesis_violation) {
        rep.max_hypothesis_violation = gap;
        rep.witness_level = k;
        rep.witness_node = static_cast<long>(i);
      }
    }
  }
  rep.hypothesis_ok = rep.max_hypothesis_violation <= rep.slack_scale;

  for (int k = 0; k <= K; ++k) {
    for (std::size_t i = 0; i < tree.level_size(k); ++i) {
      double slack = rep.slack_scale * (1.0 + std::abs(s1.y[k][i]));
      double gap = s1.y[k][i] - s2.y[k][i];
      if (gap > slack && gap > rep.max_order_violation) {
        rep.max_order_violation = gap;
        rep.witness_level = k;
        rep.witness_node = static_cast<long>(i);
      }
    }
  }
  rep.ordered = rep.max_order_violation == 0.0;
  return rep;
}

}  // namespace szsdg
