#include "szsdg/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "szsdg/errors.hpp"
#include "szsdg/rng.hpp"
#include "szsdg/serialize.hpp"
#include "szsdg/threads.hpp"

namespace szsdg {

// ------------------------------------------------------------ BrownianBatch

BrownianBatch::BrownianBatch(std::uint64_t seed, int n_paths, int n_steps,
                             double t0, double t1, int noise_dim)
    : seed_(seed),
      n_paths_(n_paths),
      n_steps_(n_steps),
      noise_dim_(noise_dim),
      t0_(t0),
      t1_(t1) {
  if (n_paths < 1 || n_steps < 1 || noise_dim < 1)
    throw std::invalid_argument("BrownianBatch: sizes must be positive");
  if (!(t1 > t0)) throw std::invalid_argument("BrownianBatch: t1 <= t0");
  incs_.resize(static_cast<std::size_t>(n_paths) * n_steps * noise_dim);
  double sd = std::sqrt(dt());
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t i) {
    auto rng = substream(seed_, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    double* out = incs_.data() + i * n_steps_ * noise_dim_;
    for (int k = 0; k < n_steps_ * noise_dim_; ++k) out[k] = sd * normal(rng);
  });
}

BrownianBatch BrownianBatch::coarsen(int factor) const {
  if (factor < 1 || n_steps_ % factor != 0)
    throw std::invalid_argument(
        "BrownianBatch: coarsen factor must divide n_steps");
  BrownianBatch out;
  out.seed_ = seed_;
  out.n_paths_ = n_paths_;
  out.n_steps_ = n_steps_ / factor;
  out.noise_dim_ = noise_dim_;
  out.t0_ = t0_;
  out.t1_ = t1_;
  out.incs_.assign(
      static_cast<std::size_t>(n_paths_) * out.n_steps_ * noise_dim_, 0.0);
  for (int i = 0; i < n_paths_; ++i)
    for (int k = 0; k < n_steps_; ++k)
      for (int c = 0; c < noise_dim_; ++c)
        out.incs_[(static_cast<std::size_t>(i) * out.n_steps_ + k / factor) *
                      noise_dim_ +
                  c] += increment(i, k)[c];
  return out;
}

nlohmann::json BrownianBatch::spec_json() const {
  return {{"seed", seed_},
          {"n_paths", n_paths_},
          {"n_steps", n_steps_},
          {"t0", t0_},
          {"t1", t1_},
          {"noise_dim", noise_dim_}};
}

// ----------------------------------------------------------------- simulate

CadlagPath truncate_control(const CadlagPath& z, double s) {
  if (s < z.domain_start())
    throw std::invalid_argument("truncate_control: s before domain start");
  std::vector<double> g, v;
  for (std::size_t i = 0; i < z.size() && z.grid()[i] <= s; ++i) {
    g.push_back(z.grid()[i]);
    for (int c = 0; c < z.dim(); ++c) v.push_back(z.point(i)[c]);
  }
  return CadlagPath(std::move(g), std::move(v), z.dim(), s);
}

SimulatedPaths simulate_sde(const GameCoefficients& c, const Path& initial,
                            const CadlagPath& u, const CadlagPath& v,
                            const BrownianBatch& noise) {
  if (initial.dim() != c.state_dim)
    throw std::invalid_argument("simulate_sde: initial dim != state_dim");
  if (initial.t_end() != noise.t0())
    throw std::invalid_argument(
        "simulate_sde: initial path must end at the batch start time");
  if (u.t_end() < noise.t1() || v.t_end() < noise.t1())
    throw std::invalid_argument(
        "simulate_sde: controls must cover the horizon");
  const double dt = noise.dt();
  const double t0 = noise.t0();
  SimulatedPaths out;
  out.t0 = t0;
  out.t1 = noise.t1();
  out.n_steps = noise.n_steps();
  out.seed = noise.seed();
  out.u = u;
  out.v = v;
  out.noise = noise;
  out.paths.assign(noise.n_paths(), Path());
  parallel_for(static_cast<std::size_t>(noise.n_paths()), [&](std::size_t i) {
    Path x = initial;
    CadlagPath up = truncate_control(u, t0);
    CadlagPath vp = truncate_control(v, t0);
    Eigen::VectorXd state = initial.terminal();
    for (int k = 0; k < noise.n_steps(); ++k) {
      double tk = t0 + k * dt;
      double tk1 = (k + 1 == noise.n_steps()) ? noise.t1() : t0 + (k + 1) * dt;
      // Extend the control history with the values in force on [tk, tk+1).
      Eigen::VectorXd uk = u.value_at(tk), vk = v.value_at(tk);
      if (up.grid().back() < tk)
        up.append(tk, uk);
      else
        up.replace_terminal(uk);
      if (vp.grid().back() < tk)
        vp.append(tk, vk);
      else
        vp.replace_terminal(vk);
      Eigen::VectorXd fval = c.drift(x, up, vp);
      Eigen::MatrixXd sval = c.diffusion(x, up, vp);
      state += fval * dt + sval * noise.increment(static_cast<int>(i), k);
      if (!state.allFinite())
        throw NumericalFailure("simulate_sde: non-finite state at step " +
                                 std::to_string(k + 1) + ", path " +
                                 std::to_string(i));
      x.append(tk1, state);
      up.set_t_end(tk1);
      vp.set_t_end(tk1);
    }
    out.paths[i] = std::move(x);
  });
  return out;
}

std::string SimulatedPaths::to_csv() const {
  std::string s = "path_id,time";
  int dim = paths.empty() ? 0 : paths[0].dim();
  for (int c = 0; c < dim; ++c) s += ",v" + std::to_string(c);
  s += "\n";
  for (std::size_t i = 0; i < paths.size(); ++i)
    for (std::size_t k = 0; k < paths[i].size(); ++k) {
      s += std::to_string(i) + "," + format_double(paths[i].grid()[k]);
      for (int c = 0; c < dim; ++c)
        s += "," + format_double(paths[i].point(k)[c]);
      s += "\n";
    }
  return s;
}

// ------------------------------------------------- coefficient regularity

namespace {

CadlagPath random_control(const ControlSet& cs, double t_end, int n_knots,
                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> g{0.0};
  for (int i = 1; i < n_knots; ++i) g.push_back(t_end * i / n_knots);
  std::vector<double> v;
  for (int i = 0; i < n_knots; ++i) {
    Eigen::VectorXd pt(cs.dim);
    if (cs.is_finite()) {
      std::uniform_int_distribution<std::size_t> pick(0, cs.points.size() - 1);
      pt = cs.points[pick(rng)];
    } else {
      for (int c = 0; c < cs.dim; ++c)
        pt[c] = cs.lo[c] + unif(rng) * (cs.hi[c] - cs.lo[c]);
    }
    for (int c = 0; c < cs.dim; ++c) v.push_back(pt[c]);
  }
  return CadlagPath(std::move(g), std::move(v), cs.dim, t_end);
}

}  // namespace

CoefficientRegularityReport validate_coefficient_regularity(const GameCoefficients& c,
                                       const ControlSet& u_set,
                                       const ControlSet& v_set, double t_end,
                                       int n_probes, std::uint64_t seed) {
  CoefficientRegularityReport rep;
  rep.n_probes = n_probes;
  auto rng = substream(seed, 0);
  HolderBall ball{0.5, 4.0, 2.0};
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int probe = 0; probe < n_probes; ++probe) {
    Path a1 = sample_holder_ball(ball, t_end, mix_seed(seed, 2 * probe));
    Path a2 = sample_holder_ball(ball, t_end, mix_seed(seed, 2 * probe + 1));
    CadlagPath u1 = random_control(u_set, t_end, 4, rng);
    CadlagPath u2 = random_control(u_set, t_end, 4, rng);
    CadlagPath v1 = random_control(v_set, t_end, 4, rng);
    CadlagPath v2 = random_control(v_set, t_end, 4, rng);
    double y1 = unif(rng), y2 = unif(rng);
    Eigen::RowVectorXd q1(c.noise_dim), q2(c.noise_dim);
    for (int k = 0; k < c.noise_dim; ++k) {
      q1[k] = unif(rng);
      q2[k] = unif(rng);
    }
    double dxx = d_infty(a1, a2), duu = d_infty(u1, u2), dvv = d_infty(v1, v2);
    double den = dxx + duu + dvv;
    double f_gap = (c.drift(a1, u1, v1) - c.drift(a2, u2, v2)).norm();
    double s_gap = (c.diffusion(a1, u1, v1) - c.diffusion(a2, u2, v2)).norm();
    double m_gap =
        std::abs(c.terminal_cost(a1) - c.terminal_cost(a2));
    double l_gap = std::abs(c.driver(a1, y1, q1, u1, v1) -
                            c.driver(a2, y2, q2, u2, v2));
    double l_den = den + std::abs(y1 - y2) + (q1 - q2).norm();
    if (den > 0.0) {
      rep.max_ratio_drift = std::max(rep.max_ratio_drift, f_gap / den);
      rep.max_ratio_diffusion = std::max(rep.max_ratio_diffusion, s_gap / den);
    }
    if (dxx > 0.0)
      rep.max_ratio_terminal = std::max(rep.max_ratio_terminal, m_gap / dxx);
    if (l_den > 0.0)
      rep.max_ratio_driver = std::max(rep.max_ratio_driver, l_gap / l_den);
    double vmax = std::max({c.drift(a1, u1, v1).norm(),
                            c.diffusion(a1, u1, v1).norm(),
                            std::abs(c.terminal_cost(a1)),
                            std::abs(c.driver(a1, 0.0,
                                              Eigen::RowVectorXd::Zero(
                                                  c.noise_dim),
                                              u1, v1))});
    rep.max_abs_value = std::max(rep.max_abs_value, vmax);
    if (vmax > c.bound_M) ++rep.bound_violations;
  }
  double worst = std::max({rep.max_ratio_drift, rep.max_ratio_diffusion,
                           rep.max_ratio_driver, rep.max_ratio_terminal});
  if (worst > c.lipschitz_L) rep.lipschitz_violations = 1;
  return rep;
}

nlohmann::json CoefficientRegularityReport::to_json() const {
  return {{"max_ratio_drift", max_ratio_drift},
          {"max_ratio_diffusion", max_ratio_diffusion},
          {"max_ratio_driver", max_ratio_driver},
          {"max_ratio_terminal", max_ratio_terminal},
          {"max_abs_value", max_abs_value},
          {"bound_violations", bound_violations},
          {"lipschitz_violations", lipschitz_violations},
          {"n_probes", n_probes}};
}

// ------------------------------------------------------------ moment bounds

MomentBounds estimate_moment_bounds(const GameCoefficients& c,
                                    const Path& initial_a,
                                    const Path& initial_b, const CadlagPath& ua,
                                    const CadlagPath& va, const CadlagPath& ub,
                                    const CadlagPath& vb, double t_mid,
                                    const BrownianBatch& noise) {
  if (!(t_mid > noise.t0()) || !(t_mid <= noise.t1()))
    throw std::invalid_argument("estimate_moment_bounds: t_mid outside span");
  SimulatedPaths pa = simulate_sde(c, initial_a, ua, va, noise);
  SimulatedPaths pb = simulate_sde(c, initial_b, ub, vb, noise);
  MomentBounds mb;
  double n = static_cast<double>(pa.paths.size());
  for (std::size_t i = 0; i < pa.paths.size(); ++i) {
    const Path& x = pa.paths[i];
    mb.sup_sq_mean += x.sup_norm() * x.sup_norm() / n;
    // deviation from the value frozen at t_mid, over [t_mid, t1]
    Eigen::VectorXd frozen = x.value_at(t_mid);
    double dev = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x.grid()[k] >= t_mid)
        dev = std::max(dev, (x.point(k) - frozen).norm());
    mb.flat_dev_ratio += dev * dev / ((noise.t1() - t_mid) * n);
    // coupled-deviation sup on the shared simulation grid
    double pair_dev = 0.0;
    for (int k = 0; k <= noise.n_steps(); ++k) {
      double s = noise.t0() + k * noise.dt();
      pair_dev = std::max(
          pair_dev, (x.value_at(s) - pb.paths[i].value_at(s)).norm());
    }
    mb.stability_num += pair_dev * pair_dev / n;
  }
  double ctrl = 0.0;  // integral of squared control gaps over [t0, t1]
  int grid_n = 256;
  for (int k = 0; k < grid_n; ++k) {
    double s = noise.t0() + (noise.t1() - noise.t0()) * (k + 0.5) / grid_n;
    double du = (ua.value_at(s) - ub.value_at(s)).norm();
    double dv = (va.value_at(s) - vb.value_at(s)).norm();
    ctrl += (du * du + dv * dv) * (noise.t1() - noise.t0()) / grid_n;
  }
  mb.stability_den = d_infty(initial_a, initial_b) + ctrl;
  mb.stability_ratio =
      mb.stability_den > 0.0 ? mb.stability_num / mb.stability_den : 0.0;
  return mb;
}

nlohmann::json MomentBounds::to_json() const {
  return {{"sup_sq_mean", sup_sq_mean},
          {"flat_dev_ratio", flat_dev_ratio},
          {"stability_num", stability_num},
          {"stability_den", stability_den},
          {"stability_ratio", stability_ratio}};
}

}  // namespace szsdg
