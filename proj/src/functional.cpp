#include "szsdg/functional.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "szsdg/rng.hpp"
#include "szsdg/threads.hpp"

namespace szsdg {

PathFunctional PathFunctional::of_state(std::function<double(const Path&)> g,
                                        Smoothness s) {
  PathFunctional f;
  f.eval = [g = std::move(g)](const Path& a, const CadlagPath&,
                              const CadlagPath&) { return g(a); };
  f.smoothness = s;
  return f;
}

namespace {

std::vector<double> default_dt_steps(const DerivativeOptions& opt) {
  if (!opt.dt_steps.empty()) return opt.dt_steps;
  return {1e-3 * opt.horizon, 5e-4 * opt.horizon};
}

std::vector<double> default_h_steps(const DerivativeOptions& opt,
                                    const Path& a) {
  if (!opt.h_steps.empty()) return opt.h_steps;
  double scale = std::max(1.0, a.sup_norm());
  return {1e-3 * scale, 5e-4 * scale};
}

// One Richardson level from the smallest halving pair; `order` is the
// leading error order of the raw estimates (1 = forward, 2 = central).
double extrapolate(const std::vector<double>& steps,
                   const std::vector<double>& est, int order) {
  std::size_t n = est.size();
  if (n >= 2 && std::abs(steps[n - 2] - 2.0 * steps[n - 1]) <=
                    1e-9 * std::abs(steps[n - 2])) {
    double w = std::pow(2.0, order);
    return (w * est[n - 1] - est[n - 2]) / (w - 1.0);
  }
  return est[n - 1];
}

}  // namespace

StepLadder horizontal_derivative(const PathFunctional& f, const Path& a,
                                 const CadlagPath& z, const CadlagPath& w,
                                 const DerivativeOptions& opt) {
  StepLadder lad;
  lad.steps = default_dt_steps(opt);
  double f0 = f(a, z, w);
  for (double dt : lad.steps) {
    if (!(dt > 0.0))
      throw std::invalid_argument("horizontal_derivative: step <= 0");
    // All three paths are extended together so the functional sees a
    // consistent snapshot at the later time.
    double fe = f(flat_extend(a, dt), flat_extend(z, dt), flat_extend(w, dt));
    lad.estimates.push_back((fe - f0) / dt);
  }
  lad.value = extrapolate(lad.steps, lad.estimates, 1);
  return lad;
}

StepLadder vertical_partial(const PathFunctional& f, const Path& a,
                            const CadlagPath& z, const CadlagPath& w, int i,
                            const DerivativeOptions& opt) {
  if (i < 0 || i >= a.dim())
    throw std::invalid_argument("vertical_partial: coordinate out of range");
  StepLadder lad;
  lad.steps = default_h_steps(opt, a);
  for (double h : lad.steps) {
    if (!(h > 0.0)) throw std::invalid_argument("vertical_partial: step <= 0");
    Eigen::VectorXd e = Eigen::VectorXd::Zero(a.dim());
    e[i] = h;
    double fp = f(vertical_extend(a, e), z, w);
    e[i] = -h;
    double fm = f(vertical_extend(a, e), z, w);
    lad.estimates.push_back((fp - fm) / (2.0 * h));
  }
  lad.value = extrapolate(lad.steps, lad.estimates, 2);
  return lad;
}

Eigen::VectorXd vertical_gradient(const PathFunctional& f, const Path& a,
                                  const CadlagPath& z, const CadlagPath& w,
                                  const DerivativeOptions& opt) {
  Eigen::VectorXd g(a.dim());
  for (int i = 0; i < a.dim(); ++i)
    g[i] = vertical_partial(f, a, z, w, i, opt).value;
  return g;
}

namespace {

Eigen::MatrixXd hessian_at_step(const PathFunctional& f, const Path& a,
                                const CadlagPath& z, const CadlagPath& w,
                                double f0, double h) {
  int n = a.dim();
  Eigen::MatrixXd H(n, n);
  auto bump = [&](int i, double hi, int j, double hj) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[i] += hi;
    e[j] += hj;
    return f(vertical_extend(a, e), z, w);
  };
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[i] = h;
    double fp = f(vertical_extend(a, e), z, w);
    e[i] = -h;
    double fm = f(vertical_extend(a, e), z, w);
    H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    for (int j = i + 1; j < n; ++j) {
      double v = (bump(i, h, j, h) - bump(i, h, j, -h) - bump(i, -h, j, h) +
                  bump(i, -h, j, -h)) /
                 (4.0 * h * h);
      H(i, j) = v;
      H(j, i) = v;
    }
  }
  return H;
}

}  // namespace

Eigen::MatrixXd vertical_hessian(const PathFunctional& f, const Path& a,
                                 const CadlagPath& z, const CadlagPath& w,
                                 const DerivativeOptions& opt) {
  std::vector<double> steps = default_h_steps(opt, a);
  double f0 = f(a, z, w);
  std::size_t n = steps.size();
  Eigen::MatrixXd Hl = hessian_at_step(f, a, z, w, f0, steps[n - 1]);
  Eigen::MatrixXd H;
  if (n >= 2 && std::abs(steps[n - 2] - 2.0 * steps[n - 1]) <=
                    1e-9 * std::abs(steps[n - 2])) {
    Eigen::MatrixXd Hc = hessian_at_step(f, a, z, w, f0, steps[n - 2]);
    H = (4.0 * Hl - Hc) / 3.0;
  } else {
    H = Hl;
  }
  return 0.5 * (H + H.transpose());
}

FunctionalDerivatives functional_derivatives(const PathFunctional& f,
                                             const Path& a,
                                             const CadlagPath& z,
                                             const CadlagPath& w,
                                             const DerivativeOptions& opt) {
  FunctionalDerivatives d;
  d.value = f(a, z, w);
  d.dt_ladder = horizontal_derivative(f, a, z, w, opt);
  d.dt = d.dt_ladder.value;
  d.dx.resize(a.dim());
  for (int i = 0; i < a.dim(); ++i) {
    d.dx_ladders.push_back(vertical_partial(f, a, z, w, i, opt));
    d.dx[i] = d.dx_ladders.back().value;
  }
  d.dxx = vertical_hessian(f, a, z, w, opt);
  return d;
}

PredictableReport check_predictable_dependence(
    const PathFunctional& f, const Path& a, const CadlagPath& z,
    const CadlagPath& w, const ControlSet& u_set, const ControlSet& v_set,
    int n_probes, std::uint64_t seed) {
  PredictableReport rep;
  double f0 = f(a, z, w);
  rep.tol = 1e-10 * (1.0 + std::abs(f0));
  auto rng = substream(seed, 0xC0117801u);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&](const ControlSet& cs) {
    if (cs.is_finite()) {
      std::uniform_int_distribution<std::size_t> pick(0, cs.points.size() - 1);
      return cs.points[pick(rng)];
    }
    Eigen::VectorXd u(cs.dim);
    for (int i = 0; i < cs.dim; ++i)
      u[i] = cs.lo[i] + unif(rng) * (cs.hi[i] - cs.lo[i]);
    return u;
  };
  for (int k = 0; k < n_probes; ++k) {
    double du = std::abs(f(a, vertical_control_sub(z, draw(u_set)), w) - f0);
    double dv = std::abs(f(a, z, vertical_control_sub(w, draw(v_set))) - f0);
    rep.max_dev = std::max({rep.max_dev, du, dv});
  }
  rep.predictable = rep.max_dev <= rep.tol;
  return rep;
}

SeminormEstimate holder_seminorm_estimate(const PathFunctional& f,
                                          const HolderBall& ball, double t_end,
                                          const CadlagPath& z,
                                          const CadlagPath& w, int n_samples,
                                          std::uint64_t seed) {
  if (n_samples < 2)
    throw std::invalid_argument("holder_seminorm_estimate: n_samples >= 2");
  SeminormEstimate est;
  std::vector<Path> paths;
  std::vector<double> fvals;
  paths.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    paths.push_back(sample_holder_ball(ball, t_end, mix_seed(seed, i)));
    fvals.push_back(f(paths.back(), z, w));
  }
  for (int i = 0; i < n_samples; ++i) {
    for (int j = i + 1; j < n_samples; ++j) {
      double d = d_infty(paths[i], paths[j]);
      if (d <= 0.0) continue;
      est.lower_bound = std::max(
          est.lower_bound,
          std::abs(fvals[i] - fvals[j]) / std::pow(d, ball.kappa));
      ++est.n_pairs;
    }
    // horizon pair: the same history frozen a little longer
    double delta = 0.05 * std::max(t_end, 1.0);
    Path ext = flat_extend(paths[i], delta);
    double fe =
        f(ext, flat_extend(truncate_control(z, std::min(z.t_end(), t_end)),
                           delta + std::max(0.0, t_end - z.t_end())),
          flat_extend(truncate_control(w, std::min(w.t_end(), t_end)),
                      delta + std::max(0.0, t_end - w.t_end())));
    est.lower_bound =
        std::max(est.lower_bound,
                 std::abs(fe - fvals[i]) / std::pow(delta, ball.kappa));
    ++est.n_pairs;
  }
  return est;
}

// -------------------------------------------------------------- Ito verifier

ItoReport verify_functional_ito(const PathFunctional& f,
                                const GameCoefficients& c, const Path& initial,
                                const CadlagPath& u, const CadlagPath& v,
                                double t1, int n_paths, int n_steps,
                                std::uint64_t seed,
                                const BrownianBatch* shared_noise) {
  if (f.smoothness == PathFunctional::Smoothness::none)
    throw std::invalid_argument(
        "verify_functional_ito: functional must declare smoothness");
  BrownianBatch local =
      shared_noise ? BrownianBatch(*shared_noise)
                   : BrownianBatch(seed, n_paths, n_steps, initial.t_end(), t1,
                                   c.noise_dim);
  if (shared_noise &&
      (shared_noise->n_paths() != n_paths ||
       shared_noise->n_steps() != n_steps))
    throw std::invalid_argument("verify_functional_ito: noise shape mismatch");
  SimulatedPaths sim = simulate_sde(c, initial, u, v, local);
  const double t0 = initial.t_end();
  DerivativeOptions opt;
  opt.horizon = t1 - t0;
  std::vector<double> errors(n_paths, 0.0);
  std::vector<double> endvals(n_paths, 0.0);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t i) {
    const Path& full = sim.paths[i];
    Path prefix = initial;
    CadlagPath up = truncate_control(u, t0);
    CadlagPath vp = truncate_control(v, t0);
    double rhs = 0.0;
    std::size_t base = initial.size();
    for (int k = 0; k < n_steps; ++k) {
      double tk = full.grid()[base - 1 + k];
      Eigen::VectorXd uk = u.value_at(tk), vk = v.value_at(tk);
      if (up.grid().back() < tk)
        up.append(tk, uk);
      else
        up.replace_terminal(uk);
      if (vp.grid().back() < tk)
        vp.append(tk, vk);
      else
        vp.replace_terminal(vk);
      FunctionalDerivatives der = functional_derivatives(f, prefix, up, vp, opt);
      Eigen::MatrixXd sg = c.diffusion(prefix, up, vp);
      Eigen::VectorXd dx_inc = full.point(base + k) - full.point(base + k - 1);
      double step_dt = full.grid()[base + k] - tk;
      rhs += der.dt * step_dt;
      rhs += der.dx.dot(dx_inc);
      rhs += 0.5 * (der.dxx * (sg * sg.transpose())).trace() * step_dt;
      prefix.append(full.grid()[base + k], full.point(base + k));
      up.set_t_end(full.grid()[base + k]);
      vp.set_t_end(full.grid()[base + k]);
    }
    double f_start, f_end;
    {
      Path p0 = initial;
      CadlagPath u0 = truncate_control(u, t0);
      CadlagPath v0 = truncate_control(v, t0);
      f_start = f(p0, u0, v0);
      f_end = f(prefix, up, vp);
    }
    errors[i] = std::abs(f_end - f_start - rhs);
    endvals[i] = std::abs(f_end);
  });
  ItoReport rep;
  rep.n_paths = n_paths;
  rep.n_steps = n_steps;
  rep.seed = local.seed();
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  rep.max_err = sorted.back();
  rep.p50_err = sorted[static_cast<std::size_t>(0.50 * (n_paths - 1))];
  rep.p95_err = sorted[static_cast<std::size_t>(0.95 * (n_paths - 1))];
  rep.scale = *std::max_element(endvals.begin(), endvals.end());
  rep.rel_err = rep.max_err / std::max(1.0, rep.scale);
  return rep;
}

nlohmann::json ItoReport::to_json() const {
  return {{"n_paths", n_paths}, {"n_steps", n_steps}, {"max_err", max_err},
          {"p50_err", p50_err}, {"p95_err", p95_err}, {"scale", scale},
          {"rel_err", rel_err}, {"seed", seed}};
}

}  // namespace szsdg
