#pragma once

#include <json.hpp>
#include <cstdint>
#include <functional>
#include <vector>

#include "szsdg/dynamics.hpp"
#include "szsdg/path.hpp"

// Numerical path-functional calculus: horizontal (time-extension) and
// vertical (terminal-bump) derivatives, smoothness probes, and a pathwise
// change-of-variables verifier for functionals driven by simulated paths.

namespace szsdg {

// Real-valued functional of a state path and the two control paths.
struct PathFunctional {
  enum class Smoothness { none, c12, c12_kappa };
  std::function<double(const Path&, const CadlagPath&, const CadlagPath&)>
      eval;
  Smoothness smoothness = Smoothness::none;

  double operator()(const Path& a, const CadlagPath& z,
                    const CadlagPath& w) const {
    return eval(a, z, w);
  }

  // Convenience: functional of the state path alone.
  static PathFunctional of_state(std::function<double(const Path&)> g,
                                 Smoothness s = Smoothness::c12);
};

struct DerivativeOptions {
  double horizon = 1.0;          // time scale for the extension steps
  std::vector<double> dt_steps;  // default {1e-3, 5e-4} * horizon
  std::vector<double> h_steps;   // default {1e-3, 5e-4} * max(1, sup|A|)
};

// One finite-difference ladder: estimates per step plus one Richardson
// extrapolation from the smallest halving pair.
struct StepLadder {
  std::vector<double> steps;
  std::vector<double> estimates;
  double value = 0.0;
};

struct FunctionalDerivatives {
  double value = 0.0;  // f at the base point
  double dt = 0.0;
  Eigen::VectorXd dx;
  Eigen::MatrixXd dxx;  // symmetrized
  StepLadder dt_ladder;
  std::vector<StepLadder> dx_ladders;
};

StepLadder horizontal_derivative(const PathFunctional& f, const Path& a,
                                 const CadlagPath& z, const CadlagPath& w,
                                 const DerivativeOptions& opt = {});

StepLadder vertical_partial(const PathFunctional& f, const Path& a,
                            const CadlagPath& z, const CadlagPath& w, int i,
                            const DerivativeOptions& opt = {});

Eigen::VectorXd vertical_gradient(const PathFunctional& f, const Path& a,
                                  const CadlagPath& z, const CadlagPath& w,
                                  const DerivativeOptions& opt = {});

Eigen::MatrixXd vertical_hessian(const PathFunctional& f, const Path& a,
                                 const CadlagPath& z, const CadlagPath& w,
                                 const DerivativeOptions& opt = {});

// All derivatives at one base point, sharing evaluations.
FunctionalDerivatives functional_derivatives(
    const PathFunctional& f, const Path& a, const CadlagPath& z,
    const CadlagPath& w, const DerivativeOptions& opt = {});

// Does f ignore the value of the controls exactly at the current time?
// (Functionals of the strict control history have vanishing control-slot
// vertical derivatives, which is what makes the substituted Hamiltonian
// well defined.)
struct PredictableReport {
  bool predictable = false;
  double max_dev = 0.0;
  double tol = 0.0;
};
PredictableReport check_predictable_dependence(
    const PathFunctional& f, const Path& a, const CadlagPath& z,
    const CadlagPath& w, const ControlSet& u_set, const ControlSet& v_set,
    int n_probes = 16, std::uint64_t seed = 0);

// Sampled lower bound for sup |f(p)-f(q)| / d_infty(p,q)^kappa over a ball.
struct SeminormEstimate {
  double lower_bound = 0.0;
  std::size_t n_pairs = 0;
};
SeminormEstimate holder_seminorm_estimate(const PathFunctional& f,
                                          const HolderBall& ball, double t_end,
                                          const CadlagPath& z,
                                          const CadlagPath& w, int n_samples,
                                          std::uint64_t seed);

// Pathwise check of the functional change-of-variables formula on simulated
// paths: f at the end of each path is compared with f at the start plus the
// left-point sums of dt, dx . delta_x and 0.5 tr(dxx sigma sigma') delta_t.
struct ItoReport {
  int n_paths = 0;
  int n_steps = 0;
  double max_err = 0.0;
  double p50_err = 0.0;
  double p95_err = 0.0;
  double scale = 0.0;    // max |f| over the batch endpoints
  double rel_err = 0.0;  // max_err / max(1, scale)
  std::uint64_t seed = 0;
  nlohmann::json to_json() const;
};

ItoReport verify_functional_ito(const PathFunctional& f,
                                const GameCoefficients& c, const Path& initial,
                                const CadlagPath& u, const CadlagPath& v,
                                double t1, int n_paths, int n_steps,
                                std::uint64_t seed,
                                const BrownianBatch* shared_noise = nullptr);

}  // namespace szsdg
