#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "szsdg/path.hpp"

// Controlled path-dependent dynamics: coefficient bundles, reproducible
// Brownian increment batches, and the Euler forward simulator.  Coefficients
// always receive the discrete history up to the current step, never the
// future.

namespace szsdg {

struct GameCoefficients {
  // drift and diffusion of the state; diffusion is state_dim x noise_dim.
  std::function<Eigen::VectorXd(const Path&, const CadlagPath&,
                                const CadlagPath&)>
      drift;
  std::function<Eigen::MatrixXd(const Path&, const CadlagPath&,
                                const CadlagPath&)>
      diffusion;
  // running cost; the q slot is a 1 x noise_dim row.
  std::function<double(const Path&, double, const Eigen::RowVectorXd&,
                       const CadlagPath&, const CadlagPath&)>
      driver;
  std::function<double(const Path&)> terminal_cost;

  double bound_M = 1.0;      // declared uniform bound
  double lipschitz_L = 1.0;  // declared Lipschitz constant (all arguments)
  // Lipschitz constant of the driver in its y slot alone; the implicit
  // backward step contracts iff driver_y_lipschitz * dt < 1.
  double driver_y_lipschitz = 1.0;
  int state_dim = 1;
  int noise_dim = 1;
  int u_dim = 1;
  int v_dim = 1;
  // Drivers that ignore (y, q) let Monte-Carlo objective evaluation skip the
  // regression pass (the backward recursion then telescopes exactly).
  bool driver_depends_yq = true;
};

// Seeded batch of scaled Brownian increments on a uniform grid of [t0, t1].
// Each path draws from its own substream keyed by (seed, path index), so the
// batch is reproducible regardless of the thread count, and a coarsened
// batch rides the same underlying Brownian paths.
class BrownianBatch {
 public:
  BrownianBatch(std::uint64_t seed, int n_paths, int n_steps, double t0,
                double t1, int noise_dim);

  int n_paths() const { return n_paths_; }
  int n_steps() const { return n_steps_; }
  int noise_dim() const { return noise_dim_; }
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  double dt() const { return (t1_ - t0_) / n_steps_; }
  std::uint64_t seed() const { return seed_; }

  Eigen::Map<const Eigen::VectorXd> increment(int path, int step) const {
    return {incs_.data() +
                (static_cast<std::size_t>(path) * n_steps_ + step) * noise_dim_,
            noise_dim_};
  }

  // Merge consecutive increments in groups of `factor` (refinement study).
  BrownianBatch coarsen(int factor) const;

  nlohmann::json spec_json() const;

 private:
  BrownianBatch() = default;
  std::uint64_t seed_ = 0;
  int n_paths_ = 0, n_steps_ = 0, noise_dim_ = 1;
  double t0_ = 0.0, t1_ = 0.0;
  std::vector<double> incs_;
};

struct SimulatedPaths {
  std::vector<Path> paths;  // each carries the initial history as its prefix
  CadlagPath u, v;          // controls actually applied
  double t0 = 0.0, t1 = 0.0;
  int n_steps = 0;
  std::uint64_t seed = 0;
  // The driving increments, kept so backward passes can condition on them.
  std::optional<BrownianBatch> noise;
  std::string to_csv() const;  // long format: path_id,time,v0..
};

// Euler scheme with path-dependent coefficient calls; the initial path is
// preserved exactly as the prefix of every simulated path.  Controls must be
// defined on [t0, t1].  Throws on non-finite states, naming step and path.
SimulatedPaths simulate_sde(const GameCoefficients& c, const Path& initial,
                            const CadlagPath& u, const CadlagPath& v,
                            const BrownianBatch& noise);

// Truncate a control path to [start, s].
CadlagPath truncate_control(const CadlagPath& z, double s);

// Empirical check of the declared bound / Lipschitz structure on sampled
// inputs; report-only.
struct CoefficientRegularityReport {
  double max_ratio_drift = 0.0;
  double max_ratio_diffusion = 0.0;
  double max_ratio_driver = 0.0;
  double max_ratio_terminal = 0.0;
  double max_abs_value = 0.0;
  int bound_violations = 0;
  int lipschitz_violations = 0;
  int n_probes = 0;
  nlohmann::json to_json() const;
};
CoefficientRegularityReport validate_coefficient_regularity(const GameCoefficients& c,
                                       const ControlSet& u_set,
                                       const ControlSet& v_set, double t_end,
                                       int n_probes, std::uint64_t seed);

// Monte-Carlo moment and stability diagnostics for the simulated dynamics.
struct MomentBounds {
  double sup_sq_mean = 0.0;     // E sup_t |x_t|^2
  double flat_dev_ratio = 0.0;  // E sup_{[ta,tb]} |x - frozen|^2 / (tb - ta)
  double stability_num = 0.0;   // E sup |x^1 - x^2|^2 under coupled noise
  double stability_den = 0.0;   // distance of the two input bundles
  double stability_ratio = 0.0;
  nlohmann::json to_json() const;
};
MomentBounds estimate_moment_bounds(const GameCoefficients& c,
                                    const Path& initial_a,
                                    const Path& initial_b, const CadlagPath& ua,
                                    const CadlagPath& va, const CadlagPath& ub,
                                    const CadlagPath& vb, double t_mid,
                                    const BrownianBatch& noise);

}  // namespace szsdg
