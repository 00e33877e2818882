#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "szsdg/dynamics.hpp"
#include "szsdg/functional.hpp"
#include "szsdg/path.hpp"

// Backward-equation machinery on path space: the substituted Hamiltonian,
// its grid minimax envelopes (lower = sup over v of inf over u, upper with
// the order swapped), residuals of candidate value functionals, and sampled
// sub/super-solution and comparison checks.
//
// Conventions:
//  * the scalar equation is  sup/inf { time-derivative + H } = 0  with the
//    terminal condition value = terminal_cost; sub-solution candidates have
//    residual >= 0, super-solutions <= 0;
//  * sup/inf over the compact control sets are realized on finite grids,
//    optionally sharpened by shrinking local refinement passes around the
//    incumbent pair.  Exactness claims are confined to the grid minimax.

namespace szsdg {

// Which of the two envelope orders an equation uses.
enum class Side { lower, upper };
// Inequality direction a candidate is checked against.
enum class SolutionKind { sub, super };

const char* side_name(Side s);

// Frozen data at which the Hamiltonian is evaluated: the histories up to the
// current time plus the scalar/first/second-order slots.
struct HamiltonianInput {
  Path a;           // state history
  CadlagPath z, w;  // control histories ending at the same time
  double y = 0.0;
  Eigen::VectorXd p;   // first-order slot, length state_dim
  Eigen::MatrixXd pp;  // second-order slot, symmetric state_dim x state_dim

  // Validates dimensions against the coefficients and symmetrizes pp.
  static HamiltonianInput make(const GameCoefficients& c, Path a, CadlagPath z,
                               CadlagPath w, double y, Eigen::VectorXd p,
                               Eigen::MatrixXd pp);
};

// <drift, p> + driver(a, y, p' sigma, z^u, w^v) + 1/2 tr(pp sigma sigma'),
// with z^u, w^v the control histories after substituting (u, v) at the
// current time.
double hamiltonian(const GameCoefficients& c, const HamiltonianInput& in,
                   const Eigen::VectorXd& u, const Eigen::VectorXd& v);

// Per-pair time-derivative term added inside the minimax bracket; evaluated
// at the control-substituted histories, so it genuinely depends on (u, v).
using DtSupplier =
    std::function<double(const Eigen::VectorXd& u, const Eigen::VectorXd& v)>;

struct MinimaxOptions {
  // Number of local refinement passes.  Each pass augments the working grids
  // with a 3-point-per-axis cloud of halved span around the incumbent pair,
  // clamped to the admissible boxes, and re-runs the minimax on the enlarged
  // grids, so refined values remain exact finite minimax values.
  int refine_passes = 0;
  const ControlSet* u_box = nullptr;  // required when refine_passes > 0
  const ControlSet* v_box = nullptr;
};

// sup over v_grid of inf over u_grid of [ dt(u,v) + hamiltonian(u,v) ].
double lower_hamiltonian(const GameCoefficients& c, const HamiltonianInput& in,
                         const DtSupplier& dt,
                         const std::vector<Eigen::VectorXd>& u_grid,
                         const std::vector<Eigen::VectorXd>& v_grid,
                         const MinimaxOptions& opt = {});

// inf over u_grid of sup over v_grid of the same bracket.
double upper_hamiltonian(const GameCoefficients& c, const HamiltonianInput& in,
                         const DtSupplier& dt,
                         const std::vector<Eigen::VectorXd>& u_grid,
                         const std::vector<Eigen::VectorXd>& v_grid,
                         const MinimaxOptions& opt = {});

struct IsaacsReport {
  double lower = 0.0;
  double upper = 0.0;
  double raw_gap = 0.0;  // upper - lower; >= -roundoff on shared grids
  double gap = 0.0;      // raw_gap clamped at zero from below
  nlohmann::json to_json() const;
};

// Both envelopes on shared grids (refinement passes augment one common grid
// pair, so the finite minimax inequality upper >= lower holds throughout).
IsaacsReport isaacs_gap(const GameCoefficients& c, const HamiltonianInput& in,
                        const DtSupplier& dt,
                        const std::vector<Eigen::VectorXd>& u_grid,
                        const std::vector<Eigen::VectorXd>& v_grid,
                        const MinimaxOptions& opt = {});

// Candidate value functional with its derivative suppliers.  Analytic
// callbacks are used when set; unset ones fall back to the finite-difference
// calculus with fd_options.  Candidates must ignore the control values at
// exactly the current time (this is probed before residuals are trusted).
struct CandidateSolution {
  PathFunctional f;
  std::function<double(const Path&, const CadlagPath&, const CadlagPath&)> dt;
  std::function<Eigen::VectorXd(const Path&, const CadlagPath&,
                                const CadlagPath&)>
      dx;
  std::function<Eigen::MatrixXd(const Path&, const CadlagPath&,
                                const CadlagPath&)>
      dxx;
  DerivativeOptions fd_options{};
};

// Smooth cylinder data g(t, x, i) of the time, the current state value, and
// the running integral of the state, with its partial derivatives.
struct CylinderFunction {
  std::function<double(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>
      g;
  std::function<double(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>
      g_t;
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      g_x;
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      g_i;
  std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      g_xx;
};

// Candidate from cylinder data: value = g(t, a_t, integral of a).  Extending
// the path flat freezes a_t and grows the integral at rate a_t, so the time
// derivative is g_t + <g_i, a_t>; terminal bumps hit only the x slot.
CandidateSolution cylinder_candidate(CylinderFunction parts);

// Candidate from a smooth function of (t, current state value) alone.
CandidateSolution markovian_candidate(
    std::function<double(double, const Eigen::VectorXd&)> g,
    std::function<double(double, const Eigen::VectorXd&)> g_t,
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> g_x,
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)> g_xx);

struct ResidualReport {
  double residual = 0.0;      // minimax bracket value at the input
  double value = 0.0;         // candidate value at the input
  double terminal_gap = 0.0;  // |cand - terminal_cost| after flat extension
  double predictable_dev = 0.0;
  nlohmann::json to_json() const;
};

// Assembles (time-derivative at substituted histories, value, gradient,
// Hessian) of the candidate at (a, z, w) and returns the chosen envelope.
// The terminal gap is measured on the flat extension of the inputs to the
// horizon.  Throws std::invalid_argument when the candidate fails the
// predictable-dependence probe.
ResidualReport phji_residual(const GameCoefficients& c,
                             const CandidateSolution& cand, Side side,
                             const Path& a, const CadlagPath& z,
                             const CadlagPath& w, double horizon,
                             const std::vector<Eigen::VectorXd>& u_grid,
                             const std::vector<Eigen::VectorXd>& v_grid,
                             const ControlSet& u_set, const ControlSet& v_set,
                             const MinimaxOptions& opt = {});

// CSV export used by residual sweeps: path_id,side,residual,terminal_gap.
struct ResidualSweepRow {
  int path_id = 0;
  Side side = Side::lower;
  double residual = 0.0;
  double terminal_gap = 0.0;
};
std::string residual_sweep_csv(const std::vector<ResidualSweepRow>& rows);

struct SpotCheckOptions {
  int n_samples = 64;         // ball draws per test function
  int refine_iters = 20;      // coordinate-perturbation refinement steps
  std::uint64_t seed = 0;
  double sign_tol = 1e-7;     // allowed residual-sign slack
  double terminal_tol = 1e-9; // allowed terminal-bound slack
  MinimaxOptions minimax{};
};

struct SpotCheckEntry {
  int test_index = -1;
  double residual = 0.0;    // envelope of the shifted test function
  double touch_value = 0.0; // candidate value at the touching path
  double gap = 0.0;         // shift applied to the test function
  bool violation = false;   // residual sign inconsistent with `kind`
};

struct SpotCheckReport {
  Side side = Side::lower;
  SolutionKind kind = SolutionKind::sub;
  std::vector<SpotCheckEntry> entries;
  int n_violations = 0;
  double terminal_worst = 0.0;  // worst signed terminal gap of the candidate
  bool terminal_ok = true;
  nlohmann::json to_json() const;
};

// Necessary-condition spot check of the sub/super-solution property at one
// current time (= z.t_end()): for each test function, locate the extremum of
// candidate - test over sampled ball paths (plus seeded local refinement),
// shift the test function so it touches there, and check the sign of its
// envelope.  Finite sampling can refute the property, never certify it.
SpotCheckReport viscosity_spot_check(
    const GameCoefficients& c, const CandidateSolution& cand, Side side,
    SolutionKind kind, const HolderBall& ball,
    const std::vector<CandidateSolution>& test_family, const CadlagPath& z,
    const CadlagPath& w, double horizon,
    const std::vector<Eigen::VectorXd>& u_grid,
    const std::vector<Eigen::VectorXd>& v_grid, const ControlSet& u_set,
    const ControlSet& v_set, const SpotCheckOptions& opt = {});

struct ComparisonOptions {
  int n_samples = 64;      // ball draws for the ordering check
  int n_hypothesis = 64;   // sampled monotonicity probes of the envelope
  std::uint64_t seed = 0;
  double residual_tol = 1e-4;  // sub >= -tol, sup <= +tol on samples
  double order_tol = 1e-9;     // sub <= sup + tol
  MinimaxOptions minimax{};
};

struct ComparisonCheckReport {
  bool coefficients_markovian = true;  // probes saw no control-history use
  bool hypothesis_ok = false;          // envelope monotone on sampled slots
  double hypothesis_worst = 0.0;       // worst monotonicity violation
  bool residual_ok = false;            // candidates kept their claimed signs
  double sub_residual_min = 0.0;
  double sup_residual_max = 0.0;
  bool ordered = false;                // sub <= sup + tol everywhere sampled
  double max_violation = 0.0;          // worst (sub - sup) over the samples
  int witness = -1;                    // sample index of the worst violation
  double witness_time = 0.0;
  int n_samples = 0;
  nlohmann::json to_json() const;
};

// Sampled comparison test for classical sub/super-solution candidates of one
// envelope, for coefficients that read only the state path: first checks
// that the envelope is nonincreasing in y and nondecreasing in the
// second-order slot on sampled inputs, then that the candidates keep their
// claimed residual signs, then that sub <= sup on sampled ball paths at
// sampled times.  Control histories are synthesized as zero paths.
ComparisonCheckReport classical_comparison_check(
    const GameCoefficients& c, const CandidateSolution& sub,
    const CandidateSolution& sup, Side side, const HolderBall& ball,
    double horizon, const std::vector<Eigen::VectorXd>& u_grid,
    const std::vector<Eigen::VectorXd>& v_grid, const ControlSet& u_set,
    const ControlSet& v_set, const ComparisonOptions& opt = {});

}  // namespace szsdg
