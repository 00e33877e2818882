#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

// Path-space primitives: piecewise-linear state paths, piecewise-constant
// (right-continuous) control paths, compact path balls, and the metric /
// extension operations everything else is built on.
//
// Conventions used throughout:
//  * a path lives on [0, t_end]; the stored grid is strictly increasing;
//  * point norms are Euclidean, path norms are sup-over-time of those;
//  * all operations are pure functions returning new values.  The append()
//    members exist so simulators can grow a scratch path in place; a path
//    that has been handed out is treated as immutable.

namespace szsdg {

class Path {
 public:
  Path() = default;
  // values are row-major: values[i*dim + c] is coordinate c at grid[i].
  Path(std::vector<double> grid, std::vector<double> values, int dim);

  static Path constant(double t_end, const Eigen::VectorXd& point,
                       int n_segments = 1);
  static Path scalar(std::vector<double> grid, std::vector<double> values);

  int dim() const { return dim_; }
  std::size_t size() const { return grid_.size(); }
  double t_end() const { return grid_.empty() ? 0.0 : grid_.back(); }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& raw_values() const { return values_; }

  Eigen::Map<const Eigen::VectorXd> point(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  Eigen::Map<const Eigen::VectorXd> terminal() const {
    return point(grid_.size() - 1);
  }
  // Linear interpolation between grid points; clamped outside [0, t_end].
  Eigen::VectorXd value_at(double s) const;
  double value_at1(double s) const;  // scalar paths

  double sup_norm() const;  // sup over time of the Euclidean point norm

  void append(double t, const Eigen::VectorXd& point);
  void pop();  // drop the last grid point (recursion helper)
  void replace_terminal(const Eigen::VectorXd& point);
  // Overwrite *this with the first n_points of src, reusing capacity.
  void assign_prefix_of(const Path& src, std::size_t n_points);

  bool operator==(const Path& o) const {
    return dim_ == o.dim_ && grid_ == o.grid_ && values_ == o.values_;
  }

 private:
  std::vector<double> grid_;
  std::vector<double> values_;
  int dim_ = 0;
  void validate() const;
};

// Right-continuous piecewise-constant path: value on [grid[i], grid[i+1}) is
// values[i]; the domain end may extend past the last knot.
class CadlagPath {
 public:
  CadlagPath() = default;
  CadlagPath(std::vector<double> grid, std::vector<double> values, int dim,
             double t_end = -1.0);

  static CadlagPath constant(double t_end, const Eigen::VectorXd& point);
  static CadlagPath scalar(std::vector<double> grid,
                           std::vector<double> values, double t_end = -1.0);

  int dim() const { return dim_; }
  std::size_t size() const { return grid_.size(); }
  double t_end() const { return t_end_; }
  double domain_start() const { return grid_.empty() ? 0.0 : grid_.front(); }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& raw_values() const { return values_; }

  Eigen::Map<const Eigen::VectorXd> point(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  Eigen::VectorXd value_at(double s) const;
  double value_at1(double s) const;

  double sup_norm() const;

  void append(double t, const Eigen::VectorXd& point);  // knot past the last
  void pop();
  void set_t_end(double t);
  void replace_terminal(const Eigen::VectorXd& point);
  // Overwrite *this with src restricted to knots <= s (t_end becomes s).
  void assign_truncated(const CadlagPath& src, double s);

  bool operator==(const CadlagPath& o) const {
    return dim_ == o.dim_ && t_end_ == o.t_end_ && grid_ == o.grid_ &&
           values_ == o.values_;
  }

 private:
  std::vector<double> grid_;
  std::vector<double> values_;
  int dim_ = 0;
  double t_end_ = 0.0;
  std::size_t locate(double s) const;
  void validate() const;
};

// Compact set of admissible control points: a box [lo, hi] per axis and,
// optionally, an explicit finite list of points.
struct ControlSet {
  int dim = 1;
  Eigen::VectorXd lo, hi;
  std::vector<Eigen::VectorXd> points;  // non-empty => finite set

  static ControlSet box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
  static ControlSet box1d(double lo, double hi);
  static ControlSet finite1d(const std::vector<double>& pts);

  bool is_finite() const { return !points.empty(); }
  bool contains(const Eigen::VectorXd& u, double tol = 0.0) const;
  // Tensor grid of per_axis points per axis spanning the box (or the stored
  // finite points when present).
  std::vector<Eigen::VectorXd> grid_points(int per_axis) const;
};

// Closed ball of paths: Holder modulus (exponent kappa) <= mu and sup norm
// <= mu0.  Compact in the path metric, which is what makes it usable as the
// test-path domain for the differential checks.
struct HolderBall {
  double kappa = 0.5;
  double mu = 1.0;
  double mu0 = 1.0;
};

// ----------------------------------------------------------------- extensions

// Freeze the terminal value for an extra delta of time.
Path flat_extend(const Path& p, double delta);
CadlagPath flat_extend(const CadlagPath& p, double delta);

// Bump the terminal value by h, leaving [0, t_end) unchanged up to a ramp of
// width eps_v (a fixed 1e-9 fraction of the horizon).
Path vertical_extend(const Path& p, const Eigen::VectorXd& h);
double vertical_eps(double t_end);

// Replace the control value exactly at the path's final time.
CadlagPath vertical_control_sub(const CadlagPath& z, const Eigen::VectorXd& u,
                                const ControlSet* admissible = nullptr);

// Follow `init` on [0, t) and `tail` on [t, T], t = init.t_end().
CadlagPath concat(const CadlagPath& init, const CadlagPath& tail,
                  const ControlSet* admissible = nullptr);

// --------------------------------------------------------------------- metric

// Horizon gap plus uniform distance after flat-extending the shorter path.
double d_infty(const Path& a, const Path& b);
double d_infty(const CadlagPath& a, const CadlagPath& b);

// Certified upper bound on the Skorohod-type distance: best monotone
// knot-to-knot alignment (dynamic program), never above d_infty.
double skorohod_d(const CadlagPath& a, const CadlagPath& b);

// ---------------------------------------------------------------- Holder ball

// sup over s < r of |a_s - a_r| / |s - r|^kappa; exact for the piecewise
// linear representation (the continuous sup is attained at grid pairs).
double holder_modulus(const Path& p, double kappa);

bool in_holder_ball(const Path& p, const HolderBall& ball);

// Radial clamp of the history toward the terminal value: points that deviate
// from a_t by more than (mu-eps)|t-r|^kappa are pulled back onto that
// envelope.  Output stays in the ball and within 4*mu0*eps/mu of the input.
Path perturb_path(const Path& p, const HolderBall& ball, double eps);

struct SampleOptions {
  int grid_size = 65;
  int max_rejections = 100;
};
// Deterministic-per-seed random path strictly inside the ball.
Path sample_holder_ball(const HolderBall& ball, double t_end,
                        std::uint64_t seed, const SampleOptions& opt = {});

}  // namespace szsdg
