#include "szsdg/path.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace szsdg {

namespace {

bool finite_all(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void check_strictly_increasing(const std::vector<double>& g,
                               const char* what) {
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1]))
      throw std::invalid_argument(std::string(what) +
                                  ": grid must be strictly increasing");
}

}  // namespace

// ------------------------------------------------------------------- Path

Path::Path(std::vector<double> grid, std::vector<double> values, int dim)
    : grid_(std::move(grid)), values_(std::move(values)), dim_(dim) {
  validate();
}

void Path::validate() const {
  if (dim_ <= 0) throw std::invalid_argument("Path: dim must be positive");
  if (grid_.empty()) throw std::invalid_argument("Path: empty grid");
  if (grid_.front() != 0.0)
    throw std::invalid_argument("Path: grid must start at 0");
  check_strictly_increasing(grid_, "Path");
  if (values_.size() != grid_.size() * static_cast<std::size_t>(dim_))
    throw std::invalid_argument("Path: values size != grid size * dim");
  if (!finite_all(values_) || !finite_all(grid_))
    throw std::invalid_argument("Path: non-finite entry");
}

Path Path::constant(double t_end, const Eigen::VectorXd& point,
                    int n_segments) {
  if (t_end < 0.0) throw std::invalid_argument("Path: negative t_end");
  std::vector<double> g, v;
  int dim = static_cast<int>(point.size());
  int n_pts = (t_end == 0.0) ? 1 : n_segments + 1;
  for (int i = 0; i < n_pts; ++i) {
    g.push_back(t_end * i / std::max(1, n_pts - 1));
    for (int c = 0; c < dim; ++c) v.push_back(point[c]);
  }
  return Path(std::move(g), std::move(v), dim);
}

Path Path::scalar(std::vector<double> grid, std::vector<double> values) {
  return Path(std::move(grid), std::move(values), 1);
}

Eigen::VectorXd Path::value_at(double s) const {
  Eigen::VectorXd out(dim_);
  if (s <= grid_.front()) {
    out = point(0);
    return out;
  }
  if (s >= grid_.back()) {
    out = terminal();
    return out;
  }
  auto it = std::upper_bound(grid_.begin(), grid_.end(), s);
  std::size_t j = static_cast<std::size_t>(it - grid_.begin());
  double w = (s - grid_[j - 1]) / (grid_[j] - grid_[j - 1]);
  out = (1.0 - w) * point(j - 1) + w * point(j);
  return out;
}

double Path::value_at1(double s) const {
  if (dim_ != 1) throw std::invalid_argument("Path: value_at1 needs dim 1");
  return value_at(s)[0];
}

double Path::sup_norm() const {
  double m = 0.0;
  for (std::size_t i = 0; i < grid_.size(); ++i)
    m = std::max(m, point(i).norm());
  return m;
}

void Path::append(double t, const Eigen::VectorXd& pt) {
  if (pt.size() != dim_) throw std::invalid_argument("Path: append dim");
  if (!grid_.empty() && !(t > grid_.back()))
    throw std::invalid_argument("Path: append time must increase");
  grid_.push_back(t);
  for (int c = 0; c < dim_; ++c) values_.push_back(pt[c]);
}

void Path::pop() {
  if (grid_.size() <= 1) throw std::logic_error("Path: pop on minimal path");
  grid_.pop_back();
  values_.resize(values_.size() - static_cast<std::size_t>(dim_));
}

void Path::replace_terminal(const Eigen::VectorXd& pt) {
  if (pt.size() != dim_) throw std::invalid_argument("Path: terminal dim");
  std::copy(pt.data(), pt.data() + dim_,
            values_.end() - static_cast<std::ptrdiff_t>(dim_));
}

void Path::assign_prefix_of(const Path& src, std::size_t n_points) {
  if (n_points == 0 || n_points > src.size())
    throw std::invalid_argument("Path: prefix length out of range");
  dim_ = src.dim_;
  grid_.assign(src.grid_.begin(),
               src.grid_.begin() + static_cast<std::ptrdiff_t>(n_points));
  values_.assign(src.values_.begin(),
                 src.values_.begin() +
                     static_cast<std::ptrdiff_t>(n_points * src.dim_));
}

// --------------------------------------------------------------- CadlagPath

CadlagPath::CadlagPath(std::vector<double> grid, std::vector<double> values,
                       int dim, double t_end)
    : grid_(std::move(grid)),
      values_(std::move(values)),
      dim_(dim),
      t_end_(t_end < 0.0 ? (grid_.empty() ? 0.0 : grid_.back()) : t_end) {
  validate();
}

void CadlagPath::validate() const {
  if (dim_ <= 0)
    throw std::invalid_argument("CadlagPath: dim must be positive");
  if (grid_.empty()) throw std::invalid_argument("CadlagPath: empty grid");
  if (grid_.front() < 0.0)
    throw std::invalid_argument("CadlagPath: negative time");
  check_strictly_increasing(grid_, "CadlagPath");
  if (t_end_ < grid_.back())
    throw std::invalid_argument("CadlagPath: t_end before last knot");
  if (values_.size() != grid_.size() * static_cast<std::size_t>(dim_))
    throw std::invalid_argument("CadlagPath: values size != grid size * dim");
  if (!finite_all(values_) || !finite_all(grid_))
    throw std::invalid_argument("CadlagPath: non-finite entry");
}

CadlagPath CadlagPath::constant(double t_end, const Eigen::VectorXd& point) {
  std::vector<double> g{0.0}, v(point.data(), point.data() + point.size());
  return CadlagPath(std::move(g), std::move(v),
                    static_cast<int>(point.size()), t_end);
}

CadlagPath CadlagPath::scalar(std::vector<double> grid,
                              std::vector<double> values, double t_end) {
  return CadlagPath(std::move(grid), std::move(values), 1, t_end);
}

std::size_t CadlagPath::locate(double s) const {
  if (s <= grid_.front()) return 0;
  auto it = std::upper_bound(grid_.begin(), grid_.end(), s);
  return static_cast<std::size_t>(it - grid_.begin()) - 1;
}

Eigen::VectorXd CadlagPath::value_at(double s) const { return point(locate(s)); }

double CadlagPath::value_at1(double s) const {
  if (dim_ != 1)
    throw std::invalid_argument("CadlagPath: value_at1 needs dim 1");
  return values_[locate(s)];
}

double CadlagPath::sup_norm() const {
  double m = 0.0;
  for (std::size_t i = 0; i < grid_.size(); ++i)
    m = std::max(m, point(i).norm());
  return m;
}

void CadlagPath::append(double t, const Eigen::VectorXd& pt) {
  if (pt.size() != dim_) throw std::invalid_argument("CadlagPath: append dim");
  if (!(t > grid_.back()))
    throw std::invalid_argument("CadlagPath: append time must increase");
  grid_.push_back(t);
  for (int c = 0; c < dim_; ++c) values_.push_back(pt[c]);
  t_end_ = std::max(t_end_, t);
}

void CadlagPath::pop() {
  if (grid_.size() <= 1)
    throw std::logic_error("CadlagPath: pop on minimal path");
  grid_.pop_back();
  values_.resize(values_.size() - static_cast<std::size_t>(dim_));
  t_end_ = grid_.back();
}

void CadlagPath::set_t_end(double t) {
  if (t < grid_.back())
    throw std::invalid_argument("CadlagPath: t_end before last knot");
  t_end_ = t;
}

void CadlagPath::replace_terminal(const Eigen::VectorXd& pt) {
  if (pt.size() != dim_)
    throw std::invalid_argument("CadlagPath: terminal dim");
  std::copy(pt.data(), pt.data() + dim_,
            values_.end() - static_cast<std::ptrdiff_t>(dim_));
}

void CadlagPath::assign_truncated(const CadlagPath& src, double s) {
  if (src.grid_.empty() || s < src.grid_.front())
    throw std::invalid_argument("CadlagPath: truncation before domain start");
  std::size_t n = 1;
  while (n < src.grid_.size() && src.grid_[n] <= s) ++n;
  dim_ = src.dim_;
  grid_.assign(src.grid_.begin(),
               src.grid_.begin() + static_cast<std::ptrdiff_t>(n));
  values_.assign(src.values_.begin(),
                 src.values_.begin() +
                     static_cast<std::ptrdiff_t>(n * src.dim_));
  t_end_ = s;
}

// --------------------------------------------------------------- ControlSet

ControlSet ControlSet::box(const Eigen::VectorXd& lo,
                           const Eigen::VectorXd& hi) {
  if (lo.size() != hi.size() || lo.size() == 0)
    throw std::invalid_argument("ControlSet: lo/hi size mismatch");
  for (int i = 0; i < lo.size(); ++i)
    if (!(lo[i] <= hi[i]))
      throw std::invalid_argument("ControlSet: requires lo <= hi");
  ControlSet s;
  s.dim = static_cast<int>(lo.size());
  s.lo = lo;
  s.hi = hi;
  return s;
}

ControlSet ControlSet::box1d(double lo, double hi) {
  Eigen::VectorXd l(1), h(1);
  l << lo;
  h << hi;
  return box(l, h);
}

ControlSet ControlSet::finite1d(const std::vector<double>& pts) {
  if (pts.empty()) throw std::invalid_argument("ControlSet: empty point list");
  ControlSet s;
  s.dim = 1;
  double lo = pts[0], hi = pts[0];
  for (double p : pts) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
    Eigen::VectorXd u(1);
    u << p;
    s.points.push_back(u);
  }
  s.lo = Eigen::VectorXd::Constant(1, lo);
  s.hi = Eigen::VectorXd::Constant(1, hi);
  return s;
}

bool ControlSet::contains(const Eigen::VectorXd& u, double tol) const {
  if (u.size() != dim) return false;
  if (is_finite()) {
    for (const auto& p : points)
      if ((u - p).norm() <= tol) return true;
    return false;
  }
  for (int i = 0; i < dim; ++i)
    if (u[i] < lo[i] - tol || u[i] > hi[i] + tol) return false;
  return true;
}

std::vector<Eigen::VectorXd> ControlSet::grid_points(int per_axis) const {
  if (is_finite()) return points;
  if (per_axis < 1) throw std::invalid_argument("ControlSet: per_axis >= 1");
  std::vector<Eigen::VectorXd> out;
  std::vector<int> idx(dim, 0);
  for (;;) {
    Eigen::VectorXd u(dim);
    for (int i = 0; i < dim; ++i) {
      double w = per_axis == 1 ? 0.5
                               : static_cast<double>(idx[i]) / (per_axis - 1);
      u[i] = lo[i] + w * (hi[i] - lo[i]);
    }
    out.push_back(u);
    int k = 0;
    while (k < dim && ++idx[k] == per_axis) idx[k++] = 0;
    if (k == dim) break;
  }
  return out;
}

// --------------------------------------------------------------- extensions

Path flat_extend(const Path& p, double delta) {
  if (delta < 0.0)
    throw std::invalid_argument("flat_extend: negative extension");
  if (delta == 0.0) return p;
  Path out = p;
  out.append(p.t_end() + delta, p.terminal());
  return out;
}

CadlagPath flat_extend(const CadlagPath& p, double delta) {
  if (delta < 0.0)
    throw std::invalid_argument("flat_extend: negative extension");
  CadlagPath out = p;
  out.set_t_end(p.t_end() + delta);
  return out;
}

double vertical_eps(double t_end) { return 1e-9 * t_end; }

Path vertical_extend(const Path& p, const Eigen::VectorXd& h) {
  if (h.size() != p.dim())
    throw std::invalid_argument("vertical_extend: dim mismatch");
  Path out = p;
  Eigen::VectorXd bumped = p.terminal();
  bumped += h;
  if (p.size() >= 2) {
    double eps = vertical_eps(p.t_end());
    double pre = p.t_end() - eps;
    // Keep a pre-terminal anchor so the bump only lives on a width-eps ramp;
    // skip the insert when an anchor from an earlier bump already sits
    // inside the window.
    if (p.grid()[p.size() - 2] < pre && eps > 0.0) {
      // The anchor takes the interpolated value, so the path is unchanged
      // as a function outside the ramp (a terminal-value anchor would bend
      // the preceding segment by O(eps), which second differences amplify
      // by 1/h^2).
      Eigen::VectorXd keep = p.value_at(pre);
      out.pop();
      out.append(pre, keep);
      out.append(p.t_end(), bumped);
      return out;
    }
  }
  out.replace_terminal(bumped);
  return out;
}

CadlagPath vertical_control_sub(const CadlagPath& z, const Eigen::VectorXd& u,
                                const ControlSet* admissible) {
  if (u.size() != z.dim())
    throw std::invalid_argument("vertical_control_sub: dim mismatch");
  if (admissible && !admissible->contains(u, 1e-12))
    throw std::invalid_argument(
        "vertical_control_sub: value outside the admissible control set");
  CadlagPath out = z;
  if (z.grid().back() == z.t_end()) {
    out.replace_terminal(u);
  } else {
    out.append(z.t_end(), u);
  }
  return out;
}

CadlagPath concat(const CadlagPath& init, const CadlagPath& tail,
                  const ControlSet* admissible) {
  if (tail.size() == 0) return init;
  if (init.dim() != tail.dim())
    throw std::invalid_argument("concat: dim mismatch");
  if (tail.t_end() <= init.t_end()) return init;  // nothing after t survives
  double t = init.t_end();
  if (tail.domain_start() != t)
    throw std::invalid_argument(
        "concat: tail must start exactly at init.t_end (grids misaligned)");
  if (admissible) {
    for (std::size_t i = 0; i < init.size(); ++i)
      if (!admissible->contains(init.point(i), 1e-12))
        throw std::invalid_argument("concat: init value outside control set");
    for (std::size_t i = 0; i < tail.size(); ++i)
      if (!admissible->contains(tail.point(i), 1e-12))
        throw std::invalid_argument("concat: tail value outside control set");
  }
  std::vector<double> g;
  std::vector<double> v;
  int dim = init.dim();
  for (std::size_t i = 0; i < init.size(); ++i) {
    if (init.grid()[i] >= t) continue;  // the tail owns [t, T]
    g.push_back(init.grid()[i]);
    for (int c = 0; c < dim; ++c) v.push_back(init.point(i)[c]);
  }
  for (std::size_t i = 0; i < tail.size(); ++i) {
    g.push_back(tail.grid()[i]);
    for (int c = 0; c < dim; ++c) v.push_back(tail.point(i)[c]);
  }
  return CadlagPath(std::move(g), std::move(v), dim, tail.t_end());
}

// ------------------------------------------------------------------- metric

namespace {

// Union of two grids restricted to [0, T].
std::vector<double> merged_times(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  std::vector<double> m;
  m.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(m));
  m.erase(std::unique(m.begin(), m.end()), m.end());
  return m;
}

}  // namespace

double d_infty(const Path& a, const Path& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("d_infty: dimension mismatch");
  double gap = std::abs(a.t_end() - b.t_end());
  // Evaluate on the union grid; both interpolants are linear between union
  // knots, so the sup of the difference is attained there.
  double sup = 0.0;
  for (double s : merged_times(a.grid(), b.grid()))
    sup = std::max(sup, (a.value_at(s) - b.value_at(s)).norm());
  return gap + sup;
}

double d_infty(const CadlagPath& a, const CadlagPath& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("d_infty: dimension mismatch");
  double gap = std::abs(a.t_end() - b.t_end());
  double sup = 0.0;
  for (double s : merged_times(a.grid(), b.grid()))
    sup = std::max(sup, (a.value_at(s) - b.value_at(s)).norm());
  return gap + sup;
}

double skorohod_d(const CadlagPath& a, const CadlagPath& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("skorohod_d: dimension mismatch");
  double gap = std::abs(a.t_end() - b.t_end());
  // Dynamic program over monotone knot-to-knot alignments; the time
  // deformation is piecewise linear through the matched knots, so its
  // distortion and the value mismatch are both controlled at the knots.
  std::size_t m = a.size(), n = b.size();
  std::vector<double> prev(n), cur(n);
  auto cost = [&](std::size_t i, std::size_t j) {
    return std::max(std::abs(a.grid()[i] - b.grid()[j]),
                    (a.point(i) - b.point(j)).norm());
  };
  for (std::size_t j = 0; j < n; ++j) {
    double reach = (j == 0) ? 0.0 : prev[j - 1];
    prev[j] = std::max(reach, cost(0, j));
  }
  for (std::size_t i = 1; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double reach = prev[j];
      if (j > 0) reach = std::min(reach, std::min(prev[j - 1], cur[j - 1]));
      cur[j] = std::max(reach, cost(i, j));
    }
    std::swap(prev, cur);
  }
  double aligned = prev[n - 1];
  // The identity deformation is always admissible, so never exceed d_infty.
  double plain = d_infty(a, b) - gap;
  return gap + std::min(aligned, plain);
}

// -------------------------------------------------------------- Holder ball

double holder_modulus(const Path& p, double kappa) {
  if (!(kappa > 0.0) || !(kappa <= 1.0))
    throw std::invalid_argument("holder_modulus: kappa must be in (0, 1]");
  if (p.size() < 2) return 0.0;
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      double dt = p.grid()[j] - p.grid()[i];
      m = std::max(m, (p.point(j) - p.point(i)).norm() / std::pow(dt, kappa));
    }
  return m;
}

bool in_holder_ball(const Path& p, const HolderBall& ball) {
  return holder_modulus(p, ball.kappa) <= ball.mu && p.sup_norm() <= ball.mu0;
}

Path perturb_path(const Path& p, const HolderBall& ball, double eps) {
  if (!(eps > 0.0) || !(eps <= ball.mu / 2.0))
    throw std::invalid_argument("perturb_path: eps must be in (0, mu/2]");
  if (!in_holder_ball(p, ball))
    throw std::invalid_argument("perturb_path: path outside the ball");
  double t = p.t_end();
  Eigen::VectorXd at = p.terminal();
  std::vector<double> vals;
  vals.reserve(p.raw_values().size());
  double level = ball.mu - eps;
  for (std::size_t i = 0; i < p.size(); ++i) {
    Eigen::VectorXd dev = p.point(i) - at;
    double dn = dev.norm();
    double thr = level * std::pow(t - p.grid()[i], ball.kappa);
    Eigen::VectorXd out;
    if (dn <= thr || dn == 0.0) {
      out = p.point(i);
    } else {
      out = at + (thr / dn) * dev;
    }
    for (int c = 0; c < p.dim(); ++c) vals.push_back(out[c]);
  }
  return Path(p.grid(), std::move(vals), p.dim());
}

Path sample_holder_ball(const HolderBall& ball, double t_end,
                        std::uint64_t seed, const SampleOptions& opt) {
  if (opt.grid_size < 1)
    throw std::invalid_argument("sample_holder_ball: grid_size >= 1");
  if (!(ball.mu >= 0.0) || !(ball.mu0 >= 0.0))
    throw std::invalid_argument("sample_holder_ball: negative radius");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n_modes = 12;
  for (int attempt = 0; attempt < opt.max_rejections; ++attempt) {
    std::vector<double> grid(opt.grid_size);
    std::vector<double> vals(grid.size());
    for (int i = 0; i < opt.grid_size; ++i)
      grid[i] = t_end * i / std::max(1, opt.grid_size - 1);
    double drift = normal(rng);
    std::vector<double> amp(n_modes);
    for (int k = 0; k < n_modes; ++k) amp[k] = normal(rng);
    for (int i = 0; i < opt.grid_size; ++i) {
      double s = t_end > 0.0 ? grid[i] / t_end : 0.0;
      double x = drift * s;
      for (int k = 0; k < n_modes; ++k)
        x += amp[k] * std::sin((k + 1) * M_PI * s) /
             std::pow(k + 1.0, 1.2);
      vals[i] = x;
    }
    Path raw(grid, vals, 1);
    double mod = holder_modulus(raw, ball.kappa);
    double sup = raw.sup_norm();
    double scale = 1.0;
    if (mod > 0.0) scale = std::min(scale, 0.95 * ball.mu / mod);
    if (sup > 0.0) scale = std::min(scale, 0.95 * ball.mu0 / sup);
    for (double& v : vals) v *= scale;
    Path out(std::move(grid), std::move(vals), 1);
    if (in_holder_ball(out, ball)) return out;
  }
  throw std::runtime_error(
      "sample_holder_ball: rejection budget exhausted; try a larger mu or "
      "mu0");
}

}  // namespace szsdg
