#include "szsdg/catalog.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace szsdg {

namespace {

double cur(const CadlagPath& z) { return z.value_at1(z.t_end()); }
double curx(const Path& a) { return a.terminal()(0); }

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }
Eigen::MatrixXd mat1(double x) { return Eigen::MatrixXd::Constant(1, 1, x); }

double num(const nlohmann::json& p, const std::string& name,
           const char* key) {
  const auto& v = p.at(key);
  if (!v.is_number())
    throw std::invalid_argument("instance '" + name + "': parameter '" + key +
                                "' must be a number");
  return v.get<double>();
}

// Shared scaffolding: scalar state/noise/controls, constant histories at
// time zero, box control sets of the given radii.
Instance scalar_shell(const std::string& name, const nlohmann::json& p,
                      double u_radius, double v_radius) {
  Instance inst;
  inst.name = name;
  inst.params = p;
  inst.horizon = num(p, name, "horizon");
  if (!(inst.horizon > 0.0))
    throw std::invalid_argument("instance '" + name +
                                "': parameter 'horizon' must be positive");
  const double x0 = num(p, name, "x0");
  inst.initial = Path::constant(0.0, vec1(x0));
  inst.z0 = CadlagPath::constant(0.0, vec1(0.0));
  inst.w0 = CadlagPath::constant(0.0, vec1(0.0));
  inst.u_set = ControlSet::box1d(-u_radius, u_radius);
  inst.v_set = ControlSet::box1d(-v_radius, v_radius);
  inst.c.state_dim = inst.c.noise_dim = inst.c.u_dim = inst.c.v_dim = 1;
  inst.c.bound_M = 200.0;
  inst.c.lipschitz_L = 50.0;
  const double sigma = num(p, name, "sigma");
  inst.c.diffusion = [sigma](const Path&, const CadlagPath&,
                             const CadlagPath&) { return mat1(sigma); };
  return inst;
}

Instance make_lq(const nlohmann::json& p) {
  Instance inst = scalar_shell("lq", p, num(p, "lq", "u_radius"),
                               num(p, "lq", "v_radius"));
  const double a = num(p, "lq", "a"), b1 = num(p, "lq", "b1"),
               b2 = num(p, "lq", "b2"), q = num(p, "lq", "q"),
               r1 = num(p, "lq", "r1"), r2 = num(p, "lq", "r2"),
               qT = num(p, "lq", "q_terminal");
  inst.c.drift = [a, b1, b2](const Path& x, const CadlagPath& z,
                             const CadlagPath& w) {
    return vec1(a * curx(x) + b1 * cur(z) + b2 * cur(w));
  };
  inst.c.driver = [q, r1, r2](const Path& x, double, const Eigen::RowVectorXd&,
                              const CadlagPath& z, const CadlagPath& w) {
    const double xv = curx(x), uv = cur(z), vv = cur(w);
    return q * xv * xv + r1 * uv * uv - r2 * vv * vv;
  };
  inst.c.terminal_cost = [qT](const Path& x) {
    const double xv = curx(x);
    return qT * xv * xv;
  };
  inst.c.driver_depends_yq = false;
  inst.c.driver_y_lipschitz = 0.0;
  return inst;
}

Instance make_delay(const nlohmann::json& p) {
  Instance inst = scalar_shell("delay", p, num(p, "delay", "u_radius"),
                               num(p, "delay", "v_radius"));
  const double r = num(p, "delay", "r"), f1 = num(p, "delay", "f1"),
               f2 = num(p, "delay", "f2"), l1 = num(p, "delay", "l1"),
               l2 = num(p, "delay", "l2"),
               qT = num(p, "delay", "q_terminal");
  if (!(r > 0.0))
    throw std::invalid_argument(
        "instance 'delay': parameter 'r' must be positive");
  // The lagged read x(t - r) clamps at time zero, freezing the pre-history
  // at the initial value.
  inst.c.drift = [f1, f2, r](const Path& x, const CadlagPath& z,
                             const CadlagPath& w) {
    const double lag = x.value_at1(x.t_end() - r);
    return vec1(f1 * curx(x) + f2 * lag + cur(z) + cur(w));
  };
  inst.c.driver = [l1, l2, r](const Path& x, double,
                              const Eigen::RowVectorXd&, const CadlagPath& z,
                              const CadlagPath& w) {
    const double lag = x.value_at1(x.t_end() - r);
    const double uv = cur(z), vv = cur(w);
    return l1 * curx(x) * lag + l2 * (uv * uv - vv * vv);
  };
  inst.c.terminal_cost = [qT](const Path& x) {
    const double xv = curx(x);
    return qT * xv * xv;
  };
  inst.c.driver_depends_yq = false;
  inst.c.driver_y_lipschitz = 0.0;
  return inst;
}

Instance make_separated(const nlohmann::json& p) {
  const std::string n = "separated_hamiltonian";
  Instance inst =
      scalar_shell(n, p, num(p, n, "u_radius"), num(p, n, "v_radius"));
  const double a = num(p, n, "a"), q = num(p, n, "q"), r1 = num(p, n, "r1"),
               r2 = num(p, n, "r2"), qT = num(p, n, "q_terminal");
  // Control-free drift plus a driver that is a sum of a u-term and a v-term:
  // the two minimax orders then agree exactly, including in floating point.
  inst.c.drift = [a](const Path& x, const CadlagPath&, const CadlagPath&) {
    return vec1(a * curx(x));
  };
  inst.c.driver = [q, r1, r2](const Path& x, double, const Eigen::RowVectorXd&,
                              const CadlagPath& z, const CadlagPath& w) {
    const double xv = curx(x), uv = cur(z), vv = cur(w);
    return q * xv * xv + r1 * uv * uv - r2 * vv * vv;
  };
  inst.c.terminal_cost = [qT](const Path& x) {
    const double xv = curx(x);
    return qT * xv * xv;
  };
  inst.c.driver_depends_yq = false;
  inst.c.driver_y_lipschitz = 0.0;
  return inst;
}

Instance make_bilinear(const nlohmann::json& p) {
  const std::string n = "bilinear_coupled";
  Instance inst =
      scalar_shell(n, p, num(p, n, "u_radius"), num(p, n, "v_radius"));
  const double a = num(p, n, "a"), k = num(p, n, "coupling"),
               q = num(p, n, "q"), qT = num(p, n, "q_terminal");
  inst.c.drift = [a](const Path& x, const CadlagPath&, const CadlagPath&) {
    return vec1(a * curx(x));
  };
  inst.c.driver = [k, q](const Path& x, double, const Eigen::RowVectorXd&,
                         const CadlagPath& z, const CadlagPath& w) {
    const double xv = curx(x);
    return k * cur(z) * cur(w) + q * xv * xv;
  };
  inst.c.terminal_cost = [qT](const Path& x) {
    const double xv = curx(x);
    return qT * xv * xv;
  };
  inst.c.driver_depends_yq = false;
  inst.c.driver_y_lipschitz = 0.0;
  return inst;
}

Instance make_linear(const nlohmann::json& p) {
  Instance inst = scalar_shell("linear", p, num(p, "linear", "u_radius"),
                               num(p, "linear", "v_radius"));
  const double ly = num(p, "linear", "ly"), kq = num(p, "linear", "kq"),
               l0 = num(p, "linear", "l0"), lu = num(p, "linear", "lu"),
               lv = num(p, "linear", "lv"),
               mT = num(p, "linear", "m_terminal");
  inst.c.drift = [](const Path&, const CadlagPath&, const CadlagPath&) {
    return vec1(0.0);
  };
  inst.c.driver = [ly, kq, l0, lu, lv](const Path&, double y,
                                       const Eigen::RowVectorXd& q,
                                       const CadlagPath& z,
                                       const CadlagPath& w) {
    return ly * y + kq * q(0) + l0 + lu * cur(z) + lv * cur(w);
  };
  inst.c.terminal_cost = [mT](const Path& x) { return mT * curx(x); };
  inst.c.driver_depends_yq = true;
  inst.c.driver_y_lipschitz = std::abs(ly);
  return inst;
}

Instance make_coupled_square(const nlohmann::json& p) {
  const std::string n = "coupled_square";
  Instance inst;
  inst.name = n;
  inst.params = p;
  inst.horizon = num(p, n, "horizon");
  if (!(inst.horizon > 0.0))
    throw std::invalid_argument(
        "instance 'coupled_square': parameter 'horizon' must be positive");
  const double x0 = num(p, n, "x0"), sigma = num(p, n, "sigma");
  inst.initial = Path::constant(0.0, vec1(x0));
  inst.z0 = CadlagPath::constant(0.0, vec1(0.0));
  inst.w0 = CadlagPath::constant(0.0, vec1(0.0));
  const auto& lv = p.at("levels");
  if (!lv.is_array() || lv.empty())
    throw std::invalid_argument(
        "instance 'coupled_square': parameter 'levels' must be a non-empty "
        "array of numbers");
  std::vector<double> levels;
  for (const auto& e : lv) {
    if (!e.is_number())
      throw std::invalid_argument(
          "instance 'coupled_square': parameter 'levels' must be a non-empty "
          "array of numbers");
    levels.push_back(e.get<double>());
  }
  inst.u_set = ControlSet::finite1d(levels);
  inst.v_set = ControlSet::finite1d(levels);
  inst.c.state_dim = inst.c.noise_dim = inst.c.u_dim = inst.c.v_dim = 1;
  inst.c.bound_M = 200.0;
  inst.c.lipschitz_L = 50.0;
  inst.c.drift = [](const Path&, const CadlagPath&, const CadlagPath&) {
    return vec1(0.0);
  };
  inst.c.diffusion = [sigma](const Path&, const CadlagPath&,
                             const CadlagPath&) { return mat1(sigma); };
  inst.c.driver = [](const Path&, double, const Eigen::RowVectorXd&,
                     const CadlagPath& z, const CadlagPath& w) {
    const double s = cur(z) + cur(w);
    return s * s;
  };
  inst.c.terminal_cost = [](const Path&) { return 0.0; };
  inst.c.driver_depends_yq = false;
  inst.c.driver_y_lipschitz = 0.0;
  return inst;
}

}  // namespace

const std::vector<InstanceSchema>& catalog() {
  static const std::vector<InstanceSchema> entries = {
      {"lq",
       "scalar linear dynamics a*x + b1*u + b2*v with quadratic costs; the "
       "Markovian benchmark with a closed-form quadratic value",
       {{"a", 0.0},
        {"b1", 1.0},
        {"b2", 1.0},
        {"q", 0.5},
        {"r1", 1.0},
        {"r2", 2.0},
        {"q_terminal", 1.0},
        {"sigma", 1.0},
        {"x0", 1.0},
        {"horizon", 1.0},
        {"u_radius", 3.0},
        {"v_radius", 3.0}}},
      {"delay",
       "drift and running cost read the state lagged by r, so the value is "
       "genuinely path-dependent",
       {{"r", 0.25},
        {"f1", 0.5},
        {"f2", 0.5},
        {"l1", 1.0},
        {"l2", 1.0},
        {"q_terminal", 1.0},
        {"sigma", 1.0},
        {"x0", 1.0},
        {"horizon", 1.0},
        {"u_radius", 1.0},
        {"v_radius", 1.0}}},
      {"separated_hamiltonian",
       "control-free drift with driver q*x^2 + r1*u^2 - r2*v^2; the two "
       "minimax orders coincide exactly",
       {{"a", 0.5},
        {"q", 1.0},
        {"r1", 1.0},
        {"r2", 1.0},
        {"q_terminal", 1.0},
        {"sigma", 1.0},
        {"x0", 1.0},
        {"horizon", 1.0},
        {"u_radius", 2.0},
        {"v_radius", 2.0}}},
      {"bilinear_coupled",
       "driver coupling*u*v + q*x^2; the minimax order matters, giving a "
       "strictly positive gap between the two envelopes",
       {{"a", 0.0},
        {"coupling", 1.0},
        {"q", 0.0},
        {"q_terminal", 1.0},
        {"sigma", 1.0},
        {"x0", 1.0},
        {"horizon", 1.0},
        {"u_radius", 1.0},
        {"v_radius", 1.0}}},
      {"linear",
       "frozen state with a driver linear in (y, q, u, v); backward values "
       "obey scalar closed-form recursions",
       {{"ly", 0.5},
        {"kq", 0.25},
        {"l0", 0.1},
        {"lu", 1.0},
        {"lv", 1.0},
        {"m_terminal", 1.0},
        {"sigma", 1.0},
        {"x0", 1.0},
        {"horizon", 1.0},
        {"u_radius", 1.0},
        {"v_radius", 1.0}}},
      {"coupled_square",
       "driver (u+v)^2 with finite control levels and zero terminal cost; "
       "small enough for exhaustive strategy enumeration",
       {{"sigma", 1.0},
        {"x0", 0.0},
        {"horizon", 1.0},
        {"levels", nlohmann::json::array({-1.0, 0.0, 1.0})}}},
  };
  return entries;
}

Instance make_instance(const std::string& name, const nlohmann::json& params) {
  const InstanceSchema* schema = nullptr;
  for (const auto& s : catalog())
    if (s.name == name) {
      schema = &s;
      break;
    }
  if (schema == nullptr)
    throw std::invalid_argument("instance '" + name +
                                "' is not in the catalog");
  if (!params.is_object())
    throw std::invalid_argument("instance '" + name +
                                "': parameters must be an object");
  nlohmann::json resolved = schema->defaults;
  for (const auto& [key, value] : params.items()) {
    if (!resolved.contains(key))
      throw std::invalid_argument("instance '" + name +
                                  "': unknown parameter '" + key + "'");
    resolved[key] = value;
  }
  if (name == "lq") return make_lq(resolved);
  if (name == "delay") return make_delay(resolved);
  if (name == "separated_hamiltonian") return make_separated(resolved);
  if (name == "bilinear_coupled") return make_bilinear(resolved);
  if (name == "linear") return make_linear(resolved);
  return make_coupled_square(resolved);
}

}  // namespace szsdg
