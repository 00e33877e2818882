#pragma once

// Test-side oracles, implemented independently of the library under test.
// Nothing in here calls into the szsdg sources beyond what a caller of the
// public API could compute by hand.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracles {

// Scalar zero-sum linear-quadratic game
//   dx = (a x + b1 u + b2 v) dt + sigma dB,
//   J  = E[ \int_t^T (q x^2 + r1 u^2 - r2 v^2) ds + qT x_T^2 ].
// The saddle value is V(t, x) = K(t) x^2 + c(t) with
//   K' = -2 a K + K^2 (b1^2 / r1 - b2^2 / r2) - q,   K(T) = qT,
//   c(t) = sigma^2 \int_t^T K(s) ds,
// and saddle feedback u* = -(b1 K / r1) x, v* = (b2 K / r2) x.
struct RiccatiSolution {
  double a = 0.0, b1 = 1.0, b2 = 1.0, q = 0.0, r1 = 1.0, r2 = 1.0;
  double qT = 1.0, sigma = 1.0, T = 1.0;
  std::vector<double> ts, K, c;  // forward grids; K.back() == qT, c.back() == 0

  double rhs(double k) const {
    return -2.0 * a * k + k * k * (b1 * b1 / r1 - b2 * b2 / r2) - q;
  }
  double K_at(double t) const { return interp(K, t); }
  double c_at(double t) const { return interp(c, t); }
  double dK_at(double t) const { return rhs(K_at(t)); }
  double dc_at(double t) const { return -sigma * sigma * K_at(t); }
  double value(double t, double x) const { return K_at(t) * x * x + c_at(t); }
  double u_gain(double t) const { return -b1 * K_at(t) / r1; }
  double v_gain(double t) const { return b2 * K_at(t) / r2; }

 private:
  double interp(const std::vector<double>& f, double t) const {
    if (ts.size() < 2) throw std::logic_error("riccati oracle: not solved");
    if (t <= ts.front()) return f.front();
    if (t >= ts.back()) return f.back();
    const double h = ts[1] - ts[0];
    const std::size_t i =
        std::min(ts.size() - 2, static_cast<std::size_t>((t - ts.front()) / h));
    const double s = (t - ts[i]) / (ts[i + 1] - ts[i]);
    return (1.0 - s) * f[i] + s * f[i + 1];
  }
};

// Classic RK4 integration of the Riccati equation backward from T, then a
// trapezoid accumulation for c.
inline RiccatiSolution solve_riccati(double a, double b1, double b2, double q,
                                     double r1, double r2, double qT,
                                     double sigma, double T,
                                     int n_grid = 4096) {
  RiccatiSolution s;
  s.a = a;
  s.b1 = b1;
  s.b2 = b2;
  s.q = q;
  s.r1 = r1;
  s.r2 = r2;
  s.qT = qT;
  s.sigma = sigma;
  s.T = T;
  const double h = T / n_grid;
  s.ts.resize(n_grid + 1);
  s.K.resize(n_grid + 1);
  s.c.resize(n_grid + 1);
  for (int i = 0; i <= n_grid; ++i) s.ts[i] = i * h;
  s.K[n_grid] = qT;
  for (int i = n_grid; i > 0; --i) {
    const double k = s.K[i];
    const double k1 = s.rhs(k);
    const double k2 = s.rhs(k - 0.5 * h * k1);
    const double k3 = s.rhs(k - 0.5 * h * k2);
    const double k4 = s.rhs(k - h * k3);
    s.K[i - 1] = k - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!std::isfinite(s.K[i - 1]))
      throw std::runtime_error("riccati oracle: blow-up before t = 0");
  }
  s.c[n_grid] = 0.0;
  for (int i = n_grid; i > 0; --i)
    s.c[i - 1] =
        s.c[i] + sigma * sigma * 0.5 * h * (s.K[i] + s.K[i - 1]);
  return s;
}

}  // namespace oracles
