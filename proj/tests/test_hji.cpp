#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "szsdg/catalog.hpp"
#include "szsdg/hji.hpp"

using namespace szsdg;

namespace {

Eigen::VectorXd v1(double x) { return Eigen::VectorXd::Constant(1, x); }

struct Point {
  Path a;
  CadlagPath z, w;
  HamiltonianInput in;
};

Point lq_point(const Instance& inst, double t, double y, double p, double pp,
               std::uint64_t seed) {
  Point pt;
  pt.a = sample_holder_ball({0.45, 2.0, 2.0}, t, seed);
  pt.z = CadlagPath::constant(t, Eigen::VectorXd::Zero(inst.c.u_dim));
  pt.w = CadlagPath::constant(t, Eigen::VectorXd::Zero(inst.c.v_dim));
  pt.in = HamiltonianInput::make(inst.c, pt.a, pt.z, pt.w, y,
                                 Eigen::VectorXd::Constant(1, p),
                                 Eigen::MatrixXd::Constant(1, 1, pp));
  return pt;
}

}  // namespace

TEST_CASE("Hamiltonian bracket: hand formula on the quadratic benchmark") {
  const Instance inst = make_instance("lq");  // drift u+v, driver .5x^2+u^2-2v^2
  const Point pt = lq_point(inst, 0.5, 0.3, 1.25, 0.8, 21);
  const double x = pt.a.terminal()(0);
  for (double u : {-2.0, 0.5}) {
    for (double v : {-1.0, 1.5}) {
      const double by_hand = 1.25 * (u + v) + 0.5 * x * x + u * u -
                             2.0 * v * v + 0.5 * 0.8;
      CHECK(hamiltonian(inst.c, pt.in, v1(u), v1(v)) ==
            doctest::Approx(by_hand).epsilon(1e-13));
    }
  }
}

TEST_CASE("grid envelopes equal a hand-rolled double loop") {
  const Instance inst = make_instance("lq");
  const Point pt = lq_point(inst, 0.4, 0.0, -0.7, 1.1, 22);
  const auto ug = inst.u_set.grid_points(4);
  const auto vg = inst.v_set.grid_points(3);

  double lower = -1e300;  // max over v of min over u
  for (const auto& v : vg) {
    double inner = 1e300;
    for (const auto& u : ug)
      inner = std::min(inner, hamiltonian(inst.c, pt.in, u, v));
    lower = std::max(lower, inner);
  }
  double upper = 1e300;  // min over u of max over v
  for (const auto& u : ug) {
    double inner = -1e300;
    for (const auto& v : vg)
      inner = std::max(inner, hamiltonian(inst.c, pt.in, u, v));
    upper = std::min(upper, inner);
  }
  CHECK(lower_hamiltonian(inst.c, pt.in, {}, ug, vg) == lower);
  CHECK(upper_hamiltonian(inst.c, pt.in, {}, ug, vg) == upper);
  CHECK(lower <= upper);

  const IsaacsReport rep = isaacs_gap(inst.c, pt.in, {}, ug, vg);
  CHECK(rep.lower == lower);
  CHECK(rep.upper == upper);
  CHECK(rep.raw_gap == upper - lower);
}

TEST_CASE("grid growth moves the envelopes in the right direction") {
  const Instance inst = make_instance("lq");
  const Point pt = lq_point(inst, 0.6, 0.1, 0.9, -0.4, 23);
  const auto u2 = inst.u_set.grid_points(2);
  const auto u4 = inst.u_set.grid_points(4);  // u4 contains u2
  const auto v2 = inst.v_set.grid_points(2);
  const auto v4 = inst.v_set.grid_points(4);

  // more minimizer options can only lower; more maximizer options only raise
  CHECK(lower_hamiltonian(inst.c, pt.in, {}, u4, v2) <=
        lower_hamiltonian(inst.c, pt.in, {}, u2, v2) + 1e-15);
  CHECK(lower_hamiltonian(inst.c, pt.in, {}, u2, v4) >=
        lower_hamiltonian(inst.c, pt.in, {}, u2, v2) - 1e-15);

  // refinement passes approach the analytic saddle from a coarse start:
  // min_u [p u + u^2] = -p^2/4, max_v [p v - 2 v^2] = p^2/8 on wide boxes
  MinimaxOptions opt;
  opt.refine_passes = 12;
  opt.u_box = &inst.u_set;
  opt.v_box = &inst.v_set;
  const double x = pt.a.terminal()(0);
  const double p = 0.9;
  const double exact = -p * p / 4.0 + p * p / 8.0 + 0.5 * x * x +
                       0.5 * -0.4;
  const double refined = lower_hamiltonian(inst.c, pt.in, {}, u2, v2, opt);
  CHECK(refined == doctest::Approx(exact).epsilon(5e-5));
}

TEST_CASE("minimax order gap: zero for separated costs, positive under "
          "coupling") {
  const Instance sep = make_instance("separated_hamiltonian");
  std::mt19937_64 rng(2027);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int rep = 0; rep < 25; ++rep) {
    const Point pt =
        lq_point(sep, 0.2 + 0.02 * rep, normal(rng), normal(rng), normal(rng),
                 500 + static_cast<std::uint64_t>(rep));
    const auto ug = sep.u_set.grid_points(2 + rep % 3);
    const auto vg = sep.v_set.grid_points(2 + (rep + 1) % 3);
    const IsaacsReport rep_out = isaacs_gap(sep.c, pt.in, {}, ug, vg);
    // the bracket splits as A(u) - B(v): both orders pick the same entries,
    // identical floating point included
    CHECK(rep_out.raw_gap == 0.0);
  }

  const Instance bil = make_instance("bilinear_coupled", {{"coupling", 1.5}});
  const auto pm = std::vector<Eigen::VectorXd>{v1(-1.0), v1(1.0)};
  for (int rep = 0; rep < 10; ++rep) {
    const Point pt = lq_point(bil, 0.5, normal(rng), normal(rng), normal(rng),
                              900 + static_cast<std::uint64_t>(rep));
    const IsaacsReport rep_out = isaacs_gap(bil.c, pt.in, {}, pm, pm);
    // brute force over the four (u, v) sign pairs
    double lower = -1e300, upper = 1e300;
    for (double v : {-1.0, 1.0}) {
      double inner = 1e300;
      for (double u : {-1.0, 1.0})
        inner = std::min(inner, hamiltonian(bil.c, pt.in, v1(u), v1(v)));
      lower = std::max(lower, inner);
    }
    for (double u : {-1.0, 1.0}) {
      double inner = -1e300;
      for (double v : {-1.0, 1.0})
        inner = std::max(inner, hamiltonian(bil.c, pt.in, v1(u), v1(v)));
      upper = std::min(upper, inner);
    }
    CHECK(rep_out.raw_gap == upper - lower);
    CHECK(rep_out.gap == doctest::Approx(2.0 * 1.5).epsilon(1e-13));
  }
}

TEST_CASE("cylinder candidates carry exact derivatives") {
  CylinderFunction g;
  g.g = [](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& i) {
    return t + x(0) * x(0) + 3.0 * i(0);
  };
  g.g_t = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return 1.0;
  };
  g.g_x = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return Eigen::VectorXd(2.0 * x);
  };
  g.g_i = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::VectorXd::Constant(1, 3.0);
  };
  g.g_xx = [](double, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return Eigen::MatrixXd(2.0 * Eigen::MatrixXd::Identity(x.size(), x.size()));
  };
  const CandidateSolution cand = cylinder_candidate(g);

  const Path a = Path::scalar({0.0, 0.25, 0.5}, {1.0, -0.5, 2.0});
  const CadlagPath z = CadlagPath::constant(0.5, v1(0.0));
  const double x = 2.0;
  REQUIRE(static_cast<bool>(cand.dt));
  REQUIRE(static_cast<bool>(cand.dx));
  REQUIRE(static_cast<bool>(cand.dxx));
  // freezing the path advances t and grows the integral at rate x
  CHECK(cand.dt(a, z, z) == doctest::Approx(1.0 + 3.0 * x).epsilon(1e-14));
  CHECK(cand.dx(a, z, z)(0) == doctest::Approx(2.0 * x).epsilon(1e-14));
  CHECK(cand.dxx(a, z, z)(0, 0) == doctest::Approx(2.0).epsilon(1e-14));

  // a candidate with only the value falls back to finite differences
  CandidateSolution numeric;
  numeric.f = cand.f;
  const Instance inst = make_instance("lq");
  const auto ug = inst.u_set.grid_points(3);
  const auto vg = inst.v_set.grid_points(3);
  const ResidualReport with_cb = phji_residual(
      inst.c, cand, Side::lower, a, z, z, 1.0, ug, vg, inst.u_set, inst.v_set);
  const ResidualReport numeric_rep =
      phji_residual(inst.c, numeric, Side::lower, a, z, z, 1.0, ug, vg,
                    inst.u_set, inst.v_set);
  CHECK(numeric_rep.residual ==
        doctest::Approx(with_cb.residual).epsilon(1e-4));
}

TEST_CASE("stationary residual identities on the quadratic benchmark") {
  // V(t, x) = x^2 + (T - t) solves the backward equation for the default
  // benchmark: time slope -1, saddle bracket +1, so the residual vanishes
  const Instance inst = make_instance("lq");
  const oracles::RiccatiSolution ric =
      oracles::solve_riccati(0.0, 1.0, 1.0, 0.5, 1.0, 2.0, 1.0, 1.0, 1.0);
  CHECK(ric.K_at(0.0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(ric.c_at(0.0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(ric.value(0.0, 1.0) == doctest::Approx(2.0).epsilon(1e-10));

  auto quadratic = [&](double shift) {
    return markovian_candidate(
        [shift](double t, const Eigen::VectorXd& x) {
          return x.squaredNorm() + (1.0 + shift) * (1.0 - t);
        },
        [shift](double, const Eigen::VectorXd&) { return -(1.0 + shift); },
        [](double, const Eigen::VectorXd& x) {
          return Eigen::VectorXd(2.0 * x);
        },
        [](double, const Eigen::VectorXd& x) {
          return Eigen::MatrixXd(2.0 *
                                 Eigen::MatrixXd::Identity(x.size(), x.size()));
        });
  };

  MinimaxOptions opt;
  opt.refine_passes = 8;
  opt.u_box = &inst.u_set;
  opt.v_box = &inst.v_set;
  const auto ug = inst.u_set.grid_points(5);
  const auto vg = inst.v_set.grid_points(5);

  std::vector<ResidualSweepRow> rows;
  for (int i = 0; i < 8; ++i) {
    const double t = 0.1 + 0.1 * i;
    const Path a = sample_holder_ball({0.45, 2.0, 2.0}, t, 40 + i);
    const CadlagPath z = CadlagPath::constant(t, v1(0.0));
    for (Side side : {Side::lower, Side::upper}) {
      const ResidualReport exact = phji_residual(
          inst.c, quadratic(0.0), side, a, z, z, 1.0, ug, vg, inst.u_set,
          inst.v_set, opt);
      CHECK(std::abs(exact.residual) < 1e-4);
      CHECK(exact.terminal_gap < 1e-12);
      rows.push_back({i, side, exact.residual, exact.terminal_gap});
    }
    // shrinking the time slope makes a strict subsolution, growing it a
    // strict supersolution; the residual shifts by exactly the slope change
    const ResidualReport sub = phji_residual(inst.c, quadratic(-0.5),
                                             Side::lower, a, z, z, 1.0, ug,
                                             vg, inst.u_set, inst.v_set, opt);
    const ResidualReport sup = phji_residual(inst.c, quadratic(0.5),
                                             Side::lower, a, z, z, 1.0, ug,
                                             vg, inst.u_set, inst.v_set, opt);
    CHECK(sub.residual > 0.5 - 1e-3);
    CHECK(sup.residual < -0.5 + 1e-3);
  }

  const std::string csv = residual_sweep_csv(rows);
  CHECK(csv.rfind("path_id,side,residual,terminal_gap\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 16);
}

TEST_CASE("viscosity spot check accepts true half-solutions and flags fakes") {
  const Instance inst = make_instance("lq");
  auto quadratic = [&](double slope) {
    return markovian_candidate(
        [slope](double t, const Eigen::VectorXd& x) {
          return x.squaredNorm() + slope * (1.0 - t);
        },
        [slope](double, const Eigen::VectorXd&) { return -slope; },
        [](double, const Eigen::VectorXd& x) {
          return Eigen::VectorXd(2.0 * x);
        },
        [](double, const Eigen::VectorXd& x) {
          return Eigen::MatrixXd(2.0 *
                                 Eigen::MatrixXd::Identity(x.size(), x.size()));
        });
  };
  const HolderBall ball{0.45, 2.0, 2.0};
  const CadlagPath z = CadlagPath::constant(0.5, v1(0.0));
  const auto ug = inst.u_set.grid_points(5);
  const auto vg = inst.v_set.grid_points(5);
  SpotCheckOptions opt;
  opt.n_samples = 24;
  opt.refine_iters = 8;
  opt.seed = 7;
  opt.sign_tol = 1e-3;
  opt.minimax.refine_passes = 6;
  opt.minimax.u_box = &inst.u_set;
  opt.minimax.v_box = &inst.v_set;

  // slope 0.5 has residual +0.5 everywhere: a strict subsolution
  const SpotCheckReport ok = viscosity_spot_check(
      inst.c, quadratic(0.5), Side::lower, SolutionKind::sub, ball,
      {quadratic(0.5)}, z, z, 1.0, ug, vg, inst.u_set, inst.v_set, opt);
  CHECK(ok.n_violations == 0);
  CHECK_FALSE(ok.entries.empty());

  // slope 2 has residual -1 everywhere: not a subsolution, and the family
  // containing the candidate itself must expose that
  const SpotCheckReport bad = viscosity_spot_check(
      inst.c, quadratic(2.0), Side::lower, SolutionKind::sub, ball,
      {quadratic(2.0)}, z, z, 1.0, ug, vg, inst.u_set, inst.v_set, opt);
  CHECK(bad.n_violations > 0);

  // and the same candidate is a valid supersolution
  const SpotCheckReport sup = viscosity_spot_check(
      inst.c, quadratic(2.0), Side::lower, SolutionKind::super, ball,
      {quadratic(2.0)}, z, z, 1.0, ug, vg, inst.u_set, inst.v_set, opt);
  CHECK(sup.n_violations == 0);
  CHECK(sup.to_json().at("n_violations").get<int>() == 0);
}

TEST_CASE("classical comparison check on an ordered half-solution pair") {
  const Instance inst = make_instance("lq");
  auto quadratic = [&](double slope) {
    return markovian_candidate(
        [slope](double t, const Eigen::VectorXd& x) {
          return x.squaredNorm() + slope * (1.0 - t);
        },
        [slope](double, const Eigen::VectorXd&) { return -slope; },
        [](double, const Eigen::VectorXd& x) {
          return Eigen::VectorXd(2.0 * x);
        },
        [](double, const Eigen::VectorXd& x) {
          return Eigen::MatrixXd(2.0 *
                                 Eigen::MatrixXd::Identity(x.size(), x.size()));
        });
  };
  ComparisonOptions opt;
  opt.n_samples = 48;
  opt.n_hypothesis = 24;
  opt.seed = 11;
  opt.minimax.refine_passes = 6;
  opt.minimax.u_box = &inst.u_set;
  opt.minimax.v_box = &inst.v_set;
  const HolderBall ball{0.45, 2.0, 2.0};
  const auto ug = inst.u_set.grid_points(5);
  const auto vg = inst.v_set.grid_points(5);

  const ComparisonCheckReport rep = classical_comparison_check(
      inst.c, quadratic(0.5), quadratic(1.5), Side::lower, ball, 1.0, ug, vg,
      inst.u_set, inst.v_set, opt);
  CHECK(rep.coefficients_markovian);
  CHECK(rep.hypothesis_ok);
  CHECK(rep.residual_ok);
  CHECK(rep.sub_residual_min > -1e-9);
  CHECK(rep.sup_residual_max < 1e-9);
  CHECK(rep.ordered);
  CHECK(rep.max_violation <= opt.order_tol);
  CHECK(rep.n_samples == 48);
  const nlohmann::json j = rep.to_json();
  CHECK(j.at("ordered").get<bool>());
}

TEST_CASE("Hamiltonian input validation") {
  const Instance inst = make_instance("lq");
  const Path a = sample_holder_ball({0.45, 2.0, 2.0}, 0.5, 3);
  const CadlagPath good = CadlagPath::constant(0.5, v1(0.0));
  const CadlagPath late = CadlagPath::constant(0.7, v1(0.0));
  CHECK_THROWS_AS(
      HamiltonianInput::make(inst.c, a, good, late, 0.0,
                             Eigen::VectorXd::Zero(1),
                             Eigen::MatrixXd::Zero(1, 1)),
      std::invalid_argument);
  CHECK_THROWS_AS(
      HamiltonianInput::make(inst.c, a, good, good, 0.0,
                             Eigen::VectorXd::Zero(2),
                             Eigen::MatrixXd::Zero(1, 1)),
      std::invalid_argument);
}
