#include <doctest.h>

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "szsdg/catalog.hpp"
#include "szsdg/errors.hpp"
#include "szsdg/game_value.hpp"
#include "szsdg/threads.hpp"

using namespace szsdg;

namespace {

Eigen::VectorXd v1(double x) { return Eigen::VectorXd::Constant(1, x); }

std::vector<Eigen::VectorXd> grid3() { return {v1(-1.0), v1(0.0), v1(1.0)}; }

// One-step deterministic game: dx = (u + v) dt, sigma = 0, cost x_T^2,
// x0 = 0, dt = 1 => J(u, v) = (u + v)^2.
GameCoefficients drift_game() {
  GameCoefficients c;
  c.drift = [](const Path& a, const CadlagPath& z, const CadlagPath& w) {
    const double t = a.t_end();
    return Eigen::VectorXd::Constant(1, z.value_at1(t) + w.value_at1(t));
  };
  c.diffusion = [](const Path&, const CadlagPath&, const CadlagPath&) {
    return Eigen::MatrixXd::Zero(1, 1);
  };
  c.driver = [](const Path&, double, const Eigen::RowVectorXd&,
                const CadlagPath&, const CadlagPath&) { return 0.0; };
  c.terminal_cost = [](const Path& a) {
    const double x = a.terminal()(0);
    return x * x;
  };
  c.driver_depends_yq = false;
  c.driver_y_lipschitz = 0.0;
  c.bound_M = 10.0;
  c.lipschitz_L = 10.0;
  return c;
}

}  // namespace

TEST_CASE("one-step saddle gap: exhaustive strategy tables as the oracle") {
  // enumerate all 27 response tables by hand, independent of the library
  const std::array<double, 3> pts{-1.0, 0.0, 1.0};
  auto cost = [](double u, double v) { return (u + v) * (u + v); };

  double lower_oracle = 1e99;  // min over maps alpha: V -> U of max_v
  for (int a0 = 0; a0 < 3; ++a0)
    for (int a1 = 0; a1 < 3; ++a1)
      for (int a2 = 0; a2 < 3; ++a2) {
        const std::array<int, 3> alpha{a0, a1, a2};
        double worst = -1e99;
        for (int iv = 0; iv < 3; ++iv)
          worst = std::max(worst, cost(pts[alpha[iv]], pts[iv]));
        lower_oracle = std::min(lower_oracle, worst);
      }
  double upper_oracle = -1e99;  // max over maps beta: U -> V of min_u
  for (int b0 = 0; b0 < 3; ++b0)
    for (int b1 = 0; b1 < 3; ++b1)
      for (int b2 = 0; b2 < 3; ++b2) {
        const std::array<int, 3> beta{b0, b1, b2};
        double best = 1e99;
        for (int iu = 0; iu < 3; ++iu)
          best = std::min(best, cost(pts[iu], pts[beta[iu]]));
        upper_oracle = std::max(upper_oracle, best);
      }
  CHECK(lower_oracle == 0.0);  // alpha: v -> -v cancels the drift
  CHECK(upper_oracle == 1.0);  // u = 0 concedes (0 + v)^2 at best

  const GameCoefficients c = drift_game();
  const Path x0 = Path::constant(0.0, v1(0.0));
  const CadlagPath z0 = CadlagPath::constant(0.0, v1(0.0));
  GameGridSpec spec;
  spec.n_steps = 1;
  for (const bool brute : {false, true}) {
    const ValueEstimate lo = lower_value_tree(c, x0, z0, z0, grid3(), grid3(),
                                              1.0, spec, brute);
    const ValueEstimate hi = upper_value_tree(c, x0, z0, z0, grid3(), grid3(),
                                              1.0, spec, brute);
    INFO("brute_force ", brute);
    CHECK(lo.value == lower_oracle);
    CHECK(hi.value == upper_oracle);
    CHECK(lo.method == "tree_exact");
    CHECK(hi.flag == (brute ? "brute_force" : "backward_induction"));
  }
}

TEST_CASE("coupled-square catalog instance: order matters, split does not") {
  const Instance inst = make_instance("coupled_square");
  for (int n_steps : {1, 2}) {
    GameGridSpec spec;
    spec.n_steps = n_steps;
    const auto ug = inst.u_set.grid_points(3);
    const ValueEstimate lo =
        lower_value_tree(inst.c, inst.initial, inst.z0, inst.w0, ug, ug,
                         inst.horizon, spec);
    const ValueEstimate hi =
        upper_value_tree(inst.c, inst.initial, inst.z0, inst.w0, ug, ug,
                         inst.horizon, spec);
    INFO("n_steps ", n_steps);
    // per step the driver contributes dt * (max-min of (u+v)^2); responder
    // cancellation gives 0, first-mover concession gives dt * 1 per step
    CHECK(lo.value == doctest::Approx(0.0));
    CHECK(hi.value == doctest::Approx(1.0).epsilon(1e-13));

    const DppReport dpp =
        check_dpp(inst.c, inst.initial, inst.z0, inst.w0, ug, ug,
                  inst.horizon, spec, n_steps > 1 ? 1 : 0);
    CHECK(dpp.lower_gap <= 1e-12);
    CHECK(dpp.upper_gap <= 1e-12);
  }
}

TEST_CASE("backward induction equals strategy enumeration on random games") {
  std::mt19937_64 rng(314);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int rep = 0; rep < 6; ++rep) {
    const double ax = 0.4 * unif(rng), au = unif(rng), av = unif(rng);
    const double cx = unif(rng), cuv = unif(rng), cu = 0.3 + 0.3 * unif(rng),
                 cv = 0.3 + 0.3 * unif(rng), sg = 0.3 + 0.3 * unif(rng),
                 mT = unif(rng);
    GameCoefficients c;
    c.drift = [=](const Path& a, const CadlagPath& z, const CadlagPath& w) {
      const double t = a.t_end();
      return Eigen::VectorXd::Constant(
          1, ax * a.terminal()(0) + au * z.value_at1(t) + av * w.value_at1(t));
    };
    c.diffusion = [=](const Path&, const CadlagPath&, const CadlagPath&) {
      return Eigen::MatrixXd::Constant(1, 1, sg);
    };
    c.driver = [=](const Path& a, double, const Eigen::RowVectorXd&,
                   const CadlagPath& z, const CadlagPath& w) {
      const double t = a.t_end();
      const double u = z.value_at1(t), v = w.value_at1(t);
      return cx * a.terminal()(0) + cu * u * u - cv * v * v + cuv * u * v;
    };
    c.terminal_cost = [=](const Path& a) { return mT * a.terminal()(0); };
    c.driver_depends_yq = false;
    c.driver_y_lipschitz = 0.0;
    c.bound_M = 50.0;
    c.lipschitz_L = 20.0;

    const Path x0 = Path::constant(0.0, v1(0.5 * unif(rng)));
    const CadlagPath z0 = CadlagPath::constant(0.0, v1(0.0));
    // response tables grow as |own|^(entries); alternate between a 1-step
    // 3x3 game and a 2-step 2x2 game to stay inside the enumeration budget
    GameGridSpec spec;
    spec.n_steps = rep % 2 == 0 ? 2 : 1;
    const int gp = rep % 2 == 0 ? 2 : 3;
    const auto ug = ControlSet::box1d(-1.0, 1.0).grid_points(gp);
    const auto vg = ControlSet::box1d(-1.0, 1.0).grid_points(gp);

    const double lo_b =
        lower_value_tree(c, x0, z0, z0, ug, vg, 1.0, spec, false).value;
    const double lo_e =
        lower_value_tree(c, x0, z0, z0, ug, vg, 1.0, spec, true).value;
    const double hi_b =
        upper_value_tree(c, x0, z0, z0, ug, vg, 1.0, spec, false).value;
    const double hi_e =
        upper_value_tree(c, x0, z0, z0, ug, vg, 1.0, spec, true).value;
    INFO("rep ", rep);
    CHECK(std::abs(lo_b - lo_e) <= 1e-12);
    CHECK(std::abs(hi_b - hi_e) <= 1e-12);
    CHECK(lo_b <= hi_b + 1e-12);

    const DppReport dpp = check_dpp(c, x0, z0, z0, ug, vg, 1.0, spec, 1);
    CHECK(dpp.lower_gap <= 1e-12);
    CHECK(dpp.upper_gap <= 1e-12);
  }
}

TEST_CASE("optimal response strategy is a saddle certificate in play") {
  const Instance inst =
      make_instance("coupled_square", {{"levels", {-1.0, 1.0}}});
  const auto g = inst.u_set.grid_points(2);
  GameGridSpec spec;
  spec.n_steps = 2;
  StrategyMap strat;
  const ValueEstimate lo =
      lower_value_tree(inst.c, inst.initial, inst.z0, inst.w0, g, g,
                       inst.horizon, spec, true, &strat);
  REQUIRE(strat.well_formed());
  CHECK(strat.side == 0);
  CHECK(strat.n_steps == 2);

  // enumerate every noise-adapted opponent openloop: 1 node at step 0 and 2
  // nodes at step 1 give 2^3 assignments
  double worst = -1e99;
  for (int m0 = 0; m0 < 2; ++m0)
    for (int m10 = 0; m10 < 2; ++m10)
      for (int m11 = 0; m11 < 2; ++m11) {
        const std::vector<std::vector<int>> open{{m0}, {m10, m11}};
        const double got =
            play_game_tree(inst.c, inst.initial, inst.z0, inst.w0, g, g,
                           inst.horizon, 2, strat, open);
        CHECK(got <= lo.value + 1e-12);
        worst = std::max(worst, got);
      }
  CHECK(worst == doctest::Approx(lo.value).epsilon(1e-12));
}

TEST_CASE("tree values are invariant to thread count and repetition") {
  const Instance inst = make_instance("lq");
  const auto ug = inst.u_set.grid_points(3);
  const auto vg = inst.v_set.grid_points(2);
  GameGridSpec spec;
  spec.n_steps = 3;
  std::vector<double> lows, highs;
  for (int threads : {1, 2, 5}) {
    set_max_threads(threads);
    lows.push_back(lower_value_tree(inst.c, inst.initial, inst.z0, inst.w0,
                                    ug, vg, inst.horizon, spec)
                       .value);
    highs.push_back(upper_value_tree(inst.c, inst.initial, inst.z0, inst.w0,
                                     ug, vg, inst.horizon, spec)
                        .value);
  }
  set_max_threads(0);  // restore default
  CHECK(lows[0] == lows[1]);
  CHECK(lows[1] == lows[2]);
  CHECK(highs[0] == highs[1]);
  CHECK(highs[1] == highs[2]);
  CHECK(lows[0] <= highs[0] + 1e-12);
}

TEST_CASE("work budget rejects oversized backward inductions") {
  const Instance inst = make_instance("lq");
  const auto ug = inst.u_set.grid_points(3);
  GameGridSpec spec;
  spec.n_steps = 3;
  spec.work_budget = 10;
  CHECK_THROWS_AS(lower_value_tree(inst.c, inst.initial, inst.z0, inst.w0, ug,
                                   ug, inst.horizon, spec),
                  BudgetExceeded);
}

TEST_CASE("value regularity probe: bounded difference ratios") {
  const Instance inst = make_instance("lq");
  const auto ug = inst.u_set.grid_points(3);
  GameGridSpec spec;
  spec.n_steps = 2;
  const Path dir = Path::constant(0.0, v1(1.0));
  const RegularityProbe probe = value_regularity_probe(
      inst.c, inst.initial, inst.z0, inst.w0, ug, ug, inst.horizon, spec, dir,
      {0.004, 0.008, 0.016, 0.032});
  REQUIRE(probe.rows.size() == 4);
  for (std::size_t i = 0; i < probe.rows.size(); ++i) {
    CHECK(probe.rows[i].d_input > 0.0);
    CHECK(std::isfinite(probe.rows[i].ratio_lower));
    if (i > 0) {
      CHECK(probe.rows[i].ratio_lower <=
            2.0 * probe.rows[i - 1].ratio_lower + 1e-9);
      CHECK(probe.rows[i].ratio_upper <=
            2.0 * probe.rows[i - 1].ratio_upper + 1e-9);
    }
  }
}

TEST_CASE("rule-family Monte-Carlo: singleton family equals its objective") {
  const Instance inst = make_instance("linear");
  const double uval = 0.3, vval = -0.6;
  FeedbackRule ur{"const_u", [=](double, const Path&) { return v1(uval); }};
  FeedbackRule vr{"const_v", [=](double, const Path&) { return v1(vval); }};

  const int n_steps = 8;
  const double dt = 1.0 / n_steps;
  double alpha = 1.0, beta = 0.0;
  for (int k = n_steps; k > 0; --k) {
    beta = (beta + dt * (0.25 * alpha + 0.1 + uval + vval)) / (1.0 - 0.5 * dt);
    alpha = alpha / (1.0 - 0.5 * dt);
  }
  const double oracle = alpha + beta;  // x0 = 1

  const ValueEstimate lo =
      lower_value_lsmc(inst.c, inst.initial, inst.z0, inst.w0, {ur}, {vr},
                       inst.horizon, 4000, n_steps, 77);
  const ValueEstimate hi =
      upper_value_lsmc(inst.c, inst.initial, inst.z0, inst.w0, {ur}, {vr},
                       inst.horizon, 4000, n_steps, 77);
  CHECK(lo.value == hi.value);  // singleton families: both orders identical
  CHECK(std::abs(lo.value - oracle) <
        std::max(3.0 * lo.std_err, 5e-2 * std::abs(oracle)));
  CHECK(lo.metadata.at("selected_u_rule").get<std::string>() == "const_u");
}

TEST_CASE("rule-family Monte-Carlo selects the saddle gains on the quadratic "
          "benchmark") {
  const Instance inst = make_instance("lq");
  auto gain_rule = [](const char* name, double g) {
    return FeedbackRule{
        name, [g](double, const Path& x) { return v1(g * x.terminal()(0)); }};
  };
  const std::vector<FeedbackRule> u_rules{gain_rule("u_opt", -1.0),
                                          gain_rule("u_zero", 0.0)};
  const std::vector<FeedbackRule> v_rules{gain_rule("v_opt", 0.5),
                                          gain_rule("v_half", 0.25)};
  const ValueEstimate lo =
      lower_value_lsmc(inst.c, inst.initial, inst.z0, inst.w0, u_rules,
                       v_rules, inst.horizon, 4000, 16, 2026);
  // saddle value x0^2 + sigma^2 T = 2; discretization bias is O(dt)
  CHECK(lo.metadata.at("selected_u_rule").get<std::string>() == "u_opt");
  CHECK(lo.metadata.at("selected_v_rule").get<std::string>() == "v_opt");
  CHECK(std::abs(lo.value - 2.0) < std::max(3.0 * lo.std_err, 8e-2));
}
