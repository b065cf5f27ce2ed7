#include <doctest.h>

#include <cmath>

#include "mixlq/synthesis.hpp"
#include "support/problems.hpp"

using namespace mixlq;
using namespace mixlq::testing;

namespace {

struct Pipeline {
  ProblemSpec spec;
  RiccatiSolution riccati;
  GainSchedule gains;
};

Pipeline run(ProblemSpec spec, int steps) {
  const RegularityClass cls = validate(spec);
  Pipeline p{spec, solve_riccati(spec, cls, TimeGrid::aligned(spec, steps)), {}};
  p.gains = build_gain_schedule(p.spec, p.riccati);
  return p;
}

}  // namespace

TEST_CASE("tanh problem gains") {
  const Pipeline p = run(tanh_problem(), 256);
  for (int i = 0; i <= p.gains.grid.steps; i += 32) {
    const double p1 = p.riccati.P1[i](0, 0);
    const double p2 = p.riccati.P2[i](0, 0);
    CHECK(p.gains.M2[i](0, 0) == doctest::Approx(-p1).epsilon(1e-12));
    CHECK(p.gains.M1[i](0, 0) == doctest::Approx(-p2).epsilon(1e-12));
    CHECK(p.gains.M3[i](0, 0) == doctest::Approx(-p2).epsilon(1e-12));
  }
}

TEST_CASE("primary and alternate gain formulas agree") {
  for (std::uint64_t seed = 60; seed < 70; ++seed) {
    ProblemSpec spec = random_regular_problem(seed, {.n = 3, .l1 = 2, .l2 = 2, .d = 2});
    const Pipeline p = run(spec, 64);
    const auto& f = spec.schedule.frames[0];
    for (int i : {0, 31, 64}) {
      const Gains a = gains_at(p.riccati.P1[i], p.riccati.P2[i], f);
      const Gains b = gains_alternate(p.riccati.P1[i], p.riccati.P2[i], f);
      CHECK(max_abs(a.M1 - b.M1) <= 1e-10 * std::max(1.0, max_abs(a.M1)));
      CHECK(max_abs(a.M3 - b.M3) <= 1e-10 * std::max(1.0, max_abs(a.M3)));
    }
  }
}

TEST_CASE("gains are stationary points of the Hamiltonian") {
  // With P1, P2 fixed, u1 = M1 xbar and u2 = M2 xt + M3 xbar minimize
  //   xbar'(P2B1 u1 + P2B2 u2bar) + sum_j |Cj x + D1j u1 + D2j u2|^2_P1 / 2
  //   + (|u1|^2_R1 + E|u2|^2_R2) / 2
  // so the first-order conditions below vanish.
  ProblemSpec spec = random_regular_problem(71, {.n = 2, .l1 = 1, .l2 = 2, .d = 2});
  const Pipeline p = run(spec, 32);
  const auto& f = spec.schedule.frames[0];
  const MatrixXd& P1 = p.riccati.P1[0];
  const MatrixXd& P2 = p.riccati.P2[0];
  const Gains g = gains_at(P1, P2, f);
  const VectorXd xbar = VectorXd::LinSpaced(2, 0.7, -0.4);
  const VectorXd xt = VectorXd::LinSpaced(2, -0.3, 1.1);
  const VectorXd u1 = g.M1 * xbar;
  const VectorXd u2bar = g.M3 * xbar;
  const VectorXd u2t = g.M2 * xt;
  VectorXd r1 = f.B1.transpose() * P2 * xbar + f.R1 * u1;
  VectorXd r2bar = f.B2.transpose() * P2 * xbar + f.R2 * u2bar;
  VectorXd r2t = f.B2.transpose() * P1 * xt + f.R2 * u2t;
  for (int j = 0; j < 2; ++j) {
    const VectorXd kbar = P1 * (f.C[j] * xbar + f.D1[j] * u1 + f.D2[j] * u2bar);
    const VectorXd kt = P1 * (f.C[j] * xt + f.D2[j] * u2t);
    r1 += f.D1[j].transpose() * kbar;
    r2bar += f.D2[j].transpose() * kbar;
    r2t += f.D2[j].transpose() * kt;
  }
  CHECK(r1.norm() <= 1e-12);
  CHECK(r2bar.norm() <= 1e-12);
  CHECK(r2t.norm() <= 1e-12);
}

TEST_CASE("without the deterministic control M2 equals M3") {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const Pipeline p = run(random_regular_problem(seed, {.l1 = 0}), 256);
    for (int i = 0; i <= p.gains.grid.steps; ++i) {
      CHECK(max_abs(p.gains.M2[i] - p.gains.M3[i]) <= 1e-10);
    }
  }
}

TEST_CASE("closed loop matrices") {
  ProblemSpec spec = random_regular_problem(80);
  const Pipeline p = run(spec, 64);
  const ClosedLoopSystem cl = build_closed_loop(p.spec, p.gains);
  const auto& f = spec.schedule.frames[0];
  for (int i = 0; i <= 64; i += 16) {
    const MatrixXd& M1 = p.gains.M1[i];
    const MatrixXd& M2 = p.gains.M2[i];
    const MatrixXd& M3 = p.gains.M3[i];
    CHECK(max_abs(cl.drift_state[i] - (f.A + f.B2 * M2)) <= 1e-14);
    CHECK(max_abs(cl.mean_generator[i] - (cl.drift_state[i] + cl.drift_mean[i])) <= 1e-12);
    CHECK(max_abs(cl.mean_generator[i] - (f.A + f.B1 * M1 + f.B2 * M3)) <= 1e-12);
    CHECK(max_abs(cl.diff_mean[1][i] - (f.D1[1] * M1 + f.D2[1] * (M3 - M2))) <= 1e-12);
  }
}

TEST_CASE("gain schedule follows the coefficient schedule") {
  ProblemSpec spec = piecewise_problem(90);
  const Pipeline p = run(spec, 64);
  CHECK(&node_frame(p.spec, p.gains.grid, 0) == &p.spec.schedule.frames[0]);
  CHECK(&node_frame(p.spec, p.gains.grid, 48) == &p.spec.schedule.frames[1]);
  CHECK(&node_frame(p.spec, p.gains.grid, 64) == &p.spec.schedule.frames[1]);
}

TEST_CASE("closed loop rejects a foreign grid") {
  ProblemSpec spec = random_regular_problem(81);
  Pipeline p = run(spec, 64);
  p.gains.grid.horizon = 2.0;
  CHECK_THROWS_AS(build_closed_loop(p.spec, p.gains), Error);
}
