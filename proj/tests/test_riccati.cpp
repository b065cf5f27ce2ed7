#include <doctest.h>

#include <cmath>

#include "mixlq/riccati.hpp"
#include "mixlq/synthesis.hpp"
#include "support/problems.hpp"

using namespace mixlq;
using namespace mixlq::testing;

namespace {

RiccatiSolution solve(ProblemSpec spec, int steps) {
  const RegularityClass cls = validate(spec);
  return solve_riccati(spec, cls, TimeGrid::aligned(spec, steps));
}

double sup_gap(const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b) {
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, max_abs(a[i] - b[i]));
  return gap;
}

// Largest node error against a much finer reference on the coarse nodes.
double error_vs(const std::vector<MatrixXd>& coarse, const std::vector<MatrixXd>& fine) {
  const std::size_t stride = (fine.size() - 1) / (coarse.size() - 1);
  double err = 0.0;
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    err = std::max(err, max_abs(coarse[i] - fine[i * stride]));
  }
  return err;
}

}  // namespace

TEST_CASE("scalar Riccati closed form") {
  const RiccatiSolution sol = solve(riccati_oracle_problem(), 512);
  CHECK(std::abs(sol.P1.front()(0, 0) - 0.5) <= 1e-8);
  for (int i = 0; i <= sol.grid.steps; i += 64) {
    const double exact = 1.0 / (1.0 + (1.0 - sol.grid.time(i)));
    CHECK(std::abs(sol.P1[i](0, 0) - exact) <= 1e-8);
  }
}

TEST_CASE("P1 reduces to a Lyapunov integral without control effect") {
  // b2 = d2 = 0: P1' = -q, so P1(t) = T - t.
  const RiccatiSolution sol = solve(scalar_problem({.b1 = 1, .q = 1, .r1 = 1, .r2 = 1}), 512);
  CHECK(std::abs(sol.P1.front()(0, 0) - 1.0) <= 1e-12);
}

TEST_CASE("no-noise problem matches the classical Riccati equation") {
  const RiccatiSolution sol = solve(tanh_problem(), 512);
  REQUIRE(sol.K);
  CHECK(sup_gap(sol.P2, *sol.K) <= 1e-8);
  CHECK(std::abs(sol.P2.front()(0, 0) - kTanhP2) <= 1e-8);
  // P1 only sees u2: tanh(T - t).
  CHECK(std::abs(sol.P1.front()(0, 0) - std::tanh(1.0)) <= 1e-8);
}

TEST_CASE("without the deterministic control P2 equals P1") {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const RiccatiSolution sol =
        solve(random_regular_problem(seed, {.l1 = 0}), 256);
    CHECK(sup_gap(sol.P1, sol.P2) <= 1e-8);
    REQUIRE(sol.K);
    CHECK(sup_gap(sol.P2, *sol.K) <= 1e-8);
  }
}

TEST_CASE("solutions are symmetric and ordered") {
  const RiccatiSolution sol = solve(random_regular_problem(4, {.n = 3, .l1 = 2, .l2 = 1}), 256);
  for (int i = 0; i <= sol.grid.steps; ++i) {
    CHECK(asymmetry(sol.P1[i]) == 0.0);
    CHECK(asymmetry(sol.P2[i]) == 0.0);
    CHECK(min_eigenvalue(sol.P2[i]) >= -1e-8);
    // The deterministic controller sees less, so its value is larger.
    CHECK(min_eigenvalue(sol.P2[i] - (*sol.K)[i]) >= -1e-8);
  }
}

TEST_CASE("terminal conditions") {
  ProblemSpec spec = random_regular_problem(9);
  const RiccatiSolution sol = solve(spec, 64);
  CHECK(sol.P1.back() == spec.G);
  CHECK(sol.P2.back() == spec.G);
  CHECK(sol.K->back() == spec.G);
}

TEST_CASE("RK4 refinement factor") {
  for (std::uint64_t seed : {31u, 32u}) {
    ProblemSpec spec = random_regular_problem(seed, {.T = 2.0});
    const RegularityClass cls = validate(spec);
    const RiccatiSolution ref = solve_riccati(spec, cls, TimeGrid{8192, spec.horizon});
    const RiccatiSolution s64 = solve_riccati(spec, cls, TimeGrid{64, spec.horizon});
    const RiccatiSolution s128 = solve_riccati(spec, cls, TimeGrid{128, spec.horizon});
    const double f1 = error_vs(s64.P1, ref.P1) / error_vs(s128.P1, ref.P1);
    const double f2 = error_vs(s64.P2, ref.P2) / error_vs(s128.P2, ref.P2);
    INFO("seed " << seed << " factors " << f1 << " " << f2);
    CHECK(f1 >= 8.0);
    CHECK(f2 >= 8.0);
  }
}

TEST_CASE("P2 right-hand side agrees with its unrearranged gain form") {
  for (std::uint64_t seed = 40; seed < 45; ++seed) {
    ProblemSpec spec = random_regular_problem(seed, {.n = 3, .l1 = 2, .l2 = 2, .d = 2});
    const RiccatiSolution sol = solve(spec, 64);
    const auto& f = spec.schedule.frames[0];
    for (int i : {0, 32, 64}) {
      const MatrixXd a = p2_rhs(sol.P1[i], sol.P2[i], f);
      const MatrixXd b = p2_rhs_from_gains(sol.P1[i], sol.P2[i], f);
      CHECK(max_abs(a - b) <= 1e-10 * std::max(1.0, max_abs(a)));
    }
  }
}

TEST_CASE("structure maps") {
  ProblemSpec spec = random_regular_problem(50, {.n = 3, .l1 = 2, .l2 = 2, .d = 2});
  validate(spec);
  const auto& f = spec.schedule.frames[0];
  const MatrixXd S = spec.G;
  const StructureMaps m = eval_structure_maps(S, f);
  CHECK(m.U.rows() == 6);
  CHECK(asymmetry(m.Qtilde) <= 1e-12);
  CHECK(min_eigenvalue(m.Qtilde) >= -1e-10);
  CHECK(min_eigenvalue(m.U) >= -1e-10);
  CHECK(min_eigenvalue(m.Nmap) >= -1e-10);
  CHECK(max_abs(m.Lambda2 * m.Lambda2_inv - MatrixXd::Identity(2, 2)) <= 1e-12);

  SUBCASE("S = 0 leaves Q and A unchanged") {
    const StructureMaps z = eval_structure_maps(MatrixXd::Zero(3, 3), f);
    CHECK(max_abs(z.Qtilde - f.Q) <= 1e-14);
    CHECK(max_abs(z.Atilde - f.A) <= 1e-14);
  }
}

TEST_CASE("singular classes keep P1 positive definite") {
  for (ProblemSpec spec : {singular_r2_problem(), singular_r1_problem()}) {
    const RiccatiSolution sol = solve(spec, 512);
    for (const auto& p : sol.P1) CHECK(min_eigenvalue(p) > 0.0);
  }
}

TEST_CASE("blow-up is reported with its time") {
  // P1 = exp(10 (T - t)) overflows the threshold before t = 0.
  ProblemSpec spec = scalar_problem({.a = 5, .b1 = 1, .q = 0, .g = 1, .T = 3});
  try {
    solve(spec, 512);
    FAIL("expected BlowUp");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BlowUp);
    REQUIRE(e.time());
    CHECK(*e.time() > 0.0);
    CHECK(*e.time() < 3.0 - std::log(1e12) / 10.0 + 0.01);
  }
}

TEST_CASE("time grid alignment") {
  ProblemSpec spec = piecewise_problem(3);
  spec.schedule.breakpoints[1] = 0.3;
  validate(spec);
  const TimeGrid grid = TimeGrid::aligned(spec, 512);
  CHECK(grid.steps >= 512);
  bool hit = false;
  for (int i = 0; i <= grid.steps; ++i) hit = hit || grid.time(i) == 0.3;
  CHECK(hit);
  const auto frames = step_frames(spec, grid);
  CHECK(frames.front() == 0);
  CHECK(frames.back() == 1);
  CHECK_THROWS_AS(step_frames(spec, TimeGrid{10, 2.0}), Error);
}

TEST_CASE("algebraic Riccati pair for the scalar reference") {
  ProblemSpec spec = are_problem();
  const RegularityClass cls = validate(spec);
  const AREResult are = solve_algebraic(spec, cls);
  CHECK(std::abs(are.P1inf(0, 0) - 1.0) <= 1e-6);
  CHECK(std::abs(are.P2inf(0, 0) - 1.0 / std::sqrt(2.0)) <= 1e-6);
  CHECK(are.residual1 <= 1e-5);
  CHECK(are.residual2 <= 1e-5);
  CHECK(are.monotone);
  CHECK(are.monotone_margin >= -1e-10);
  for (std::size_t k = 1; k < are.p2_trace.size(); ++k) {
    CHECK(are.p2_trace[k](0, 0) >= are.p2_trace[k - 1](0, 0) - 1e-10);
  }
}

TEST_CASE("algebraic Riccati failures") {
  SUBCASE("unstabilizable") {
    ProblemSpec spec = unstabilizable_problem();
    const RegularityClass cls = validate(spec);
    try {
      solve_algebraic(spec, cls);
      FAIL("expected NoConvergence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoConvergence);
      CHECK(std::string(e.what()).find("stabiliz") != std::string::npos);
    }
  }
  SUBCASE("time varying") {
    ProblemSpec spec = piecewise_problem(2);
    const RegularityClass cls = validate(spec);
    try {
      solve_algebraic(spec, cls);
      FAIL("expected NotTimeInvariant");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotTimeInvariant);
      CHECK(std::string(e.what()).find("time-invariant required") != std::string::npos);
    }
  }
  SUBCASE("Q only semidefinite") {
    ProblemSpec spec = riccati_oracle_problem();
    const RegularityClass cls = validate(spec);
    CHECK_THROWS_AS(solve_algebraic(spec, cls), Error);
  }
}
