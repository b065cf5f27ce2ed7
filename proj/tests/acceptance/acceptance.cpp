// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "mixlq/io.hpp"
#include "support/problems.hpp"

using namespace mixlq;
using namespace mixlq::testing;
namespace fs = std::filesystem;

namespace {

constexpr int kSteps = 512;
constexpr int kPaths = 20000;
constexpr std::uint64_t kSeed = 42;
constexpr std::uint64_t kRegularSeed = 2024;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Solved {
  ProblemSpec spec;
  RegularityClass cls;
  RiccatiSolution riccati;
  GainSchedule gains;
};

Solved solve(ProblemSpec spec, int steps = kSteps) {
  Solved s;
  s.cls = validate(spec);
  s.spec = std::move(spec);
  s.riccati = solve_riccati(s.spec, s.cls, TimeGrid::aligned(s.spec, steps));
  s.gains = build_gain_schedule(s.spec, s.riccati);
  return s;
}

double sup_gap(const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b) {
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, max_abs(a[i] - b[i]));
  return gap;
}

// |mc - predicted| against 3 stderr + 2 dt (1 + |predicted|).
ValueCheck value_check(const Solved& s, int paths = kPaths) {
  const TrajectoryBundle b =
      simulate_paths(s.spec, AffinePolicy::from_gains(s.gains), paths, kSeed);
  return value_identity(s.spec, s.riccati, estimate_cost(s.spec, b, &s.riccati)).value;
}

// Adds 0.25 * (largest entry of the gain over time) * N(0, 1) to every entry,
// the same draw at every node.
GainSchedule perturb(const GainSchedule& g, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  GainSchedule out = g;
  for (auto* seq : {&out.M1, &out.M2, &out.M3}) {
    if (seq->front().size() == 0) continue;
    double scale = 0.0;
    for (const auto& m : *seq) scale = std::max(scale, max_abs(m));
    MatrixXd noise(seq->front().rows(), seq->front().cols());
    for (Eigen::Index k = 0; k < noise.size(); ++k) noise(k) = normal(rng);
    for (auto& m : *seq) m += 0.25 * std::max(scale, 1e-3) * noise;
  }
  return out;
}

struct Separation {
  int not_below = 0;
  int clearly_above = 0;
  double worst_z = std::numeric_limits<double>::infinity();
};

// Paired comparison with common random numbers: J_pert - J* is estimated
// from per-path differences, whose standard error is the combined one.
Separation suboptimality(const Solved& s, std::uint64_t seed) {
  const TrajectoryBundle opt =
      simulate_paths(s.spec, AffinePolicy::from_gains(s.gains), kPaths, kSeed);
  const std::vector<double> base = path_costs(s.spec, opt);
  std::mt19937_64 rng(seed);
  Separation out;
  for (int trial = 0; trial < 20; ++trial) {
    const GainSchedule g = perturb(s.gains, rng);
    const TrajectoryBundle b =
        simulate_paths(s.spec, AffinePolicy::from_gains(g), kPaths, kSeed);
    const std::vector<double> costs = path_costs(s.spec, b);
    double sum = 0, sq = 0;
    for (int p = 0; p < kPaths; ++p) {
      const double d = costs[p] - base[p];
      sum += d;
      sq += d * d;
    }
    const double mean = sum / kPaths;
    const double se = std::sqrt(std::max(0.0, sq / kPaths - mean * mean) / (kPaths - 1));
    if (mean >= -3.0 * se) ++out.not_below;
    if (mean > 3.0 * se) ++out.clearly_above;
    out.worst_z = std::min(out.worst_z, se > 0 ? mean / se : mean > 0 ? 1e300 : -1e300);
  }
  return out;
}

GainSchedule scaled(GainSchedule g, double factor) {
  for (auto* seq : {&g.M1, &g.M2, &g.M3}) {
    for (auto& m : *seq) m *= factor;
  }
  return g;
}

ResidualReport residuals_under(const Solved& s, const GainSchedule& g) {
  const TrajectoryBundle b = simulate_paths(s.spec, AffinePolicy::from_gains(g), kPaths, kSeed);
  const CostEstimate c = estimate_cost(s.spec, b, &s.riccati);
  return optimality_residuals(s.spec, b, adjoint_reconstruct(s.spec, b, s.riccati),
                              *c.predicted);
}

double node_error(const std::vector<MatrixXd>& coarse, const std::vector<MatrixXd>& fine) {
  const std::size_t stride = (fine.size() - 1) / (coarse.size() - 1);
  double err = 0.0;
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    err = std::max(err, max_abs(coarse[i] - fine[i * stride]));
  }
  return err;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------

void scalar_riccati(Outcome& o) {
  const Solved s = solve(riccati_oracle_problem());
  const double err = std::abs(s.riccati.P1.front()(0, 0) - 0.5);
  o.detail << "|P1(0) - 0.5| = " << err;
  o.require(err <= 1e-8, "error <= 1e-8");
}

void classical_equivalence(Outcome& o) {
  const Solved s = solve(tanh_problem());
  const double gap = sup_gap(s.riccati.P2, *s.riccati.K);
  const double err = std::abs(s.riccati.P2.front()(0, 0) - kTanhP2);
  o.detail << "sup|P2 - K| = " << gap << ", |P2(0) - tanh(sqrt2)/sqrt2| = " << err;
  o.require(gap <= 1e-8, "sup gap <= 1e-8");
  o.require(err <= 1e-8, "P2(0) error <= 1e-8");
}

void deterministic_control_removed(Outcome& o) {
  double p_gap = 0, m_gap = 0;
  for (std::uint64_t seed : {101u, 102u, 103u}) {
    const Solved s = solve(random_regular_problem(seed, {.l1 = 0}));
    p_gap = std::max(p_gap, sup_gap(s.riccati.P2, s.riccati.P1));
    m_gap = std::max(m_gap, sup_gap(s.gains.M2, s.gains.M3));
  }
  o.detail << "sup|P2 - P1| = " << p_gap << ", sup|M2 - M3| = " << m_gap;
  o.require(p_gap <= 1e-8, "P gap <= 1e-8");
  o.require(m_gap <= 1e-10, "M gap <= 1e-10");
}

void value_identity_criterion(Outcome& o) {
  for (auto [name, spec] : {std::pair{"tanh", tanh_problem()},
                            std::pair{"2-state", random_regular_problem(kRegularSeed)}}) {
    const auto start = std::chrono::steady_clock::now();
    const ValueCheck v = value_check(solve(spec));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.detail << name << ": |mc - pred| = " << std::abs(v.lhs - v.rhs) << " <= " << v.budget
             << " (" << secs << " s); ";
    o.require(v.pass, std::string(name) + " within budget");
    o.require(secs < 30.0, std::string(name) + " under 30 s");
  }
}

void separation_criterion(Outcome& o) {
  const Separation sep = suboptimality(solve(random_regular_problem(kRegularSeed)), 7);
  o.detail << "not below J*: " << sep.not_below << "/20, above by > 3 se: "
           << sep.clearly_above << "/20, smallest z = " << sep.worst_z;
  o.require(sep.not_below == 20, "all 20 >= J* - 3 se");
  o.require(sep.clearly_above >= 15, "at least 15 > J* + 3 se");
}

void residual_criterion(Outcome& o) {
  for (auto [name, spec] : {std::pair{"tanh", tanh_problem()},
                            std::pair{"2-state", random_regular_problem(kRegularSeed)}}) {
    const Solved s = solve(spec);
    const ResidualReport opt = residuals_under(s, s.gains);
    const ResidualReport bad = residuals_under(s, scaled(s.gains, 1.5));
    const double dt = s.riccati.grid.dt();
    o.detail << name << ": r1 = " << opt.r1_norm << " (<= " << 3 * opt.r1_stderr + 5 * dt
             << "), r2 = " << opt.r2_norm << " (<= " << 5 * dt << "), r2 at 1.5x = "
             << bad.r2_norm << "; ";
    o.require(opt.r1_norm <= 3 * opt.r1_stderr + 5 * dt, std::string(name) + " r1");
    o.require(opt.r2_norm <= 5 * dt, std::string(name) + " r2");
    o.require(bad.r2_norm >= 10 * opt.r2_norm, std::string(name) + " 1.5x r2 >= 10x");
    o.require(!bad.r2_pass, std::string(name) + " 1.5x r2 over budget");
  }
}

void property_suites(Outcome& o) {
  const PropertySuiteReport rep = matrix_property_suite(kSeed, 200);
  for (const auto& c : rep.checks) {
    o.detail << c.name << ": " << c.failures << "/" << c.trials << " failures, margin "
             << c.min_margin << "; ";
    o.require(c.trials == 200 && c.failures == 0 && c.min_margin >= -1e-10, c.name);
  }
}

void singular_cases(Outcome& o) {
  for (auto [name, spec, tag] :
       {std::tuple{"SingularR2", singular_r2_problem(), Regularity::SingularR2},
        std::tuple{"SingularR1", singular_r1_problem(), Regularity::SingularR1}}) {
    const Solved s = solve(spec);
    double min_eig = std::numeric_limits<double>::infinity();
    for (const auto& p : s.riccati.P1) min_eig = std::min(min_eig, min_eigenvalue(p));
    const ValueCheck v = value_check(s);
    const Separation sep = suboptimality(s, 11);
    o.detail << name << ": min eig P1 = " << min_eig << ", |mc - pred| = "
             << std::abs(v.lhs - v.rhs) << " <= " << v.budget << ", separation "
             << sep.not_below << "/" << sep.clearly_above << "; ";
    o.require(s.cls.tag == tag, std::string(name) + " classified");
    o.require(min_eig > 0.0, std::string(name) + " P1 > 0");
    o.require(v.pass, std::string(name) + " value identity");
    o.require(sep.not_below == 20 && sep.clearly_above >= 15,
              std::string(name) + " separation");
  }
}

void algebraic_riccati(Outcome& o) {
  ProblemSpec spec = are_problem();
  const RegularityClass cls = validate(spec);
  const AREResult are = solve_algebraic(spec, cls);
  const double e1 = std::abs(are.P1inf(0, 0) - 1.0);
  const double e2 = std::abs(are.P2inf(0, 0) - 1.0 / std::sqrt(2.0));
  o.detail << "|P1inf - 1| = " << e1 << ", |P2inf - 1/sqrt2| = " << e2 << ", residuals "
           << are.residual1 << ", " << are.residual2 << ", monotone margin "
           << are.monotone_margin;
  o.require(e1 <= 1e-6 && e2 <= 1e-6, "limits");
  o.require(are.residual1 <= 1e-5 && are.residual2 <= 1e-5, "residuals");
  o.require(are.monotone_margin >= -1e-10, "monotone trace");

  ProblemSpec bad = unstabilizable_problem();
  const RegularityClass bad_cls = validate(bad);
  bool diverged = false;
  try {
    solve_algebraic(bad, bad_cls);
  } catch (const Error& e) {
    diverged = e.code() == ErrorCode::NoConvergence;
  }
  o.detail << ", unstabilizable -> " << (diverged ? "NoConvergence" : "no error");
  o.require(diverged, "unstabilizable reports NoConvergence");
}

void order_checks(Outcome& o) {
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed : {kRegularSeed, kRegularSeed + 1}) {
    ProblemSpec spec = random_regular_problem(seed, {.T = 2.0});
    const RegularityClass cls = validate(spec);
    const RiccatiSolution ref = solve_riccati(spec, cls, TimeGrid{8192, spec.horizon});
    const RiccatiSolution a = solve_riccati(spec, cls, TimeGrid{64, spec.horizon});
    const RiccatiSolution b = solve_riccati(spec, cls, TimeGrid{128, spec.horizon});
    worst = std::min({worst, node_error(a.P1, ref.P1) / node_error(b.P1, ref.P1),
                      node_error(a.P2, ref.P2) / node_error(b.P2, ref.P2)});
  }
  o.detail << "RK4 refinement factor >= " << worst << "; weak errors";
  o.require(worst >= 8.0, "refinement factor >= 8");

  double prev_err = -1.0;
  for (int steps : {64, 128, 256, 512}) {
    const Solved s = solve(tanh_problem(), steps);
    const TrajectoryBundle b =
        simulate_paths(s.spec, AffinePolicy::from_gains(s.gains), 2000, kSeed);
    const CostEstimate c = estimate_cost(s.spec, b, &s.riccati);
    const double err = std::abs(c.mc_mean - *c.predicted);
    o.detail << " N=" << steps << ": " << err;
    if (prev_err >= 0.0) {
      o.require(err <= 0.75 * prev_err + 2.0 * c.mc_stderr,
                "weak order at N=" + std::to_string(steps));
    }
    prev_err = err;
  }
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mixlq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

void determinism(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / "mixlq_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path problem = root / "problem.json";
  io::write_file(problem, io::problem_to_json(random_regular_problem(kRegularSeed)).dump(2));
  const fs::path are_problem_path = root / "are.json";
  io::write_file(are_problem_path, io::problem_to_json(are_problem()).dump(2));

  struct Run {
    std::vector<std::string> args;
    std::vector<std::string> files;
  };
  const std::vector<Run> runs = {
      {{"solve", problem.string()}, {"riccati.csv", "gains.csv", "summary.json"}},
      {{"simulate", problem.string(), "--paths", "4000", "--write-paths"},
       {"cost.json", "paths.csv"}},
      {{"simulate", problem.string(), "--paths", "4000", "--antithetic"}, {"cost.json"}},
      {{"verify", problem.string(), "--paths", "4000"}, {"verify.json"}},
      {{"are", are_problem_path.string()}, {"are.json"}},
  };
  int compared = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    std::vector<std::string> reference;
    int k = 0;
    for (const char* workers : {"1", "1", "4", "0"}) {
      const fs::path dir = root / (std::to_string(r) + "_" + std::to_string(k++));
      std::vector<std::string> args = runs[r].args;
      args.insert(args.end(), {"--out-dir", dir.string()});
      if (args[0] == "simulate" || args[0] == "verify") {
        args.insert(args.end(), {"--workers", workers});
      }
      const int code = run_cli(args);
      o.require(code == 0, args[0] + " exit 0");
      std::vector<std::string> contents;
      for (const auto& f : runs[r].files) contents.push_back(slurp(dir / f));
      if (reference.empty()) {
        reference = contents;
      } else {
        o.require(contents == reference, args[0] + " byte-identical");
        ++compared;
      }
    }
  }
  o.detail << compared << " repeated runs compared byte for byte (workers 1, 1, 4, auto)";
  fs::remove_all(root);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0: no runtime limit
    std::function<void(Outcome&)> body;
  };
  const std::vector<Criterion> criteria = {
      {1, "scalar Riccati oracle", 1.0, scalar_riccati},
      {2, "classical equivalence", 1.0, classical_equivalence},
      {3, "no deterministic control reduction", 0.0, deterministic_control_removed},
      {4, "value identity", 60.0, value_identity_criterion},
      {5, "suboptimality separation", 300.0, separation_criterion},
      {6, "optimality residuals", 0.0, residual_criterion},
      {7, "matrix property suites", 5.0, property_suites},
      {8, "singular cases", 0.0, singular_cases},
      {9, "algebraic Riccati", 10.0, algebraic_riccati},
      {10, "order checks", 0.0, order_checks},
      {11, "determinism", 0.0, determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    o.detail.precision(4);
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0.0 && secs >= c.limit_s) {
      o.require(false, "runtime " + std::to_string(secs) + " s over limit");
    }
    if (!o.pass) ++failed;
    std::printf("%s  %2d %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
