#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mixlq/io.hpp"

namespace mixlq::cli {

namespace {

namespace fs = std::filesystem;
using io::json;

struct Solved {
  ProblemSpec spec;
  RegularityClass cls;
  TimeGrid grid;
  RiccatiSolution riccati;
  GainSchedule gains;
};

Solved solve_problem(const RunConfig& config) {
  Solved s;
  s.spec = io::load_problem(config.problem_path);
  s.cls = validate(s.spec);
  s.grid = TimeGrid::aligned(s.spec, config.steps);
  s.riccati = solve_riccati(s.spec, s.cls, s.grid);
  s.gains = build_gain_schedule(s.spec, s.riccati);
  return s;
}

void prepare_out_dir(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) {
    throw Error(ErrorCode::InvalidArgument,
                "cannot create output directory " + config.out_dir.string());
  }
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

double half_quadratic(const MatrixXd& m, const VectorXd& x) {
  return 0.5 * x.dot(m * x);
}

AffinePolicy policy_for(const RunConfig& config, const Solved& s) {
  if (!config.policy) return AffinePolicy::from_gains(s.gains);
  std::ifstream in(*config.policy);
  if (!in) {
    throw Error(ErrorCode::InvalidArgument,
                "cannot open policy file " + config.policy->string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("invalid policy JSON: ") + e.what());
  }
  GainSchedule g = io::gains_from_json(doc, s.spec.dims);
  if (!(g.grid == s.grid)) {
    std::ostringstream os;
    os << "policy grid (steps=" << g.grid.steps << ", horizon=" << g.grid.horizon
       << ") differs from solver grid (steps=" << s.grid.steps
       << ", horizon=" << s.grid.horizon << ")";
    throw Error(ErrorCode::GridMismatch, os.str());
  }
  return AffinePolicy::from_gains(g);
}

TrajectoryBundle simulate(const RunConfig& config, const Solved& s) {
  SimulationOptions opts;
  opts.workers = config.workers;
  opts.antithetic = config.antithetic;
  return simulate_paths(s.spec, policy_for(config, s), config.paths, config.seed, opts);
}

void write_paths_csv(const fs::path& path, const TrajectoryBundle& b) {
  std::ostringstream os;
  os.precision(17);
  os << "kind,index,t";
  for (int k = 0; k < b.dims.n; ++k) os << ",x_" << k;
  os << '\n';
  for (int i = 0; i <= b.grid.steps; ++i) {
    os << "mean," << i << ',' << b.grid.time(i);
    for (int k = 0; k < b.dims.n; ++k) os << ',' << b.mean_path[i][k];
    os << '\n';
  }
  for (int p = 0; p < b.n_paths; ++p) {
    const auto x = b.state(p, b.grid.steps);
    os << "terminal," << p << ',' << b.grid.horizon;
    for (int k = 0; k < b.dims.n; ++k) os << ',' << x[k];
    os << '\n';
  }
  io::write_file(path, os.str());
}

}  // namespace

void check_config(const RunConfig& c) {
  const auto fail = [](const std::string& what) {
    throw Error(ErrorCode::InvalidArgument, what);
  };
  if (c.steps < 2) fail("steps must be at least 2");
  if (c.paths < 2) fail("paths must be at least 2");
  if (!(c.tol > 0.0)) fail("tol must be positive");
  if (!(c.t_step > 0.0)) fail("t-step must be positive");
  if (!(c.t_max >= c.t_step)) fail("t-max must be at least t-step");
  if (c.workers < 0) fail("workers must be non-negative");
  if (c.antithetic && c.paths % 2 != 0) fail("antithetic sampling needs an even path count");
}

int cmd_solve(const RunConfig& config, std::ostream& out) {
  check_config(config);
  const Solved s = solve_problem(config);
  prepare_out_dir(config);

  std::ostringstream ric;
  io::write_riccati_csv(ric, s.riccati);
  io::write_file(config.out_dir / "riccati.csv", ric.str());
  std::ostringstream gains;
  io::write_gains_csv(gains, s.gains);
  io::write_file(config.out_dir / "gains.csv", gains.str());
  if (config.gains_json) {
    io::write_file(config.out_dir / "gains.json", dump(io::gains_to_json(s.gains)));
  }

  const double predicted = predicted_value(s.spec, s.riccati);
  json summary = {{"regularity", std::string(to_string(s.cls.tag))},
                  {"steps", s.grid.steps},
                  {"horizon", s.grid.horizon},
                  {"predicted", predicted},
                  {"P1_0", io::matrix_to_json(s.riccati.P1.front())},
                  {"P2_0", io::matrix_to_json(s.riccati.P2.front())}};
  if (s.riccati.K) {
    summary["classical_value"] = half_quadratic(s.riccati.K->front(), s.spec.x0);
    summary["K_0"] = io::matrix_to_json(s.riccati.K->front());
  } else {
    summary["classical_value"] = nullptr;
  }
  io::write_file(config.out_dir / "summary.json", dump(summary));

  out.precision(10);
  out << "regularity: " << to_string(s.cls.tag) << "\n"
      << "grid: N=" << s.grid.steps << ", T=" << s.grid.horizon << "\n"
      << "predicted value (1/2)<P2(0)x0,x0>: " << predicted << "\n";
  if (s.riccati.K) {
    out << "classical value (1/2)<K(0)x0,x0>: "
        << half_quadratic(s.riccati.K->front(), s.spec.x0) << "\n";
  }
  return kPass;
}

int cmd_simulate(const RunConfig& config, std::ostream& out) {
  check_config(config);
  const Solved s = solve_problem(config);
  prepare_out_dir(config);
  const TrajectoryBundle bundle = simulate(config, s);
  const CostEstimate cost = estimate_cost(s.spec, bundle, &s.riccati);
  io::write_file(config.out_dir / "cost.json", dump(io::cost_to_json(cost, config.seed)));
  if (config.write_paths) write_paths_csv(config.out_dir / "paths.csv", bundle);

  out.precision(10);
  out << "paths: " << cost.n_paths << (config.antithetic ? " (antithetic)" : "") << "\n"
      << "mc cost: " << cost.mc_mean << " +/- " << cost.mc_stderr << "\n"
      << "predicted: " << *cost.predicted << "\n";
  return kPass;
}

int cmd_verify(const RunConfig& config, std::ostream& out) {
  check_config(config);
  const Solved s = solve_problem(config);
  prepare_out_dir(config);
  const TrajectoryBundle bundle = simulate(config, s);
  const CostEstimate cost = estimate_cost(s.spec, bundle, &s.riccati);
  const AdjointPath adjoint = adjoint_reconstruct(s.spec, bundle, s.riccati);
  const ResidualReport residuals =
      optimality_residuals(s.spec, bundle, adjoint, *cost.predicted);
  const ValueIdentityReport value = value_identity(s.spec, s.riccati, cost);
  const PropertySuiteReport suite = matrix_property_suite(config.seed, 200);

  json report = io::residuals_to_json(residuals);
  for (auto& [key, val] : io::value_identity_to_json(value).items()) report[key] = val;
  report["suite"] = io::suite_to_json(suite);
  report["cost"] = io::cost_to_json(cost, config.seed);
  const bool pass = residuals.r1_pass && residuals.r2_pass && residuals.drift_pass &&
                    value.pass() && suite.pass();
  report["pass"] = pass;
  io::write_file(config.out_dir / "verify.json", dump(report));

  const auto line = [&](const char* name, bool ok, double v, double budget) {
    out << (ok ? "ok   " : "FAIL ") << name << ": " << v << " (budget " << budget << ")\n";
  };
  out.precision(6);
  const ResidualTolerances& t = residuals.tolerances;
  line("r1", residuals.r1_pass, residuals.r1_norm, t.r1_budget);
  line("r2", residuals.r2_pass, residuals.r2_norm, t.r2_budget);
  line("bsde drift", residuals.drift_pass, residuals.bsde_drift_norm, t.drift_budget);
  line("value identity", value.value.pass, std::abs(value.value.lhs - value.value.rhs),
       value.value.budget);
  if (value.ordering) {
    out << (value.ordering->pass ? "ok   " : "FAIL ") << "ordering: classical "
        << value.ordering->classical << " <= mixed " << value.ordering->mixed << "\n";
  }
  for (const auto& c : suite.checks) {
    out << (c.failures == 0 ? "ok   " : "FAIL ") << c.name << ": " << c.failures << "/"
        << c.trials << " failures, min margin " << c.min_margin << "\n";
  }
  return pass ? kPass : kVerifyFailed;
}

int cmd_are(const RunConfig& config, std::ostream& out) {
  check_config(config);
  ProblemSpec spec = io::load_problem(config.problem_path);
  const RegularityClass cls = validate(spec);
  AreOptions opts;
  opts.tol = config.tol;
  opts.t_step = config.t_step;
  opts.t_max = config.t_max;
  const AREResult are = solve_algebraic(spec, cls, opts);
  prepare_out_dir(config);
  io::write_file(config.out_dir / "are.json", dump(io::are_to_json(are)));

  out.precision(10);
  out << "converged at horizon " << are.horizons_used.back() << "\n"
      << "residuals: " << are.residual1 << ", " << are.residual2 << "\n"
      << "P2 trace monotone: " << (are.monotone ? "yes" : "no") << "\n";
  return kPass;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig config;
  if (const char* env = std::getenv("MIXLQ_OUT_DIR"); env && *env) config.out_dir = env;
  std::string policy;

  CLI::App app{"Optimal controls for LQ systems with a deterministic and a random controller"};
  app.require_subcommand(1);
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("problem-path,--problem-path", config.problem_path, "problem JSON file")
        ->required();
    sub->add_option("--steps", config.steps, "minimum number of time steps")
        ->capture_default_str();
    sub->add_option("--seed", config.seed, "RNG seed")->capture_default_str();
    sub->add_option("--out-dir", config.out_dir, "output directory (env MIXLQ_OUT_DIR)")
        ->capture_default_str();
  };
  const auto add_sim = [&](CLI::App* sub) {
    sub->add_option("--paths", config.paths, "Monte Carlo paths")->capture_default_str();
    sub->add_flag("--antithetic", config.antithetic, "antithetic path pairs");
    sub->add_option("--policy", policy, "GainSchedule JSON replacing the optimal gains");
    sub->add_option("--workers", config.workers, "threads, 0 = hardware")
        ->capture_default_str();
    sub->add_flag("--write-paths", config.write_paths, "write paths.csv");
  };

  CLI::App* solve = app.add_subcommand("solve", "Riccati equations and gains");
  add_common(solve);
  solve->add_flag("--gains-json", config.gains_json, "also write gains.json");
  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo cost of the closed loop");
  add_common(sim);
  add_sim(sim);
  CLI::App* ver = app.add_subcommand("verify", "optimality residuals and value identity");
  add_common(ver);
  add_sim(ver);
  CLI::App* are = app.add_subcommand("are", "infinite-horizon algebraic Riccati pair");
  add_common(are);
  are->add_option("--tol", config.tol, "convergence tolerance")->capture_default_str();
  are->add_option("--t-step", config.t_step, "horizon increment")->capture_default_str();
  are->add_option("--t-max", config.t_max, "largest horizon")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kPass;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kPass;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  if (!policy.empty()) config.policy = policy;

  try {
    if (solve->parsed()) return cmd_solve(config, out);
    if (sim->parsed()) return cmd_simulate(config, out);
    if (ver->parsed()) return cmd_verify(config, out);
    return cmd_are(config, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (is_input_error(e.code())) return kInputError;
    if (e.code() == ErrorCode::NoConvergence) return kNoConvergence;
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericFailure;
  }
}

}  // namespace mixlq::cli
