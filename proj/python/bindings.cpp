#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mixlq/io.hpp"

namespace py = pybind11;
using namespace mixlq;

namespace {

struct Prepared {
  ProblemSpec spec;
  RegularityClass cls;
};

Prepared prepare(const std::string& problem) {
  io::json doc;
  try {
    doc = io::json::parse(problem);
  } catch (const io::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  Prepared p{io::problem_from_json(doc), {}};
  p.cls = validate(p.spec);
  return p;
}

// Stacks a matrix sequence into a (len, rows, cols) row-major array.
py::array_t<double> stack(const std::vector<MatrixXd>& seq) {
  const auto rows = seq.empty() ? 0 : seq.front().rows();
  const auto cols = seq.empty() ? 0 : seq.front().cols();
  py::array_t<double> out({static_cast<py::ssize_t>(seq.size()), static_cast<py::ssize_t>(rows),
                           static_cast<py::ssize_t>(cols)});
  auto view = out.mutable_unchecked<3>();
  for (std::size_t k = 0; k < seq.size(); ++k) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) view(k, r, c) = seq[k](r, c);
    }
  }
  return out;
}

py::dict solve(const std::string& problem, int steps) {
  const Prepared p = prepare(problem);
  const RiccatiSolution ric = solve_riccati(p.spec, p.cls, TimeGrid::aligned(p.spec, steps));
  const GainSchedule gains = build_gain_schedule(p.spec, ric);
  std::vector<double> t(ric.grid.steps + 1);
  for (int i = 0; i <= ric.grid.steps; ++i) t[i] = ric.grid.time(i);
  py::dict out;
  out["regularity"] = std::string(to_string(p.cls.tag));
  out["t"] = t;
  out["P1"] = stack(ric.P1);
  out["P2"] = stack(ric.P2);
  if (ric.K) out["K"] = stack(*ric.K);
  out["M1"] = stack(gains.M1);
  out["M2"] = stack(gains.M2);
  out["M3"] = stack(gains.M3);
  out["predicted"] = predicted_value(p.spec, ric);
  return out;
}

struct Run {
  Prepared problem;
  RiccatiSolution riccati;
  TrajectoryBundle bundle;
  CostEstimate cost;
};

Run simulate_optimal(const std::string& problem, int steps, int paths, std::uint64_t seed,
                     bool antithetic, int workers) {
  Run r{prepare(problem), {}, {}, {}};
  r.riccati = solve_riccati(r.problem.spec, r.problem.cls,
                            TimeGrid::aligned(r.problem.spec, steps));
  const AffinePolicy policy =
      AffinePolicy::from_gains(build_gain_schedule(r.problem.spec, r.riccati));
  r.bundle = simulate_paths(r.problem.spec, policy, paths, seed,
                            {.workers = workers, .antithetic = antithetic});
  r.cost = estimate_cost(r.problem.spec, r.bundle, &r.riccati);
  return r;
}

std::string simulate(const std::string& problem, int steps, int paths, std::uint64_t seed,
                     bool antithetic, int workers) {
  const Run r = simulate_optimal(problem, steps, paths, seed, antithetic, workers);
  return io::cost_to_json(r.cost, seed).dump();
}

std::string verify(const std::string& problem, int steps, int paths, std::uint64_t seed,
                   bool antithetic, int workers) {
  const Run r = simulate_optimal(problem, steps, paths, seed, antithetic, workers);
  const ProblemSpec& spec = r.problem.spec;
  const AdjointPath adjoint = adjoint_reconstruct(spec, r.bundle, r.riccati);
  const ResidualReport residuals = optimality_residuals(spec, r.bundle, adjoint, *r.cost.predicted);
  const ValueIdentityReport value = value_identity(spec, r.riccati, r.cost);
  io::json report = io::residuals_to_json(residuals);
  for (auto& [key, val] : io::value_identity_to_json(value).items()) report[key] = val;
  report["cost"] = io::cost_to_json(r.cost, seed);
  report["pass"] = residuals.r1_pass && residuals.r2_pass && residuals.drift_pass && value.pass();
  return report.dump();
}

std::string are(const std::string& problem, double tol, double t_step, double t_max) {
  const Prepared p = prepare(problem);
  return io::are_to_json(
             solve_algebraic(p.spec, p.cls, {.tol = tol, .t_step = t_step, .t_max = t_max}))
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Riccati synthesis, simulation and verification for mixed LQ control";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      exc.attr("time") = e.time() ? py::cast(*e.time()) : py::none();
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  // Problems travel as JSON text; results are dicts of numpy arrays or JSON.
  m.def("solve", &solve, py::arg("problem"), py::arg("steps") = 512);
  m.def("simulate", &simulate, py::arg("problem"), py::arg("steps") = 512,
        py::arg("paths") = 20000, py::arg("seed") = 42, py::arg("antithetic") = false,
        py::arg("workers") = 0);
  m.def("verify", &verify, py::arg("problem"), py::arg("steps") = 512, py::arg("paths") = 20000,
        py::arg("seed") = 42, py::arg("antithetic") = false, py::arg("workers") = 0);
  m.def("are", &are, py::arg("problem"), py::arg("tol") = 1e-8, py::arg("t_step") = 5.0,
        py::arg("t_max") = 500.0);
}
