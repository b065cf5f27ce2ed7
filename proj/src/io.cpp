#include "mixlq/io.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

namespace mixlq::io {

namespace {

[[noreturn]] void parse_error(const std::string& what) {
  throw Error(ErrorCode::ParseError, what);
}

const json& require(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    parse_error(std::string("missing field '") + key + "'");
  }
  return obj.at(key);
}

double number(const json& j, std::string_view name) {
  if (!j.is_number()) parse_error(std::string(name) + " must be a number");
  return j.get<double>();
}

int integer(const json& j, std::string_view name) {
  if (!j.is_number_integer()) parse_error(std::string(name) + " must be an integer");
  return j.get<int>();
}

// Optional block: absent is allowed only when the expected size is zero.
MatrixXd block(const json& frame, const char* key, Eigen::Index rows,
               Eigen::Index cols) {
  if (!frame.contains(key)) {
    if (rows * cols == 0) return MatrixXd::Zero(rows, cols);
    parse_error(std::string("missing field '") + key + "'");
  }
  return matrix_from_json(frame.at(key), rows, cols, key);
}

std::vector<MatrixXd> noise_block(const json& frame, const char* key,
                                  const Dims& dims, Eigen::Index cols) {
  if (!frame.contains(key)) {
    if (dims.n * cols == 0) return std::vector<MatrixXd>(dims.d, MatrixXd::Zero(dims.n, cols));
    parse_error(std::string("missing field '") + key + "'");
  }
  const json& arr = frame.at(key);
  if (!arr.is_array()) parse_error(std::string(key) + " must be an array of matrices");
  std::vector<MatrixXd> out;
  for (std::size_t j = 0; j < arr.size(); ++j) {
    out.push_back(matrix_from_json(arr[j], dims.n, cols,
                                   std::string(key) + "[" + std::to_string(j) + "]"));
  }
  return out;
}

json noise_to_json(const std::vector<MatrixXd>& family) {
  json arr = json::array();
  for (const auto& m : family) arr.push_back(matrix_to_json(m));
  return arr;
}

void write_row(std::ostream& os, const MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << ',' << m(r, c);
  }
}

void write_header(std::ostream& os, std::string_view name, const MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      os << ',' << name << '_' << r << '_' << c;
    }
  }
}

json schedule_to_json(const std::vector<MatrixXd>& seq) {
  json arr = json::array();
  for (const auto& m : seq) arr.push_back(matrix_to_json(m));
  return arr;
}

}  // namespace

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                          std::string_view name) {
  if (!j.is_array()) parse_error(std::string(name) + " must be a nested array");
  const auto r = static_cast<Eigen::Index>(j.size());
  const Eigen::Index c =
      r > 0 && j[0].is_array() ? static_cast<Eigen::Index>(j[0].size()) : 0;
  if (r * c == 0 && rows * cols == 0) return MatrixXd::Zero(rows, cols);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
      std::ostringstream os;
      os << name << " row " << i << " has inconsistent length";
      throw Error(ErrorCode::DimensionMismatch, os.str());
    }
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = number(row[k], name);
  }
  return m;
}

ProblemSpec problem_from_json(const json& doc) {
  ProblemSpec spec;
  const json& dims = require(doc, "dims");
  spec.dims.n = integer(require(dims, "n"), "dims.n");
  spec.dims.l1 = integer(require(dims, "l1"), "dims.l1");
  spec.dims.l2 = integer(require(dims, "l2"), "dims.l2");
  spec.dims.d = integer(require(dims, "d"), "dims.d");
  if (spec.dims.n < 0 || spec.dims.l1 < 0 || spec.dims.l2 < 0 || spec.dims.d < 0) {
    throw Error(ErrorCode::DimensionMismatch, "dimensions must be non-negative");
  }
  spec.horizon = number(require(doc, "horizon"), "horizon");

  const json& schedule = require(doc, "schedule");
  for (const json& b : require(schedule, "breakpoints")) {
    spec.schedule.breakpoints.push_back(number(b, "breakpoint"));
  }
  const Dims& dm = spec.dims;
  for (const json& fr : require(schedule, "frames")) {
    CoefficientFrame f;
    f.A = block(fr, "A", dm.n, dm.n);
    f.B1 = block(fr, "B1", dm.n, dm.l1);
    f.B2 = block(fr, "B2", dm.n, dm.l2);
    f.C = noise_block(fr, "C", dm, dm.n);
    f.D1 = noise_block(fr, "D1", dm, dm.l1);
    f.D2 = noise_block(fr, "D2", dm, dm.l2);
    f.Q = block(fr, "Q", dm.n, dm.n);
    f.R1 = block(fr, "R1", dm.l1, dm.l1);
    f.R2 = block(fr, "R2", dm.l2, dm.l2);
    spec.schedule.frames.push_back(std::move(f));
  }
  spec.G = matrix_from_json(require(doc, "G"), dm.n, dm.n, "G");
  const json& x0 = require(doc, "x0");
  if (!x0.is_array()) parse_error("x0 must be an array");
  spec.x0.resize(static_cast<Eigen::Index>(x0.size()));
  for (std::size_t i = 0; i < x0.size(); ++i) spec.x0[i] = number(x0[i], "x0");

  if (doc.contains("tolerances")) {
    const json& t = doc.at("tolerances");
    if (t.contains("symmetry")) spec.tolerances.symmetry = number(t["symmetry"], "symmetry");
    if (t.contains("psd")) spec.tolerances.psd = number(t["psd"], "psd");
    if (t.contains("definiteness")) {
      spec.tolerances.definiteness = number(t["definiteness"], "definiteness");
    }
  }
  return spec;
}

json problem_to_json(const ProblemSpec& spec) {
  json frames = json::array();
  for (const auto& f : spec.schedule.frames) {
    frames.push_back({{"A", matrix_to_json(f.A)},
                      {"B1", matrix_to_json(f.B1)},
                      {"B2", matrix_to_json(f.B2)},
                      {"C", noise_to_json(f.C)},
                      {"D1", noise_to_json(f.D1)},
                      {"D2", noise_to_json(f.D2)},
                      {"Q", matrix_to_json(f.Q)},
                      {"R1", matrix_to_json(f.R1)},
                      {"R2", matrix_to_json(f.R2)}});
  }
  json x0 = json::array();
  for (Eigen::Index i = 0; i < spec.x0.size(); ++i) x0.push_back(spec.x0[i]);
  return {{"dims",
           {{"n", spec.dims.n}, {"l1", spec.dims.l1}, {"l2", spec.dims.l2}, {"d", spec.dims.d}}},
          {"horizon", spec.horizon},
          {"schedule", {{"breakpoints", spec.schedule.breakpoints}, {"frames", frames}}},
          {"G", matrix_to_json(spec.G)},
          {"x0", x0},
          {"tolerances",
           {{"symmetry", spec.tolerances.symmetry},
            {"psd", spec.tolerances.psd},
            {"definiteness", spec.tolerances.definiteness}}}};
}

ProblemSpec load_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::InvalidArgument, "cannot open problem file " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    parse_error(std::string("invalid JSON: ") + e.what());
  }
  return problem_from_json(doc);
}

void write_riccati_csv(std::ostream& os, const RiccatiSolution& sol) {
  os.precision(17);
  os << 't';
  write_header(os, "P1", sol.P1.front());
  write_header(os, "P2", sol.P2.front());
  if (sol.K) write_header(os, "K", sol.K->front());
  os << '\n';
  for (int i = 0; i <= sol.grid.steps; ++i) {
    os << sol.grid.time(i);
    write_row(os, sol.P1[i]);
    write_row(os, sol.P2[i]);
    if (sol.K) write_row(os, (*sol.K)[i]);
    os << '\n';
  }
}

void write_gains_csv(std::ostream& os, const GainSchedule& gains) {
  os.precision(17);
  os << 't';
  write_header(os, "M1", gains.M1.front());
  write_header(os, "M2", gains.M2.front());
  write_header(os, "M3", gains.M3.front());
  os << '\n';
  for (int i = 0; i <= gains.grid.steps; ++i) {
    os << gains.grid.time(i);
    write_row(os, gains.M1[i]);
    write_row(os, gains.M2[i]);
    write_row(os, gains.M3[i]);
    os << '\n';
  }
}

json gains_to_json(const GainSchedule& gains) {
  return {{"steps", gains.grid.steps},
          {"horizon", gains.grid.horizon},
          {"M1", schedule_to_json(gains.M1)},
          {"M2", schedule_to_json(gains.M2)},
          {"M3", schedule_to_json(gains.M3)}};
}

GainSchedule gains_from_json(const json& doc, const Dims& dims) {
  GainSchedule g;
  g.grid.steps = integer(require(doc, "steps"), "steps");
  g.grid.horizon = number(require(doc, "horizon"), "horizon");
  if (g.grid.steps < 1) parse_error("steps must be positive");
  const auto read = [&](const char* key, Eigen::Index rows) {
    const json& arr = require(doc, key);
    if (!arr.is_array() || static_cast<int>(arr.size()) != g.grid.steps + 1) {
      throw Error(ErrorCode::GridMismatch,
                  std::string(key) + " must hold one matrix per grid node");
    }
    std::vector<MatrixXd> out;
    for (const json& m : arr) {
      MatrixXd mat = matrix_from_json(m, rows, dims.n, key);
      if (mat.rows() != rows || mat.cols() != dims.n) {
        throw Error(ErrorCode::DimensionMismatch, std::string(key) + " has the wrong shape");
      }
      out.push_back(std::move(mat));
    }
    return out;
  };
  g.M1 = read("M1", dims.l1);
  g.M2 = read("M2", dims.l2);
  g.M3 = read("M3", dims.l2);
  return g;
}

json cost_to_json(const CostEstimate& cost, std::uint64_t seed) {
  return {{"mc_mean", cost.mc_mean},
          {"mc_stderr", cost.mc_stderr},
          {"predicted", cost.predicted ? json(*cost.predicted) : json(nullptr)},
          {"n_paths", cost.n_paths},
          {"seed", seed}};
}

json are_to_json(const AREResult& are) {
  json trace = json::array();
  for (std::size_t k = 0; k < are.horizons_used.size(); ++k) {
    trace.push_back({{"horizon", are.horizons_used[k]},
                     {"P2", matrix_to_json(are.p2_trace[k])}});
  }
  return {{"P1inf", matrix_to_json(are.P1inf)},
          {"P2inf", matrix_to_json(are.P2inf)},
          {"residual1", are.residual1},
          {"residual2", are.residual2},
          {"horizons_used", are.horizons_used},
          {"trace", trace},
          {"monotone", are.monotone},
          {"monotone_margin", are.monotone_margin}};
}

json residuals_to_json(const ResidualReport& rep) {
  const ResidualTolerances& t = rep.tolerances;
  return {{"r1_norm", rep.r1_norm},
          {"r1_stderr", rep.r1_stderr},
          {"r2_norm", rep.r2_norm},
          {"bsde_drift_norm", rep.bsde_drift_norm},
          {"r1_pass", rep.r1_pass},
          {"r2_pass", rep.r2_pass},
          {"drift_pass", rep.drift_pass},
          {"tolerances",
           {{"r1_budget", t.r1_budget},
            {"r2_budget", t.r2_budget},
            {"drift_budget", t.drift_budget},
            {"dt", t.dt},
            {"n_paths", t.n_paths}}}};
}

json value_identity_to_json(const ValueIdentityReport& rep) {
  json out = {{"value_check",
               {{"lhs", rep.value.lhs},
                {"rhs", rep.value.rhs},
                {"budget", rep.value.budget},
                {"margin", rep.value.margin},
                {"pass", rep.value.pass}}}};
  if (rep.ordering) {
    out["ordering_check"] = {{"classical", rep.ordering->classical},
                             {"mixed", rep.ordering->mixed},
                             {"margin", rep.ordering->margin},
                             {"pass", rep.ordering->pass}};
  } else {
    out["ordering_check"] = nullptr;
  }
  return out;
}

json suite_to_json(const PropertySuiteReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks) {
    checks.push_back({{"name", c.name},
                      {"trials", c.trials},
                      {"failures", c.failures},
                      {"min_margin", c.min_margin}});
  }
  return {{"checks", checks}, {"pass", rep.pass()}};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  }
  out << text;
}

}  // namespace mixlq::io
