#include "mixlq/synthesis.hpp"

#include <algorithm>
#include <sstream>

namespace mixlq {

namespace {

double gap(const MatrixXd& a, const MatrixXd& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

void rethrow_with_time(const Error& e, double t) {
  if (e.time()) throw e;
  throw Error(e.code(), e.detail(), t);
}

}  // namespace

Gains gains_at(const MatrixXd& p1, const MatrixXd& p2,
               const CoefficientFrame& f, std::optional<double> time) {
  const StructureMaps m = eval_structure_maps(p1, f, &p2, time);
  Gains g;
  g.M2 = -m.Lambda2_inv * m.Theta1;
  g.M1 = -m.LambdaHat_inv * (f.B1.transpose() * p2 + m.D1SC -
                             m.D1SD2 * m.Lambda2_inv * m.Theta2);
  g.M3 = -m.Lambda2_inv * (m.Theta2 + m.D1SD2.transpose() * g.M1);

  const Gains alt = gains_alternate(p1, p2, f, time);
  const double scale =
      std::max({1.0, max_abs(g.M1), max_abs(g.M2), max_abs(g.M3)});
  const double mismatch = std::max(gap(g.M1, alt.M1), gap(g.M3, alt.M3));
  if (mismatch > 1e-9 * scale) {
    std::ostringstream os;
    os << "gain representations disagree by " << mismatch;
    throw Error(ErrorCode::RepresentationMismatch, os.str(), time);
  }
  return g;
}

Gains gains_alternate(const MatrixXd& p1, const MatrixXd& p2,
                      const CoefficientFrame& f, std::optional<double> time) {
  const StructureMaps m = eval_structure_maps(p1, f, &p2, time);
  Gains g;
  g.M2 = -m.Lambda2_inv * m.Theta1;
  g.M1 = -m.LambdaHat_inv * (m.W.transpose() * p2 + m.D1UC);
  g.M3 = -m.Lambda2_inv * (m.Theta2 + m.D1SD2.transpose() * g.M1);
  return g;
}

MatrixXd p2_rhs_from_gains(const MatrixXd& p1, const MatrixXd& p2,
                           const CoefficientFrame& f) {
  const Gains g = gains_at(p1, p2, f);
  MatrixXd out = p2 * f.A + f.A.transpose() * p2 + f.Q +
                 p2 * f.B1 * g.M1 + p2 * f.B2 * g.M3;
  for (std::size_t j = 0; j < f.C.size(); ++j) {
    const MatrixXd CP = f.C[j].transpose() * p1;
    out += CP * f.C[j] + CP * f.D1[j] * g.M1 + CP * f.D2[j] * g.M3;
  }
  return out;
}

const CoefficientFrame& node_frame(const ProblemSpec& spec,
                                   const TimeGrid& grid, int node) {
  const int step = std::min(node, grid.steps - 1);
  return spec.schedule.frames[interval_index(
      spec, grid.time(step) + 0.5 * grid.dt())];
}

GainSchedule build_gain_schedule(const ProblemSpec& spec,
                                 const RiccatiSolution& riccati) {
  const TimeGrid& grid = riccati.grid;
  if (static_cast<int>(riccati.P1.size()) != grid.steps + 1 ||
      static_cast<int>(riccati.P2.size()) != grid.steps + 1) {
    throw Error(ErrorCode::GridMismatch, "Riccati trajectories do not match grid");
  }
  GainSchedule s;
  s.grid = grid;
  s.M1.resize(grid.steps + 1);
  s.M2.resize(grid.steps + 1);
  s.M3.resize(grid.steps + 1);
  for (int i = 0; i <= grid.steps; ++i) {
    const double t = grid.time(i);
    try {
      Gains g = gains_at(riccati.P1[i], riccati.P2[i],
                         node_frame(spec, grid, i), t);
      s.M1[i] = std::move(g.M1);
      s.M2[i] = std::move(g.M2);
      s.M3[i] = std::move(g.M3);
    } catch (const Error& e) {
      rethrow_with_time(e, t);
    }
  }
  return s;
}

ClosedLoopSystem build_closed_loop(const ProblemSpec& spec,
                                   const GainSchedule& gains) {
  const TimeGrid& grid = gains.grid;
  if (grid.horizon != spec.horizon ||
      static_cast<int>(gains.M1.size()) != grid.steps + 1 ||
      static_cast<int>(gains.M2.size()) != grid.steps + 1 ||
      static_cast<int>(gains.M3.size()) != grid.steps + 1) {
    throw Error(ErrorCode::GridMismatch, "gain schedule does not match grid");
  }
  const int d = spec.dims.d;
  ClosedLoopSystem cl;
  cl.grid = grid;
  cl.diff_state.assign(d, {});
  cl.diff_mean.assign(d, {});
  for (int i = 0; i <= grid.steps; ++i) {
    const CoefficientFrame& f = node_frame(spec, grid, i);
    const MatrixXd& M1 = gains.M1[i];
    const MatrixXd& M2 = gains.M2[i];
    const MatrixXd& M3 = gains.M3[i];
    cl.drift_state.push_back(f.A + f.B2 * M2);
    cl.drift_mean.push_back(f.B1 * M1 - f.B2 * M2 + f.B2 * M3);
    cl.mean_generator.push_back(f.A + f.B1 * M1 + f.B2 * M3);
    for (int j = 0; j < d; ++j) {
      cl.diff_state[j].push_back(f.C[j] + f.D2[j] * M2);
      cl.diff_mean[j].push_back(f.D1[j] * M1 - f.D2[j] * M2 + f.D2[j] * M3);
    }
    const MatrixXd sum = cl.drift_state.back() + cl.drift_mean.back();
    const double scale = std::max(1.0, max_abs(cl.mean_generator.back()));
    if (gap(sum, cl.mean_generator.back()) > 1e-12 * scale) {
      throw Error(ErrorCode::RepresentationMismatch,
                  "mean generator differs from drift_state + drift_mean",
                  grid.time(i));
    }
  }
  return cl;
}

}  // namespace mixlq
