#include "mixlq/riccati.hpp"

#include <cmath>
#include <sstream>

namespace mixlq {

namespace {

struct StackedNoise {
  MatrixXd C;   // dn x n
  MatrixXd D1;  // dn x l1
  MatrixXd D2;  // dn x l2
};

StackedNoise stacked(const CoefficientFrame& f) {
  return {stack_blocks(f.C), stack_blocks(f.D1), stack_blocks(f.D2)};
}

void check_finite_bounded(const MatrixXd& m, double t, std::string_view what) {
  if (!m.allFinite() || m.norm() > kBlowUpThreshold) {
    std::ostringstream os;
    os << what << " exceeded Frobenius norm " << kBlowUpThreshold;
    throw Error(ErrorCode::BlowUp, os.str(), t);
  }
}

// One backward RK4 step of P' = -F(P) from t_{i+1} to t_i, written in
// reversed time so that the increment is +h F. `rhs(theta, P)` evaluates F
// at the stage located a fraction theta of the way from t_{i+1} to t_i.
template <typename Rhs>
MatrixXd rk4_backward_step(const MatrixXd& p, double h, Rhs&& rhs) {
  const MatrixXd k1 = rhs(0.0, p);
  const MatrixXd k2 = rhs(0.5, symmetrize(p + 0.5 * h * k1));
  const MatrixXd k3 = rhs(0.5, symmetrize(p + 0.5 * h * k2));
  const MatrixXd k4 = rhs(1.0, symmetrize(p + h * k3));
  return symmetrize(p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

void check_nonnegative(const MatrixXd& p, double t, std::string_view what,
                       bool strict) {
  const double lambda = min_eigenvalue(p);
  if (strict ? !(lambda > 0.0) : lambda < -kNonnegativitySlack) {
    std::ostringstream os;
    os << what << " has minimum eigenvalue " << lambda
       << (strict ? " (positive definite required)" : "");
    throw Error(ErrorCode::NotPositive, os.str(), t);
  }
}

}  // namespace

TimeGrid TimeGrid::aligned(const ProblemSpec& spec, int min_steps) {
  if (min_steps < 1) {
    throw Error(ErrorCode::InvalidArgument, "grid needs at least one step");
  }
  const double T = spec.horizon;
  const int limit = min_steps * 64 + 10000;
  for (int n = min_steps; n <= limit; ++n) {
    bool ok = true;
    for (double b : spec.schedule.breakpoints) {
      const double pos = b * n / T;
      if (std::abs(pos - std::round(pos)) > 1e-9 * std::max(1.0, pos)) {
        ok = false;
        break;
      }
    }
    if (ok) return TimeGrid{n, T};
  }
  throw Error(ErrorCode::GridMismatch,
              "no uniform grid aligns with the schedule breakpoints");
}

std::vector<std::size_t> step_frames(const ProblemSpec& spec,
                                     const TimeGrid& grid) {
  if (grid.horizon != spec.horizon) {
    throw Error(ErrorCode::GridMismatch, "grid horizon differs from problem");
  }
  std::vector<std::size_t> out(grid.steps);
  for (int i = 0; i < grid.steps; ++i) {
    out[i] = interval_index(spec, grid.time(i) + 0.5 * grid.dt());
  }
  return out;
}

StructureMaps eval_structure_maps(const MatrixXd& S,
                                  const CoefficientFrame& f,
                                  const MatrixXd* p2,
                                  std::optional<double> time) {
  const int d = static_cast<int>(f.C.size());
  const StackedNoise st = stacked(f);
  const MatrixXd Sb = repeat_diagonal(S, d);
  const MatrixXd SC = Sb * st.C;
  const MatrixXd SD1 = Sb * st.D1;
  const MatrixXd SD2 = Sb * st.D2;

  StructureMaps m;
  const MatrixXd CSC = st.C.transpose() * SC;
  m.D1SC = st.D1.transpose() * SC;
  const MatrixXd D2SC = st.D2.transpose() * SC;
  m.D1SD2 = st.D1.transpose() * SD2;

  m.Lambda1 = symmetrize(f.R1 + st.D1.transpose() * SD1);
  m.Lambda2 = symmetrize(f.R2 + st.D2.transpose() * SD2);
  const SpdFactor l2(m.Lambda2, ErrorCode::SingularLambda2, "Lambda2", time);
  m.Lambda2_inv = symmetrize(l2.inverse());

  m.LambdaHat =
      symmetrize(m.Lambda1 - m.D1SD2 * l2.solve(m.D1SD2.transpose()));
  const SpdFactor lh(m.LambdaHat, ErrorCode::SingularLambdaHat, "LambdaHat",
                     time);
  m.LambdaHat_inv = symmetrize(lh.inverse());

  m.U = symmetrize(Sb - SD2 * l2.solve(SD2.transpose()));
  const MatrixXd UC = m.U * st.C;
  const MatrixXd CUC = st.C.transpose() * UC;
  m.D1UC = st.D1.transpose() * UC;

  m.Qtilde = symmetrize(f.Q + CUC - m.D1UC.transpose() * lh.solve(m.D1UC));
  m.W = f.B1 - f.B2 * l2.solve(m.D1SD2.transpose());
  m.Atilde = f.A - f.B2 * l2.solve(D2SC) - m.W * lh.solve(m.D1UC);
  m.Nmap = symmetrize(f.B2 * l2.solve(f.B2.transpose()) +
                      m.W * lh.solve(m.W.transpose()));
  m.Theta1 = f.B2.transpose() * S + D2SC;
  m.Theta2 = f.B2.transpose() * (p2 ? *p2 : S) + D2SC;
  return m;
}

MatrixXd p1_rhs(const MatrixXd& p1, const CoefficientFrame& f,
                std::optional<double> time) {
  const int d = static_cast<int>(f.C.size());
  const StackedNoise st = stacked(f);
  const MatrixXd Sb = repeat_diagonal(p1, d);
  const MatrixXd SC = Sb * st.C;
  const MatrixXd lambda2 = symmetrize(f.R2 + st.D2.transpose() * Sb * st.D2);
  const SpdFactor l2(lambda2, ErrorCode::SingularLambda2, "Lambda2", time);
  // Theta1 = B2'P1 + D2'P1C, so (P1B2 + C'P1D2) = Theta1'.
  const MatrixXd theta1 = f.B2.transpose() * p1 + st.D2.transpose() * SC;
  const MatrixXd out = p1 * f.A + f.A.transpose() * p1 +
                       st.C.transpose() * SC + f.Q -
                       theta1.transpose() * l2.solve(theta1);
  return symmetrize(out);
}

MatrixXd p2_rhs(const MatrixXd& p1, const MatrixXd& p2,
                const CoefficientFrame& f, std::optional<double> time) {
  const StructureMaps m = eval_structure_maps(p1, f, nullptr, time);
  return symmetrize(p2 * m.Atilde + m.Atilde.transpose() * p2 + m.Qtilde -
                    p2 * m.Nmap * p2);
}

MatrixXd classic_rhs(const MatrixXd& k, const CoefficientFrame& f,
                     std::optional<double> time) {
  const Eigen::Index n = f.A.rows();
  const Eigen::Index l1 = f.B1.cols();
  const Eigen::Index l2 = f.B2.cols();
  MatrixXd B(n, l1 + l2);
  B << f.B1, f.B2;
  MatrixXd R = MatrixXd::Zero(l1 + l2, l1 + l2);
  R.topLeftCorner(l1, l1) = f.R1;
  R.bottomRightCorner(l2, l2) = f.R2;

  MatrixXd CKC = MatrixXd::Zero(n, n);
  MatrixXd CKD = MatrixXd::Zero(n, l1 + l2);
  MatrixXd DKD = MatrixXd::Zero(l1 + l2, l1 + l2);
  for (std::size_t j = 0; j < f.C.size(); ++j) {
    MatrixXd Dj(n, l1 + l2);
    Dj << f.D1[j], f.D2[j];
    const MatrixXd KC = k * f.C[j];
    const MatrixXd KD = k * Dj;
    CKC += f.C[j].transpose() * KC;
    CKD += f.C[j].transpose() * KD;
    DKD += Dj.transpose() * KD;
  }
  const SpdFactor lambda(symmetrize(R + DKD), ErrorCode::SingularLambda,
                         "R + D'KD", time);
  const MatrixXd cross = k * B + CKD;
  return symmetrize(k * f.A + f.A.transpose() * k + CKC + f.Q -
                    cross * lambda.solve(cross.transpose()));
}

std::vector<MatrixXd> solve_p1(const ProblemSpec& spec, const TimeGrid& grid,
                               bool require_positive) {
  const auto frames = step_frames(spec, grid);
  const double h = grid.dt();
  std::vector<MatrixXd> p(grid.steps + 1);
  p[grid.steps] = spec.G;
  check_nonnegative(p[grid.steps], grid.horizon, "P1", require_positive);
  for (int i = grid.steps - 1; i >= 0; --i) {
    const CoefficientFrame& f = spec.schedule.frames[frames[i]];
    const double t_hi = grid.time(i + 1);
    auto rhs = [&](double theta, const MatrixXd& s) {
      return p1_rhs(s, f, t_hi - theta * h);
    };
    p[i] = rk4_backward_step(p[i + 1], h, rhs);
    check_finite_bounded(p[i], grid.time(i), "P1");
    check_nonnegative(p[i], grid.time(i), "P1", require_positive);
  }
  return p;
}

std::vector<MatrixXd> solve_p2(const ProblemSpec& spec, const TimeGrid& grid,
                               const std::vector<MatrixXd>& p1) {
  if (static_cast<int>(p1.size()) != grid.steps + 1) {
    throw Error(ErrorCode::GridMismatch, "P1 trajectory length differs from grid");
  }
  const auto frames = step_frames(spec, grid);
  const double h = grid.dt();
  std::vector<MatrixXd> p(grid.steps + 1);
  p[grid.steps] = spec.G;
  for (int i = grid.steps - 1; i >= 0; --i) {
    const CoefficientFrame& f = spec.schedule.frames[frames[i]];
    const double t_hi = grid.time(i + 1);
    const double t_mid = t_hi - 0.5 * h;
    // Replays the P1 stages so the pair advances as one RK4 system.
    const MatrixXd& a0 = p1[i + 1];
    const MatrixXd a1 = symmetrize(a0 + 0.5 * h * p1_rhs(a0, f, t_hi));
    const MatrixXd a2 = symmetrize(a0 + 0.5 * h * p1_rhs(a1, f, t_mid));
    const MatrixXd a3 = symmetrize(a0 + h * p1_rhs(a2, f, t_mid));
    const MatrixXd& q = p[i + 1];
    const MatrixXd k1 = p2_rhs(a0, q, f, t_hi);
    const MatrixXd k2 = p2_rhs(a1, symmetrize(q + 0.5 * h * k1), f, t_mid);
    const MatrixXd k3 = p2_rhs(a2, symmetrize(q + 0.5 * h * k2), f, t_mid);
    const MatrixXd k4 = p2_rhs(a3, symmetrize(q + h * k3), f, grid.time(i));
    p[i] = symmetrize(q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    check_finite_bounded(p[i], grid.time(i), "P2");
    check_nonnegative(p[i], grid.time(i), "P2", false);
  }
  return p;
}

std::vector<MatrixXd> solve_classic(const ProblemSpec& spec,
                                    const TimeGrid& grid) {
  const auto frames = step_frames(spec, grid);
  const double h = grid.dt();
  std::vector<MatrixXd> k(grid.steps + 1);
  k[grid.steps] = spec.G;
  for (int i = grid.steps - 1; i >= 0; --i) {
    const CoefficientFrame& f = spec.schedule.frames[frames[i]];
    const double t_hi = grid.time(i + 1);
    auto rhs = [&](double theta, const MatrixXd& s) {
      return classic_rhs(s, f, t_hi - theta * h);
    };
    k[i] = rk4_backward_step(k[i + 1], h, rhs);
    check_finite_bounded(k[i], grid.time(i), "K");
  }
  return k;
}

RiccatiSolution solve_riccati(const ProblemSpec& spec,
                              const RegularityClass& cls, const TimeGrid& grid,
                              const RiccatiOptions& options) {
  RiccatiSolution sol;
  sol.grid = grid;
  sol.P1 = solve_p1(spec, grid, cls.tag != Regularity::Regular);
  sol.P2 = solve_p2(spec, grid, sol.P1);
  if (options.with_classic) sol.K = solve_classic(spec, grid);
  return sol;
}

AREResult solve_algebraic(const ProblemSpec& spec, const RegularityClass& cls,
                          const AreOptions& options) {
  if (!spec.is_time_invariant()) {
    throw Error(ErrorCode::NotTimeInvariant,
                "time-invariant required: the schedule has " +
                    std::to_string(spec.schedule.frames.size()) +
                    " intervals");
  }
  if (!(options.tol > 0.0) || !(options.t_step > 0.0) ||
      !(options.t_max >= options.t_step) || options.steps_per_increment < 1) {
    throw Error(ErrorCode::InvalidArgument,
                "need tol > 0, t_step > 0, t_max >= t_step, steps >= 1");
  }
  const CoefficientFrame& f = spec.schedule.frames.front();
  if (!(min_eigenvalue(f.Q) >= spec.tolerances.definiteness)) {
    throw Error(ErrorCode::Inadmissible,
                "the stationary problem requires Q positive definite");
  }

  const Eigen::Index n = spec.dims.n;
  MatrixXd p1 = cls.tag == Regularity::Regular ? MatrixXd::Zero(n, n) : spec.G;
  MatrixXd p2 = p1;
  const double h = options.t_step / options.steps_per_increment;

  AREResult out;
  out.monotone_margin = std::numeric_limits<double>::infinity();
  double horizon = 0.0;
  const auto no_convergence = [&](const std::string& why) {
    std::ostringstream os;
    os << why << " by horizon " << horizon
       << "; the system is likely not stabilizable using only control u^2";
    return Error(ErrorCode::NoConvergence, os.str());
  };

  while (horizon + options.t_step <= options.t_max * (1.0 + 1e-12)) {
    const MatrixXd p1_prev = p1;
    const MatrixXd p2_prev = p2;
    try {
      for (int s = 0; s < options.steps_per_increment; ++s) {
        // Joint RK4 on the autonomous pair (P1, P2).
        auto F = [&](const MatrixXd& a, const MatrixXd& b) {
          return std::pair{p1_rhs(a, f), p2_rhs(a, b, f)};
        };
        const auto [a1, b1] = F(p1, p2);
        const auto [a2, b2] =
            F(symmetrize(p1 + 0.5 * h * a1), symmetrize(p2 + 0.5 * h * b1));
        const auto [a3, b3] =
            F(symmetrize(p1 + 0.5 * h * a2), symmetrize(p2 + 0.5 * h * b2));
        const auto [a4, b4] =
            F(symmetrize(p1 + h * a3), symmetrize(p2 + h * b3));
        p1 = symmetrize(p1 + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4));
        p2 = symmetrize(p2 + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4));
        check_finite_bounded(p1, horizon, "P1");
        check_finite_bounded(p2, horizon, "P2");
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BlowUp) throw no_convergence("values diverged");
      throw;
    }
    horizon += options.t_step;
    out.horizons_used.push_back(horizon);
    out.p2_trace.push_back(p2);
    out.monotone_margin =
        std::min(out.monotone_margin, min_eigenvalue(p2 - p2_prev));

    if ((p1 - p1_prev).norm() < options.tol &&
        (p2 - p2_prev).norm() < options.tol) {
      out.P1inf = p1;
      out.P2inf = p2;
      out.residual1 = p1_rhs(p1, f).norm();
      out.residual2 = p2_rhs(p1, p2, f).norm();
      out.monotone = out.monotone_margin >= -1e-10;
      if (out.residual1 > 10.0 * options.tol ||
          out.residual2 > 10.0 * options.tol) {
        std::ostringstream os;
        os << "algebraic residuals " << out.residual1 << ", " << out.residual2
           << " exceed " << 10.0 * options.tol;
        throw no_convergence(os.str());
      }
      if (!(min_eigenvalue(p1) > 0.0) || !(min_eigenvalue(p2) > 0.0)) {
        throw Error(ErrorCode::NotPositive,
                    "stationary solution is not positive definite");
      }
      return out;
    }
  }
  throw no_convergence("successive horizons still differ");
}

}  // namespace mixlq
