#include "mixlq/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mixlq {

Eigen::Map<const VectorXd> AdjointPath::p_at(int path, int node) const {
  const std::size_t offset =
      (static_cast<std::size_t>(path) * (grid.steps + 1) + node) * n;
  return {p.data() + offset, n};
}

Eigen::Map<const VectorXd> AdjointPath::k_at(int path, int step, int j) const {
  const std::size_t offset =
      ((static_cast<std::size_t>(path) * grid.steps + step) * d + j) * n;
  return {k.data() + offset, n};
}

AdjointPath adjoint_reconstruct(const ProblemSpec& spec,
                                const TrajectoryBundle& bundle,
                                const RiccatiSolution& riccati) {
  if (!(bundle.grid == riccati.grid) ||
      static_cast<int>(riccati.P1.size()) != riccati.grid.steps + 1) {
    throw Error(ErrorCode::GridMismatch,
                "bundle and Riccati solution use different grids");
  }
  const int N = bundle.grid.steps;
  const int n = spec.dims.n;
  const int d = spec.dims.d;
  const auto frames = step_frames(spec, bundle.grid);

  AdjointPath adj;
  adj.grid = bundle.grid;
  adj.n = n;
  adj.d = d;
  adj.n_paths = bundle.n_paths;
  adj.p.resize(static_cast<std::size_t>(bundle.n_paths) * (N + 1) * n);
  adj.k.resize(static_cast<std::size_t>(bundle.n_paths) * N * d * n);

  // P2 Xbar - P1 Xbar is shared by all paths.
  std::vector<VectorXd> mean_part(N + 1);
  for (int i = 0; i <= N; ++i) {
    mean_part[i] = (riccati.P2[i] - riccati.P1[i]) * bundle.mean_path[i];
  }

  VectorXd sigma(n);
  for (int path = 0; path < bundle.n_paths; ++path) {
    for (int i = 0; i <= N; ++i) {
      const auto x = bundle.state(path, i);
      Eigen::Map<VectorXd> p(adj.p.data() +
                                 (static_cast<std::size_t>(path) * (N + 1) + i) * n,
                             n);
      p.noalias() = riccati.P1[i] * x;
      p += mean_part[i];
      if (i == N) break;
      const CoefficientFrame& f = spec.schedule.frames[frames[i]];
      const auto u1 = bundle.control1(i);
      const auto u2 = bundle.control2(path, i);
      for (int j = 0; j < d; ++j) {
        Eigen::Map<VectorXd> kj(
            adj.k.data() + ((static_cast<std::size_t>(path) * N + i) * d + j) * n, n);
        sigma.noalias() = f.C[j] * x;
        sigma.noalias() += f.D1[j] * u1;
        sigma.noalias() += f.D2[j] * u2;
        kj.noalias() = riccati.P1[i] * sigma;
      }
    }
  }
  return adj;
}

ResidualReport optimality_residuals(const ProblemSpec& spec,
                                    const TrajectoryBundle& bundle,
                                    const AdjointPath& adjoint,
                                    double predicted, double drift_constant) {
  if (!(bundle.grid == adjoint.grid) || bundle.n_paths != adjoint.n_paths) {
    throw Error(ErrorCode::GridMismatch, "adjoint does not match bundle");
  }
  const int N = bundle.grid.steps;
  const int P = bundle.n_paths;
  const int d = spec.dims.d;
  const double dt = bundle.grid.dt();
  const double sqdt = std::sqrt(dt);
  const auto frames = step_frames(spec, bundle.grid);

  ResidualReport rep;
  const int l1 = spec.dims.l1;

  // Per-frame matrices used in the inner loops.
  struct FrameTerms {
    MatrixXd B1t, B2t, At_dt, Q_dt;
    std::vector<MatrixXd> D1t, D2t, Ct_dt;
  };
  std::vector<FrameTerms> terms;
  for (const CoefficientFrame& f : spec.schedule.frames) {
    FrameTerms t{f.B1.transpose(), f.B2.transpose(), dt * f.A.transpose(), dt * f.Q, {}, {}, {}};
    for (int j = 0; j < d; ++j) {
      t.D1t.push_back(f.D1[j].transpose());
      t.D2t.push_back(f.D2[j].transpose());
      t.Ct_dt.push_back(dt * f.C[j].transpose());
    }
    terms.push_back(std::move(t));
  }

  // r1: ensemble average per step, then L2 in time.
  if (l1 > 0) {
    MatrixXd acc = MatrixXd::Zero(l1, N);
    MatrixXd acc2 = MatrixXd::Zero(l1, N);
    VectorXd rho(l1);
    for (int p = 0; p < P; ++p) {
      for (int i = 0; i < N; ++i) {
        const FrameTerms& t = terms[frames[i]];
        rho.noalias() = t.B1t * adjoint.p_at(p, i);
        for (int j = 0; j < d; ++j) rho.noalias() += t.D1t[j] * adjoint.k_at(p, i, j);
        acc.col(i) += rho;
        acc2.col(i) += rho.cwiseAbs2();
      }
    }
    double sum_sq = 0.0;
    double var_sum = 0.0;
    for (int i = 0; i < N; ++i) {
      const CoefficientFrame& f = spec.schedule.frames[frames[i]];
      // R1 u1 is deterministic: it shifts the mean and leaves the variance.
      const VectorXd ru1 = f.R1 * bundle.control1(i);
      const VectorXd raw_mean = acc.col(i) / P;
      sum_sq += (raw_mean + ru1).squaredNorm() * dt;
      if (P > 1) {
        const VectorXd var = (acc2.col(i) - P * raw_mean.cwiseAbs2()) / (P - 1.0);
        var_sum += var.cwiseMax(0.0).sum() / P * dt;
      }
    }
    rep.r1_norm = std::sqrt(sum_sq);
    rep.r1_stderr = std::sqrt(var_sum);
  }

  // r2 (pathwise) and the BSDE drift defect.
  {
    const int l2 = spec.dims.l2;
    const int n = spec.dims.n;
    double r2_sum = 0.0;
    double drift_sum = 0.0;
    VectorXd sigma(l2), e(n);
    std::vector<double> dw(d);
    for (int p = 0; p < P; ++p) {
      NoiseStream noise(bundle.seed, p, bundle.antithetic);
      for (int i = 0; i < N; ++i) {
        const CoefficientFrame& f = spec.schedule.frames[frames[i]];
        const FrameTerms& t = terms[frames[i]];
        for (int j = 0; j < d; ++j) dw[j] = sqdt * noise.next();
        const auto pi = adjoint.p_at(p, i);
        const auto x = bundle.state(p, i);

        sigma.noalias() = t.B2t * pi;
        sigma.noalias() += f.R2 * bundle.control2(p, i);
        e = adjoint.p_at(p, i + 1) - pi;
        e.noalias() += t.At_dt * pi;
        e.noalias() += t.Q_dt * x;
        for (int j = 0; j < d; ++j) {
          const auto kj = adjoint.k_at(p, i, j);
          sigma.noalias() += t.D2t[j] * kj;
          e.noalias() += t.Ct_dt[j] * kj;
          e -= dw[j] * kj;
        }
        r2_sum += sigma.squaredNorm() * dt;
        drift_sum += e.squaredNorm();
      }
    }
    rep.r2_norm = std::sqrt(r2_sum / P);
    rep.bsde_drift_norm = std::sqrt(drift_sum / P);
  }

  ResidualTolerances& tol = rep.tolerances;
  tol.dt = dt;
  tol.n_paths = P;
  tol.r1_budget = 3.0 * rep.r1_stderr + 5.0 * dt;
  tol.r2_budget = 5.0 * dt;
  tol.drift_budget = drift_constant * sqdt * (1.0 + std::abs(predicted));
  rep.r1_pass = rep.r1_norm <= tol.r1_budget;
  rep.r2_pass = rep.r2_norm <= tol.r2_budget;
  rep.drift_pass = rep.bsde_drift_norm <= tol.drift_budget;
  return rep;
}

ValueIdentityReport value_identity(const ProblemSpec& spec,
                                   const RiccatiSolution& riccati,
                                   const CostEstimate& cost) {
  ValueIdentityReport rep;
  ValueCheck& v = rep.value;
  v.lhs = cost.mc_mean;
  v.rhs = predicted_value(spec, riccati);
  v.budget = 3.0 * cost.mc_stderr +
             2.0 * riccati.grid.dt() * (1.0 + std::abs(v.rhs));
  v.margin = v.budget - std::abs(v.lhs - v.rhs);
  v.pass = v.margin >= 0.0;
  if (riccati.K) {
    OrderingCheck o;
    o.classical = spec.x0.dot(riccati.K->front() * spec.x0);
    o.mixed = spec.x0.dot(riccati.P2.front() * spec.x0);
    o.margin = o.mixed + 1e-8 - o.classical;
    o.pass = o.margin >= 0.0;
    rep.ordering = o;
  }
  return rep;
}

double structure_nonnegativity_margin(const MatrixXd& S,
                                  const CoefficientFrame& f) {
  const StructureMaps m = eval_structure_maps(S, f);
  return std::min(min_eigenvalue(m.Qtilde), min_eigenvalue(m.U));
}

double inverse_bound_margin(const MatrixXd& D, const MatrixXd& R,
                            const MatrixXd& F) {
  const SpdFactor f(F, ErrorCode::NotPositive, "F");
  const SpdFactor inner(symmetrize(R + D.transpose() * F * D),
                        ErrorCode::NotPositive, "R + D'FD");
  return min_eigenvalue(f.inverse() - D * inner.solve(D.transpose()));
}

double woodbury_margin(const MatrixXd& A, const MatrixXd& B,
                       const MatrixXd& C, const MatrixXd& D) {
  const auto a_lu = A.partialPivLu();
  const MatrixXd d_inv = D.partialPivLu().inverse();
  const MatrixXd lhs = (A + B * d_inv * C).partialPivLu().inverse();
  const MatrixXd a_inv = a_lu.inverse();
  const MatrixXd core = (D + C * a_inv * B).partialPivLu().inverse();
  const MatrixXd rhs = a_inv - a_inv * B * core * C * a_inv;
  return -max_abs(lhs - rhs);
}

double lambda_hat_identity_margin(const MatrixXd& P1,
                                  const CoefficientFrame& f) {
  const int d = static_cast<int>(f.C.size());
  const MatrixXd D1s = stack_blocks(f.D1);
  const MatrixXd D2s = stack_blocks(f.D2);
  const SpdFactor p1(P1, ErrorCode::NotPositive, "P1");
  const SpdFactor r2(f.R2, ErrorCode::NotPositive, "R2");
  const MatrixXd inner =
      repeat_diagonal(p1.inverse(), d) + D2s * r2.solve(D2s.transpose());
  const SpdFactor inner_f(symmetrize(inner), ErrorCode::NotPositive, "inner");
  const MatrixXd woodbury = f.R1 + D1s.transpose() * inner_f.solve(D1s);
  const StructureMaps m = eval_structure_maps(P1, f);
  return -max_abs(m.LambdaHat - woodbury);
}

bool PropertySuiteReport::pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const PropertyCheck& c) { return c.failures == 0; });
}

namespace {

constexpr double kMarginFloor = -1e-10;

class InstanceSampler {
 public:
  explicit InstanceSampler(std::uint64_t seed) : rng_(seed) {}

  int dim(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }

  MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal_(rng_);
    return m;
  }

  /// Y Y' with Y of random rank, hence possibly singular.
  MatrixXd psd(Eigen::Index n) {
    const MatrixXd y = gaussian(n, dim(0, static_cast<int>(n)));
    return symmetrize(y * y.transpose());
  }

  MatrixXd pd(Eigen::Index n, double floor) {
    return symmetrize(psd(n) + floor * MatrixXd::Identity(n, n));
  }

  CoefficientFrame frame(const Dims& dims) {
    CoefficientFrame f = CoefficientFrame::zeros(dims);
    f.A = gaussian(dims.n, dims.n);
    f.B1 = gaussian(dims.n, dims.l1);
    f.B2 = gaussian(dims.n, dims.l2);
    for (int j = 0; j < dims.d; ++j) {
      f.C[j] = gaussian(dims.n, dims.n);
      f.D1[j] = gaussian(dims.n, dims.l1);
      f.D2[j] = gaussian(dims.n, dims.l2);
    }
    f.Q = psd(dims.n);
    f.R1 = pd(dims.l1, 0.1);
    f.R2 = pd(dims.l2, 0.1);
    return f;
  }

  Dims dims() { return Dims{dim(1, 4), dim(1, 3), dim(1, 3), dim(1, 2)}; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

void record(PropertyCheck& check, double margin) {
  ++check.trials;
  check.min_margin = std::min(check.min_margin, margin);
  if (!(margin >= kMarginFloor)) ++check.failures;
}

}  // namespace

PropertySuiteReport matrix_property_suite(std::uint64_t seed, int trials) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  InstanceSampler sampler(seed);
  const double inf = std::numeric_limits<double>::infinity();
  PropertyCheck nonneg{"Qtilde(S) >= 0 and U(S) >= 0", 0, 0, inf};
  PropertyCheck bound{"D (R + D'FD)^-1 D' <= F^-1", 0, 0, inf};
  PropertyCheck woodbury{"matrix inverse formula", 0, 0, inf};
  PropertyCheck lambda_hat{"LambdaHat(P1) identity", 0, 0, inf};

  for (int t = 0; t < trials; ++t) {
    // S >= 0, possibly singular; the first trial uses S = 0.
    {
      const Dims dims = sampler.dims();
      const CoefficientFrame f = sampler.frame(dims);
      const MatrixXd S = t == 0 ? MatrixXd::Zero(dims.n, dims.n) : sampler.psd(dims.n);
      double margin = -inf;
      try {
        margin = structure_nonnegativity_margin(S, f);
      } catch (const Error&) {
      }
      record(nonneg, margin);
    }
    // Inverse bound; the first trial uses D = 0.
    {
      const int n = sampler.dim(1, 4);
      const int m = sampler.dim(1, 4);
      const MatrixXd D = t == 0 ? MatrixXd::Zero(n, m) : sampler.gaussian(n, m);
      double margin = -inf;
      try {
        margin = inverse_bound_margin(D, sampler.pd(m, 0.1), sampler.pd(n, 0.5));
      } catch (const Error&) {
      }
      record(bound, margin);
    }
    // Inverse formula with well-conditioned A, D.
    {
      const int n = sampler.dim(1, 4);
      const int m = sampler.dim(1, 4);
      const MatrixXd A = sampler.pd(n, 1.0);
      const MatrixXd D = sampler.pd(m, 1.0);
      const MatrixXd B = sampler.gaussian(n, m, 0.5);
      const MatrixXd C = B.transpose();
      record(woodbury, woodbury_margin(A, B, C, D));
    }
    // LambdaHat identity with R1, R2, P1 > 0.
    {
      const Dims dims = sampler.dims();
      const CoefficientFrame f = sampler.frame(dims);
      const MatrixXd P1 = sampler.pd(dims.n, 0.5);
      double margin = -inf;
      try {
        margin = lambda_hat_identity_margin(P1, f);
      } catch (const Error&) {
      }
      record(lambda_hat, margin);
    }
  }
  return {{nonneg, bound, woodbury, lambda_hat}};
}

}  // namespace mixlq
