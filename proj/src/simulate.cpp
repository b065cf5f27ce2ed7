#include "mixlq/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace mixlq {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void check_policy(const ProblemSpec& spec, const AffinePolicy& p) {
  const std::size_t nodes = static_cast<std::size_t>(p.grid.steps) + 1;
  if (p.grid.horizon != spec.horizon || p.F1.size() != nodes ||
      p.h1.size() != nodes || p.F2.size() != nodes ||
      p.F2bar.size() != nodes || p.h2.size() != nodes) {
    throw Error(ErrorCode::GridMismatch, "policy does not match the time grid");
  }
  const Dims& dm = spec.dims;
  for (std::size_t i = 0; i < nodes; ++i) {
    if (p.F1[i].rows() != dm.l1 || p.F1[i].cols() != dm.n ||
        p.h1[i].size() != dm.l1 || p.F2[i].rows() != dm.l2 ||
        p.F2[i].cols() != dm.n || p.F2bar[i].rows() != dm.l2 ||
        p.F2bar[i].cols() != dm.n || p.h2[i].size() != dm.l2) {
      throw Error(ErrorCode::DimensionMismatch,
                  "policy node " + std::to_string(i) + " has wrong shapes");
    }
  }
  step_frames(spec, p.grid);  // throws on misalignment
}

// Fluctuation coefficients frozen on one step.
struct StepCoefficients {
  MatrixXd drift;                    // A + B2 F2
  std::vector<MatrixXd> diff;        // Cj + D2j F2
  std::vector<VectorXd> diff_offset; // (Cj + D2j F2) Xbar + D1j u1 + D2j v2
  VectorXd u1;
  VectorXd v2;                       // F2bar Xbar + h2
};

// y += M x for a column-major M; plain loops beat the general product
// kernels at these sizes.
void gemv_add(const MatrixXd& m, const double* x, double* y) {
  const Eigen::Index rows = m.rows();
  const double* col = m.data();
  for (Eigen::Index c = 0; c < m.cols(); ++c, col += rows) {
    const double xc = x[c];
    for (Eigen::Index r = 0; r < rows; ++r) y[r] += col[r] * xc;
  }
}

}  // namespace

AffinePolicy AffinePolicy::zero(const Dims& dims, const TimeGrid& grid) {
  AffinePolicy p;
  p.grid = grid;
  const std::size_t nodes = static_cast<std::size_t>(grid.steps) + 1;
  p.F1.assign(nodes, MatrixXd::Zero(dims.l1, dims.n));
  p.h1.assign(nodes, VectorXd::Zero(dims.l1));
  p.F2.assign(nodes, MatrixXd::Zero(dims.l2, dims.n));
  p.F2bar.assign(nodes, MatrixXd::Zero(dims.l2, dims.n));
  p.h2.assign(nodes, VectorXd::Zero(dims.l2));
  return p;
}

AffinePolicy AffinePolicy::from_gains(const GainSchedule& g) {
  AffinePolicy p;
  p.grid = g.grid;
  for (std::size_t i = 0; i < g.M1.size(); ++i) {
    p.F1.push_back(g.M1[i]);
    p.h1.push_back(VectorXd::Zero(g.M1[i].rows()));
    p.F2.push_back(g.M2[i]);
    p.F2bar.push_back(g.M3[i] - g.M2[i]);
    p.h2.push_back(VectorXd::Zero(g.M2[i].rows()));
  }
  return p;
}

NoiseStream::NoiseStream(std::uint64_t seed, std::int64_t path,
                         bool antithetic)
    : sign_(antithetic && (path % 2 != 0) ? -1.0 : 1.0) {
  const auto stream = static_cast<std::uint64_t>(antithetic ? path / 2 : path);
  const std::uint64_t key = splitmix64(seed ^ splitmix64(stream));
  std::seed_seq seq{static_cast<std::uint32_t>(key),
                    static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  engine_.seed(seq);
}

double NoiseStream::next() { return sign_ * normal_(engine_); }

Eigen::Map<const VectorXd> TrajectoryBundle::state(int path, int node) const {
  const std::size_t offset =
      (static_cast<std::size_t>(path) * (grid.steps + 1) + node) * dims.n;
  return {paths.data() + offset, dims.n};
}

Eigen::Map<const VectorXd> TrajectoryBundle::control1(int step) const {
  return {controls1.data() + static_cast<std::size_t>(step) * dims.l1,
          dims.l1};
}

Eigen::Map<const VectorXd> TrajectoryBundle::control2(int path,
                                                      int step) const {
  const std::size_t offset =
      (static_cast<std::size_t>(path) * grid.steps + step) * dims.l2;
  return {controls2.data() + offset, dims.l2};
}

std::vector<VectorXd> simulate_mean(const ProblemSpec& spec,
                                    const AffinePolicy& policy) {
  check_policy(spec, policy);
  const TimeGrid& grid = policy.grid;
  const auto frames = step_frames(spec, grid);
  const double h = grid.dt();

  std::vector<VectorXd> mean(grid.steps + 1);
  mean[0] = spec.x0;
  for (int i = 0; i < grid.steps; ++i) {
    const CoefficientFrame& f = spec.schedule.frames[frames[i]];
    auto generator = [&](double w) -> std::pair<MatrixXd, VectorXd> {
      const MatrixXd F1 = (1 - w) * policy.F1[i] + w * policy.F1[i + 1];
      const MatrixXd F2 = (1 - w) * (policy.F2[i] + policy.F2bar[i]) +
                          w * (policy.F2[i + 1] + policy.F2bar[i + 1]);
      const VectorXd h1 = (1 - w) * policy.h1[i] + w * policy.h1[i + 1];
      const VectorXd h2 = (1 - w) * policy.h2[i] + w * policy.h2[i + 1];
      return {f.A + f.B1 * F1 + f.B2 * F2, f.B1 * h1 + f.B2 * h2};
    };
    const auto [G0, g0] = generator(0.0);
    const auto [Gm, gm] = generator(0.5);
    const auto [G1, g1] = generator(1.0);
    const VectorXd& x = mean[i];
    const VectorXd k1 = G0 * x + g0;
    const VectorXd k2 = Gm * (x + 0.5 * h * k1) + gm;
    const VectorXd k3 = Gm * (x + 0.5 * h * k2) + gm;
    const VectorXd k4 = G1 * (x + h * k3) + g1;
    mean[i + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!mean[i + 1].allFinite() || mean[i + 1].norm() > kBlowUpThreshold) {
      throw Error(ErrorCode::BlowUp, "mean path diverged", grid.time(i + 1));
    }
  }
  return mean;
}

TrajectoryBundle simulate_paths(const ProblemSpec& spec,
                                const AffinePolicy& policy, int n_paths,
                                std::uint64_t seed,
                                const SimulationOptions& options) {
  if (n_paths < 1) {
    throw Error(ErrorCode::InvalidArgument, "need at least one path");
  }
  if (options.antithetic && n_paths % 2 != 0) {
    throw Error(ErrorCode::InvalidArgument,
                "antithetic sampling needs an even number of paths");
  }
  const Dims& dm = spec.dims;
  const TimeGrid& grid = policy.grid;
  const int N = grid.steps;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);

  TrajectoryBundle b;
  b.grid = grid;
  b.dims = dm;
  b.seed = seed;
  b.n_paths = n_paths;
  b.antithetic = options.antithetic;
  b.mean_path = simulate_mean(spec, policy);

  const auto frames = step_frames(spec, grid);
  std::vector<StepCoefficients> steps(N);
  b.controls1.resize(static_cast<std::size_t>(N) * dm.l1);
  for (int i = 0; i < N; ++i) {
    const CoefficientFrame& f = spec.schedule.frames[frames[i]];
    StepCoefficients& s = steps[i];
    const VectorXd& xbar = b.mean_path[i];
    s.u1 = policy.F1[i] * xbar + policy.h1[i];
    s.v2 = policy.F2bar[i] * xbar + policy.h2[i];
    s.drift = f.A + f.B2 * policy.F2[i];
    for (int j = 0; j < dm.d; ++j) {
      s.diff.push_back(f.C[j] + f.D2[j] * policy.F2[i]);
      s.diff_offset.push_back(s.diff.back() * xbar + f.D1[j] * s.u1 +
                              f.D2[j] * s.v2);
    }
    std::copy(s.u1.data(), s.u1.data() + dm.l1,
              b.controls1.begin() + static_cast<std::ptrdiff_t>(i) * dm.l1);
  }

  b.paths.resize(static_cast<std::size_t>(n_paths) * (N + 1) * dm.n);
  b.controls2.resize(static_cast<std::size_t>(n_paths) * N * dm.l2);

  struct Failure {
    int path = -1;
    int node = -1;
  };

  const int n = dm.n;
  const int l2 = dm.l2;
  const double limit_sq = kBlowUpThreshold * kBlowUpThreshold;
  auto run_range = [&](int begin, int end) -> Failure {
    std::vector<double> xt(n), x(n), incr(n), tmp(n);
    for (int p = begin; p < end; ++p) {
      NoiseStream noise(seed, p, options.antithetic);
      std::fill(xt.begin(), xt.end(), 0.0);
      double* out = b.paths.data() + static_cast<std::size_t>(p) * (N + 1) * n;
      double* ctl = b.controls2.data() + static_cast<std::size_t>(p) * N * l2;
      for (int i = 0; i < N; ++i) {
        const StepCoefficients& s = steps[i];
        const double* mean = b.mean_path[i].data();
        for (int k = 0; k < n; ++k) x[k] = out[i * n + k] = mean[k] + xt[k];
        double* u2 = ctl + static_cast<std::ptrdiff_t>(i) * l2;
        std::copy(s.v2.data(), s.v2.data() + l2, u2);
        gemv_add(policy.F2[i], x.data(), u2);

        std::fill(incr.begin(), incr.end(), 0.0);
        gemv_add(s.drift, xt.data(), incr.data());
        for (int k = 0; k < n; ++k) incr[k] *= dt;
        for (int j = 0; j < dm.d; ++j) {
          std::copy(s.diff_offset[j].data(), s.diff_offset[j].data() + n, tmp.begin());
          gemv_add(s.diff[j], xt.data(), tmp.data());
          const double dw = sqdt * noise.next();
          for (int k = 0; k < n; ++k) incr[k] += dw * tmp[k];
        }
        const double* next = b.mean_path[i + 1].data();
        double norm_sq = 0.0;
        for (int k = 0; k < n; ++k) {
          xt[k] += incr[k];
          const double v = next[k] + xt[k];
          norm_sq += v * v;
        }
        // Also catches NaN.
        if (!(norm_sq <= limit_sq)) return {p, i + 1};
      }
      const double* last = b.mean_path[N].data();
      for (int k = 0; k < n; ++k) out[N * n + k] = last[k] + xt[k];
    }
    return {};
  };

  int workers = options.workers > 0
                    ? options.workers
                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, n_paths);
  std::vector<Failure> failures(workers);
  if (workers == 1) {
    failures[0] = run_range(0, n_paths);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n_paths + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int begin = std::min(n_paths, w * chunk);
      const int end = std::min(n_paths, begin + chunk);
      pool.emplace_back([&, w, begin, end] { failures[w] = run_range(begin, end); });
    }
    for (auto& t : pool) t.join();
  }
  // Chunks are ordered, so the first failing worker holds the lowest path.
  for (const Failure& f : failures) {
    if (f.path >= 0) {
      std::ostringstream os;
      os << "path " << f.path << " exceeded norm " << kBlowUpThreshold;
      throw Error(ErrorCode::BlowUp, os.str(), grid.time(f.node));
    }
  }
  return b;
}

double predicted_value(const ProblemSpec& spec,
                       const RiccatiSolution& riccati) {
  return 0.5 * spec.x0.dot(riccati.P2.front() * spec.x0);
}

std::vector<double> path_costs(const ProblemSpec& spec,
                               const TrajectoryBundle& bundle) {
  if (bundle.n_paths < 1) throw Error(ErrorCode::EmptyBundle, "bundle has no paths");
  const TimeGrid& grid = bundle.grid;
  const auto frames = step_frames(spec, grid);
  const double dt = grid.dt();

  // The deterministic control contributes the same amount to every path.
  double control1_cost = 0.0;
  for (int i = 0; i < grid.steps; ++i) {
    const auto u1 = bundle.control1(i);
    control1_cost += u1.dot(spec.schedule.frames[frames[i]].R1 * u1) * dt;
  }

  std::vector<double> costs(bundle.n_paths);
  VectorXd qx(spec.dims.n), ru(spec.dims.l2);
  for (int p = 0; p < bundle.n_paths; ++p) {
    double running = control1_cost;
    for (int i = 0; i < grid.steps; ++i) {
      const CoefficientFrame& f = spec.schedule.frames[frames[i]];
      const auto x = bundle.state(p, i);
      const auto u2 = bundle.control2(p, i);
      qx.noalias() = f.Q * x;
      ru.noalias() = f.R2 * u2;
      running += (x.dot(qx) + u2.dot(ru)) * dt;
    }
    const auto xT = bundle.state(p, grid.steps);
    qx.noalias() = spec.G * xT;
    costs[p] = 0.5 * (running + xT.dot(qx));
  }
  return costs;
}

CostEstimate estimate_cost(const ProblemSpec& spec,
                           const TrajectoryBundle& bundle,
                           const RiccatiSolution* riccati) {
  std::vector<double> costs = path_costs(spec, bundle);
  if (bundle.antithetic) {
    std::vector<double> pairs(costs.size() / 2);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      pairs[k] = 0.5 * (costs[2 * k] + costs[2 * k + 1]);
    }
    costs = std::move(pairs);
  }
  if (costs.size() < 2) {
    throw Error(ErrorCode::EmptyBundle,
                "a standard error needs at least two independent samples");
  }
  const double n = static_cast<double>(costs.size());
  double mean = 0.0;
  for (double c : costs) mean += c;
  mean /= n;
  double ss = 0.0;
  for (double c : costs) ss += (c - mean) * (c - mean);

  CostEstimate est;
  est.mc_mean = mean;
  est.mc_stderr = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  est.n_paths = bundle.n_paths;
  if (riccati) est.predicted = predicted_value(spec, *riccati);
  return est;
}

}  // namespace mixlq
