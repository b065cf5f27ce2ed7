#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "mixlq/synthesis.hpp"

namespace mixlq {

/// Affine feedback
///   u1(t) = F1(t) Xbar(t) + h1(t)                  (deterministic)
///   u2(t) = F2(t) X(t) + F2bar(t) Xbar(t) + h2(t)  (adapted)
/// sampled at grid nodes. Xbar is the deterministic mean path.
struct AffinePolicy {
  TimeGrid grid;
  std::vector<MatrixXd> F1;
  std::vector<VectorXd> h1;
  std::vector<MatrixXd> F2;
  std::vector<MatrixXd> F2bar;
  std::vector<VectorXd> h2;

  static AffinePolicy zero(const Dims& dims, const TimeGrid& grid);
  /// The optimal feedback: F1 = M1, F2 = M2, F2bar = M3 - M2, h = 0.
  static AffinePolicy from_gains(const GainSchedule& gains);
};

/// Deterministic stream of standard normals for one path. The engine is
/// seeded from (seed, stream index) through a SplitMix64 finalizer, so the
/// draws of a path never depend on which worker simulates it. With
/// antithetic sampling paths 2k and 2k+1 share stream k, the odd path
/// negating every draw.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::int64_t path, bool antithetic);
  double next();

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  double sign_;
};

struct SimulationOptions {
  /// Worker threads; 0 uses the hardware concurrency.
  int workers = 0;
  bool antithetic = false;
};

/// Monte Carlo ensemble. Arrays are flat and row-major:
/// paths is P x (N+1) x n, controls1 is N x l1, controls2 is P x N x l2.
struct TrajectoryBundle {
  TimeGrid grid;
  Dims dims;
  std::vector<VectorXd> mean_path;
  std::vector<double> paths;
  std::vector<double> controls1;
  std::vector<double> controls2;
  std::uint64_t seed = 0;
  int n_paths = 0;
  bool antithetic = false;

  Eigen::Map<const VectorXd> state(int path, int node) const;
  Eigen::Map<const VectorXd> control1(int step) const;
  Eigen::Map<const VectorXd> control2(int path, int step) const;
};

struct CostEstimate {
  double mc_mean = 0.0;
  double mc_stderr = 0.0;
  std::optional<double> predicted;
  int n_paths = 0;
};

/// RK4 for Xbar' = (A + B1 F1 + B2 (F2 + F2bar)) Xbar + B1 h1 + B2 h2 from
/// x0. Policy matrices are linearly interpolated at the half step.
std::vector<VectorXd> simulate_mean(const ProblemSpec& spec,
                                    const AffinePolicy& policy);

/// Simulates P paths of the controlled state. The deterministic mean comes
/// from simulate_mean; the fluctuation X - Xbar, which satisfies
///   dXt = (A + B2 F2) Xt dt + sum_j (Cj X + D1j u1 + D2j u2) dWj,
/// is advanced by Euler-Maruyama with left-node policy values. When the mean
/// is constant this coincides with plain Euler-Maruyama on X, and with zero
/// diffusion every path equals the mean path.
TrajectoryBundle simulate_paths(const ProblemSpec& spec,
                                const AffinePolicy& policy, int n_paths,
                                std::uint64_t seed,
                                const SimulationOptions& options = {});

/// Value predicted by the Riccati solution, (1/2) <P2(0) x0, x0>.
double predicted_value(const ProblemSpec& spec, const RiccatiSolution& riccati);

/// Left-point Monte Carlo estimate of the quadratic cost
///   (1/2) E[ sum_i (X'QX + u1'R1u1 + u2'R2u2) dt + X_N' G X_N ].
/// Antithetic bundles report the standard error over pair averages.
CostEstimate estimate_cost(const ProblemSpec& spec,
                           const TrajectoryBundle& bundle,
                           const RiccatiSolution* riccati = nullptr);

/// Per-path costs in path order (same quadrature as estimate_cost).
std::vector<double> path_costs(const ProblemSpec& spec,
                               const TrajectoryBundle& bundle);

}  // namespace mixlq
