#pragma once

#include <optional>
#include <vector>

#include "mixlq/model.hpp"

namespace mixlq {

/// Uniform grid t_i = i * T / N on [0, T].
struct TimeGrid {
  int steps = 1;
  double horizon = 1.0;

  double dt() const { return horizon / steps; }
  double time(int i) const {
    return i == steps ? horizon : static_cast<double>(i) * horizon / steps;
  }

  /// Smallest N >= min_steps for which every schedule breakpoint is a grid
  /// node. Throws GridMismatch if no such N is found in a bounded search.
  static TimeGrid aligned(const ProblemSpec& spec, int min_steps);

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Schedule interval used on each step [t_i, t_{i+1}).
std::vector<std::size_t> step_frames(const ProblemSpec& spec,
                                     const TimeGrid& grid);

/// The derived matrices that decouple the two Riccati equations, evaluated at
/// a symmetric S. Noise contractions sum over Brownian components, e.g.
/// C'SC = sum_j Cj' S Cj and D2'SC = sum_j D2j' S Cj.
///
/// With d > 1 the map U(S) lives on the stacked noise space: it is the
/// dn x dn matrix (I_d (x) S) - (I_d (x) S) D2s Lambda2^-1 D2s' (I_d (x) S),
/// with D2s = [D2_1; ...; D2_d]. For d = 1 it is the usual n x n matrix.
struct StructureMaps {
  MatrixXd Lambda1;    // R1 + D1'SD1
  MatrixXd Lambda2;    // R2 + D2'SD2
  MatrixXd LambdaHat;  // Lambda1 - D1'SD2 Lambda2^-1 D2'SD1
  MatrixXd U;
  MatrixXd Qtilde;
  MatrixXd Atilde;
  MatrixXd Nmap;
  MatrixXd Theta1;  // B2'S + D2'SC
  MatrixXd Theta2;  // B2'P2 + D2'SC

  // Pieces reused by the gain formulas.
  MatrixXd Lambda2_inv;
  MatrixXd LambdaHat_inv;
  MatrixXd D1SC;  // D1'SC, l1 x n
  MatrixXd D1SD2; // D1'SD2, l1 x l2
  MatrixXd D1UC;  // D1s' U Cs, l1 x n
  MatrixXd W;     // B1 - B2 Lambda2^-1 D2'SD1, n x l1
};

/// Evaluates every structure map at S. Theta2 uses p2 when given, S
/// otherwise. Throws SingularLambda2 / SingularLambdaHat (tagged with `time`
/// when provided) if the corresponding Cholesky factorization fails.
StructureMaps eval_structure_maps(const MatrixXd& S,
                                  const CoefficientFrame& frame,
                                  const MatrixXd* p2 = nullptr,
                                  std::optional<double> time = std::nullopt);

// Right-hand sides F of the backward equations P' = -F(P).
MatrixXd p1_rhs(const MatrixXd& p1, const CoefficientFrame& frame,
                std::optional<double> time = std::nullopt);
MatrixXd p2_rhs(const MatrixXd& p1, const MatrixXd& p2,
                const CoefficientFrame& frame,
                std::optional<double> time = std::nullopt);
MatrixXd classic_rhs(const MatrixXd& k, const CoefficientFrame& frame,
                     std::optional<double> time = std::nullopt);

struct RiccatiSolution {
  TimeGrid grid;
  std::vector<MatrixXd> P1;
  std::vector<MatrixXd> P2;
  std::optional<std::vector<MatrixXd>> K;
};

/// Frobenius norm above which a trajectory is declared to have blown up.
inline constexpr double kBlowUpThreshold = 1e12;
/// Allowed negative excursion of P1, P2 eigenvalues (discretization slack).
inline constexpr double kNonnegativitySlack = 1e-8;

/// Backward RK4 for P1 from P1(T) = G. With require_positive every node must
/// satisfy P1 > 0 (used for the singular classes); otherwise P1 >= -1e-8 I.
std::vector<MatrixXd> solve_p1(const ProblemSpec& spec, const TimeGrid& grid,
                               bool require_positive = false);

/// Backward RK4 for P2 from P2(T) = G, advanced jointly with P1: each step
/// re-evaluates the RK4 stages of P1 from p1[i+1] and feeds them to the
/// matching P2 stages. With l1 = 0 the two equations coincide and so do the
/// computed P1 and P2, up to rounding.
std::vector<MatrixXd> solve_p2(const ProblemSpec& spec, const TimeGrid& grid,
                               const std::vector<MatrixXd>& p1);

/// Classical fully adapted Riccati equation with stacked controls
/// B = (B1, B2), D = (D1, D2), R = diag(R1, R2).
std::vector<MatrixXd> solve_classic(const ProblemSpec& spec,
                                    const TimeGrid& grid);

struct RiccatiOptions {
  bool with_classic = true;
};

/// Solves P1, P2 (and K) for a validated problem of the given class.
RiccatiSolution solve_riccati(const ProblemSpec& spec,
                              const RegularityClass& cls, const TimeGrid& grid,
                              const RiccatiOptions& options = {});

struct AreOptions {
  double tol = 1e-8;
  double t_step = 5.0;
  double t_max = 500.0;
  /// RK4 steps per horizon increment.
  int steps_per_increment = 512;
};

struct AREResult {
  MatrixXd P1inf;
  MatrixXd P2inf;
  double residual1 = 0.0;
  double residual2 = 0.0;
  std::vector<double> horizons_used;
  /// P2^T(0) for each horizon in horizons_used.
  std::vector<MatrixXd> p2_trace;
  /// Smallest eigenvalue of P2^{T_{k+1}}(0) - P2^{T_k}(0) over the trace.
  double monotone_margin = 0.0;
  bool monotone = true;
};

/// Stationary pair for a time-invariant problem with Q > 0, obtained as the
/// limit of finite-horizon solutions with zero terminal weight on horizons
/// t_step, 2 t_step, ... Successive horizons are produced by continuing the
/// backward integration, which is exact for time-invariant coefficients.
/// The singular classes keep the problem's G > 0 as terminal weight, since
/// Lambda2 or LambdaHat is singular at zero.
///
/// Throws NotTimeInvariant, Inadmissible (Q not positive definite),
/// NoConvergence (t_max reached or the finite-horizon values blew up, which
/// indicates the system is not stabilizable using only the random control)
/// and NotPositive.
AREResult solve_algebraic(const ProblemSpec& spec, const RegularityClass& cls,
                          const AreOptions& options = {});

}  // namespace mixlq
