#pragma once

#include <optional>
#include <vector>

#include "mixlq/riccati.hpp"

namespace mixlq {

/// Feedback u1 = M1 Xbar, u2 = M2 (X - Xbar) + M3 Xbar.
struct Gains {
  MatrixXd M1;  // l1 x n
  MatrixXd M2;  // l2 x n
  MatrixXd M3;  // l2 x n
};

/// Gains from the primary formulas:
///   M2 = -Lambda2^-1 Theta1,
///   M1 = -LambdaHat^-1 [B1'P2 + D1'P1C - D1'P1D2 Lambda2^-1 Theta2],
///   M3 = -Lambda2^-1 [Theta2 + D2'P1D1 M1],
/// all structure maps evaluated at P1. Also evaluates the alternate form
/// (gains_alternate) and throws RepresentationMismatch if the two disagree by
/// more than 1e-9 relative to the gain magnitude.
Gains gains_at(const MatrixXd& p1, const MatrixXd& p2,
               const CoefficientFrame& frame,
               std::optional<double> time = std::nullopt);

/// Gains written through U and W instead:
///   M1 = -LambdaHat^-1 [W'P2 + D1'U C],  W = B1 - B2 Lambda2^-1 D2'P1D1,
///   M3 = -Lambda2^-1 [Theta2 + D2'P1D1 M1].
/// Algebraically identical to the primary formulas.
Gains gains_alternate(const MatrixXd& p1, const MatrixXd& p2,
                      const CoefficientFrame& frame,
                      std::optional<double> time = std::nullopt);

/// Right-hand side of the P2 equation written directly in terms of the
/// gains, before its rearrangement into Riccati form:
///   P2A + A'P2 + C'P1C + Q + C'P1D1 M1 + C'P1D2 M3 + P2B1 M1 + P2B2 M3.
MatrixXd p2_rhs_from_gains(const MatrixXd& p1, const MatrixXd& p2,
                           const CoefficientFrame& frame);

struct GainSchedule {
  TimeGrid grid;
  std::vector<MatrixXd> M1;
  std::vector<MatrixXd> M2;
  std::vector<MatrixXd> M3;
};

/// Frame governing node i: the step starting at t_i, or the last step at T.
const CoefficientFrame& node_frame(const ProblemSpec& spec,
                                   const TimeGrid& grid, int node);

GainSchedule build_gain_schedule(const ProblemSpec& spec,
                                 const RiccatiSolution& riccati);

/// Matrices of the optimal mean-field closed loop
///   dX = [drift_state X + drift_mean Xbar] dt
///        + sum_j [diff_state_j X + diff_mean_j Xbar] dW_j,
///   dXbar = mean_generator Xbar dt.
struct ClosedLoopSystem {
  TimeGrid grid;
  std::vector<MatrixXd> drift_state;                // A + B2 M2
  std::vector<MatrixXd> drift_mean;                 // B1 M1 - B2 M2 + B2 M3
  std::vector<std::vector<MatrixXd>> diff_state;    // [j][i]: Cj + D2j M2
  std::vector<std::vector<MatrixXd>> diff_mean;     // [j][i]: D1j M1 - D2j M2 + D2j M3
  std::vector<MatrixXd> mean_generator;             // A + B1 M1 + B2 M3
};

ClosedLoopSystem build_closed_loop(const ProblemSpec& spec,
                                   const GainSchedule& gains);

}  // namespace mixlq
