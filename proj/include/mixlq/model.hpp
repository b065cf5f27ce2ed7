#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mixlq/linalg.hpp"

namespace mixlq {

/// Problem dimensions: state n, deterministic control l1, random control l2,
/// Brownian motion d. A zero control dimension removes that controller.
struct Dims {
  int n = 1;
  int l1 = 0;
  int l2 = 0;
  int d = 1;
};

/// Coefficients that are constant on one interval of the schedule.
/// C, D1, D2 hold one matrix per Brownian component.
struct CoefficientFrame {
  MatrixXd A;   // n x n
  MatrixXd B1;  // n x l1
  MatrixXd B2;  // n x l2
  std::vector<MatrixXd> C;   // d of n x n
  std::vector<MatrixXd> D1;  // d of n x l1
  std::vector<MatrixXd> D2;  // d of n x l2
  MatrixXd Q;   // n x n
  MatrixXd R1;  // l1 x l1
  MatrixXd R2;  // l2 x l2

  /// Frame with every coefficient zero and correctly shaped.
  static CoefficientFrame zeros(const Dims& dims);
};

/// Piecewise-constant coefficients: frames[k] holds on
/// [breakpoints[k], breakpoints[k+1]).
struct CoefficientSchedule {
  std::vector<double> breakpoints;
  std::vector<CoefficientFrame> frames;
};

/// Thresholds used when validating a problem. Overridable per problem file.
struct Tolerances {
  double symmetry = 1e-12;
  double psd = 1e-10;
  /// Uniform positivity bound for the "strictly positive" hypotheses.
  double definiteness = 1e-10;
};

struct ProblemSpec {
  Dims dims;
  double horizon = 1.0;
  CoefficientSchedule schedule;
  MatrixXd G;
  VectorXd x0;
  Tolerances tolerances;

  /// Single-interval problem on [0, horizon] with the given frame.
  static ProblemSpec time_invariant(const Dims& dims, double horizon,
                                    CoefficientFrame frame, MatrixXd G,
                                    VectorXd x0);

  bool is_time_invariant() const { return schedule.frames.size() == 1; }
};

enum class Regularity { Regular, SingularR2, SingularR1 };

std::string_view to_string(Regularity r);

/// Classification of a validated problem together with the eigenvalue bounds
/// that decided it. Bounds over an empty block are +inf.
struct RegularityClass {
  Regularity tag = Regularity::Regular;
  double min_eig_R1 = 0.0;
  double min_eig_R2 = 0.0;
  double min_eig_D1tD1 = 0.0;
  double min_eig_D2tD2 = 0.0;
  double min_eig_G = 0.0;
  double min_eig_Q = 0.0;

  friend bool operator==(const RegularityClass&,
                         const RegularityClass&) = default;
};

/// Checks shapes, symmetry and nonnegativity of the weights, symmetrizes
/// Q, R1, R2 and G in place, and classifies the problem as Regular (both
/// control weights uniformly positive), SingularR2 (R2 only semidefinite,
/// compensated by control-dependent noise sum_j D2j'D2j > 0 and G > 0) or
/// SingularR1 (the mirror case). Throws Inadmissible if none applies.
RegularityClass validate(ProblemSpec& spec);

/// Index of the schedule interval containing t; right-continuous at interior
/// breakpoints, the last interval at t = T.
std::size_t interval_index(const ProblemSpec& spec, double t);

const CoefficientFrame& frame_at(const ProblemSpec& spec, double t);

}  // namespace mixlq
