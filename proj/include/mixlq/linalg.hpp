#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "mixlq/errors.hpp"

namespace mixlq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// (M + M') / 2.
MatrixXd symmetrize(const MatrixXd& m);

/// Largest absolute entry of M - M'.
double asymmetry(const MatrixXd& m);

/// Smallest eigenvalue of the symmetric part of M; +inf for an empty matrix.
double min_eigenvalue(const MatrixXd& m);

/// Largest absolute entry; 0 for an empty matrix.
double max_abs(const MatrixXd& m);

/// Vertically stacks equally shaped blocks [M_1; ...; M_d].
MatrixXd stack_blocks(std::span<const MatrixXd> blocks);

/// Block-diagonal I_d (x) S.
MatrixXd repeat_diagonal(const MatrixXd& s, int copies);

/// Cholesky factor of a symmetric positive definite matrix. Construction
/// throws `code` when the matrix is not numerically positive definite, i.e.
/// when LLT breaks down or a pivot falls below a relative floor of 1e-13.
/// Empty matrices factor trivially.
class SpdFactor {
 public:
  SpdFactor(const MatrixXd& m, ErrorCode code, std::string_view what,
            std::optional<double> time = std::nullopt);

  MatrixXd solve(const MatrixXd& rhs) const;
  MatrixXd inverse() const;
  Eigen::Index size() const { return size_; }

 private:
  Eigen::LLT<MatrixXd> llt_;
  Eigen::Index size_;
};

}  // namespace mixlq
