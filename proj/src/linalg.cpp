#include "mixlq/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

namespace mixlq {

MatrixXd symmetrize(const MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

double asymmetry(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const MatrixXd& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_abs(const MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

MatrixXd stack_blocks(std::span<const MatrixXd> blocks) {
  if (blocks.empty()) return {};
  const Eigen::Index rows = blocks.front().rows();
  const Eigen::Index cols = blocks.front().cols();
  MatrixXd out(rows * static_cast<Eigen::Index>(blocks.size()), cols);
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    out.middleRows(static_cast<Eigen::Index>(j) * rows, rows) = blocks[j];
  }
  return out;
}

MatrixXd repeat_diagonal(const MatrixXd& s, int copies) {
  const Eigen::Index n = s.rows();
  MatrixXd out = MatrixXd::Zero(n * copies, n * copies);
  for (int j = 0; j < copies; ++j) out.block(j * n, j * n, n, n) = s;
  return out;
}

SpdFactor::SpdFactor(const MatrixXd& m, ErrorCode code, std::string_view what,
                     std::optional<double> time)
    : size_(m.rows()) {
  if (size_ == 0) return;
  llt_.compute(m);
  bool ok = llt_.info() == Eigen::Success;
  if (ok) {
    const VectorXd pivots = llt_.matrixL().toDenseMatrix().diagonal();
    const double scale = m.diagonal().cwiseAbs().maxCoeff();
    const double floor = 1e-13 * std::max(scale, 1e-300);
    ok = pivots.allFinite() && (pivots.array().square() > floor).all();
  }
  if (!ok) {
    throw Error(code, std::string(what) + " is not positive definite", time);
  }
}

MatrixXd SpdFactor::solve(const MatrixXd& rhs) const {
  if (size_ == 0) return MatrixXd::Zero(0, rhs.cols());
  return llt_.solve(rhs);
}

MatrixXd SpdFactor::inverse() const {
  return solve(MatrixXd::Identity(size_, size_));
}

}  // namespace mixlq
