#include "mixlq/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mixlq {

namespace {

void check_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                 std::string_view name, std::size_t interval) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " on interval " << interval << " is " << m.rows() << "x"
       << m.cols() << ", expected " << rows << "x" << cols;
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
}

void check_noise_family(const std::vector<MatrixXd>& family, const Dims& dims,
                        Eigen::Index cols, std::string_view name,
                        std::size_t interval) {
  if (static_cast<int>(family.size()) != dims.d) {
    std::ostringstream os;
    os << name << " on interval " << interval << " has " << family.size()
       << " noise components, expected d=" << dims.d;
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  for (std::size_t j = 0; j < family.size(); ++j) {
    check_shape(family[j], dims.n, cols,
                std::string(name) + "[" + std::to_string(j) + "]", interval);
  }
}

// Symmetry and PSD check followed by exact symmetrization.
void check_weight(MatrixXd& m, const Tolerances& tol, std::string_view name,
                  std::string_view where) {
  const double asym = asymmetry(m);
  if (asym > tol.symmetry) {
    std::ostringstream os;
    os << name << where << " is not symmetric (max |M - M'| = " << asym
       << ")";
    throw Error(ErrorCode::NotSymmetric, os.str());
  }
  m = symmetrize(m);
  const double lambda = min_eigenvalue(m);
  if (lambda < -tol.psd) {
    std::ostringstream os;
    os << name << where << " has eigenvalue " << lambda << " < -" << tol.psd;
    throw Error(ErrorCode::NotPSD, os.str());
  }
}

MatrixXd noise_gram(const std::vector<MatrixXd>& family, Eigen::Index cols) {
  MatrixXd gram = MatrixXd::Zero(cols, cols);
  for (const auto& dj : family) gram += dj.transpose() * dj;
  return gram;
}

}  // namespace

CoefficientFrame CoefficientFrame::zeros(const Dims& dims) {
  CoefficientFrame f;
  f.A = MatrixXd::Zero(dims.n, dims.n);
  f.B1 = MatrixXd::Zero(dims.n, dims.l1);
  f.B2 = MatrixXd::Zero(dims.n, dims.l2);
  f.C.assign(dims.d, MatrixXd::Zero(dims.n, dims.n));
  f.D1.assign(dims.d, MatrixXd::Zero(dims.n, dims.l1));
  f.D2.assign(dims.d, MatrixXd::Zero(dims.n, dims.l2));
  f.Q = MatrixXd::Zero(dims.n, dims.n);
  f.R1 = MatrixXd::Zero(dims.l1, dims.l1);
  f.R2 = MatrixXd::Zero(dims.l2, dims.l2);
  return f;
}

ProblemSpec ProblemSpec::time_invariant(const Dims& dims, double horizon,
                                        CoefficientFrame frame, MatrixXd G,
                                        VectorXd x0) {
  ProblemSpec spec;
  spec.dims = dims;
  spec.horizon = horizon;
  spec.schedule.breakpoints = {0.0, horizon};
  spec.schedule.frames = {std::move(frame)};
  spec.G = std::move(G);
  spec.x0 = std::move(x0);
  return spec;
}

std::string_view to_string(Regularity r) {
  switch (r) {
    case Regularity::Regular: return "Regular";
    case Regularity::SingularR2: return "SingularR2";
    case Regularity::SingularR1: return "SingularR1";
  }
  return "Unknown";
}

RegularityClass validate(ProblemSpec& spec) {
  const Dims& dims = spec.dims;
  if (dims.n < 1 || dims.d < 1 || dims.l1 < 0 || dims.l2 < 0 ||
      dims.l1 + dims.l2 < 1) {
    std::ostringstream os;
    os << "invalid dims n=" << dims.n << " l1=" << dims.l1
       << " l2=" << dims.l2 << " d=" << dims.d
       << " (need n>=1, d>=1, l1,l2>=0, l1+l2>=1)";
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon)) {
    throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
  }

  auto& bp = spec.schedule.breakpoints;
  auto& frames = spec.schedule.frames;
  if (frames.empty() || bp.size() != frames.size() + 1) {
    throw Error(ErrorCode::DimensionMismatch,
                "schedule needs one more breakpoint than frames");
  }
  if (bp.front() != 0.0 || bp.back() != spec.horizon) {
    throw Error(ErrorCode::InvalidArgument,
                "schedule breakpoints must start at 0 and end at the horizon");
  }
  for (std::size_t k = 1; k < bp.size(); ++k) {
    if (!(bp[k] > bp[k - 1])) {
      throw Error(ErrorCode::InvalidArgument,
                  "schedule breakpoints must be strictly increasing");
    }
  }

  const Tolerances& tol = spec.tolerances;
  RegularityClass cls;
  cls.min_eig_R1 = cls.min_eig_R2 = cls.min_eig_Q =
      std::numeric_limits<double>::infinity();
  cls.min_eig_D1tD1 = cls.min_eig_D2tD2 =
      std::numeric_limits<double>::infinity();

  for (std::size_t k = 0; k < frames.size(); ++k) {
    CoefficientFrame& f = frames[k];
    check_shape(f.A, dims.n, dims.n, "A", k);
    check_shape(f.B1, dims.n, dims.l1, "B1", k);
    check_shape(f.B2, dims.n, dims.l2, "B2", k);
    check_noise_family(f.C, dims, dims.n, "C", k);
    check_noise_family(f.D1, dims, dims.l1, "D1", k);
    check_noise_family(f.D2, dims, dims.l2, "D2", k);
    check_shape(f.Q, dims.n, dims.n, "Q", k);
    check_shape(f.R1, dims.l1, dims.l1, "R1", k);
    check_shape(f.R2, dims.l2, dims.l2, "R2", k);

    const std::string where = " on interval " + std::to_string(k);
    check_weight(f.Q, tol, "Q", where);
    check_weight(f.R1, tol, "R1", where);
    check_weight(f.R2, tol, "R2", where);

    cls.min_eig_Q = std::min(cls.min_eig_Q, min_eigenvalue(f.Q));
    cls.min_eig_R1 = std::min(cls.min_eig_R1, min_eigenvalue(f.R1));
    cls.min_eig_R2 = std::min(cls.min_eig_R2, min_eigenvalue(f.R2));
    cls.min_eig_D1tD1 = std::min(
        cls.min_eig_D1tD1, min_eigenvalue(noise_gram(f.D1, dims.l1)));
    cls.min_eig_D2tD2 = std::min(
        cls.min_eig_D2tD2, min_eigenvalue(noise_gram(f.D2, dims.l2)));
  }

  if (spec.G.rows() != dims.n || spec.G.cols() != dims.n) {
    throw Error(ErrorCode::DimensionMismatch, "G must be n x n");
  }
  if (spec.x0.size() != dims.n) {
    throw Error(ErrorCode::DimensionMismatch, "x0 must have length n");
  }
  check_weight(spec.G, tol, "G", "");
  cls.min_eig_G = min_eigenvalue(spec.G);

  const double eps = tol.definiteness;
  const bool r1_pos = cls.min_eig_R1 >= eps;
  const bool r2_pos = cls.min_eig_R2 >= eps;
  const bool g_pos = cls.min_eig_G >= eps;
  if (r1_pos && r2_pos) {
    cls.tag = Regularity::Regular;
  } else if (r1_pos && cls.min_eig_D2tD2 >= eps && g_pos) {
    cls.tag = Regularity::SingularR2;
  } else if (r2_pos && cls.min_eig_D1tD1 >= eps && g_pos) {
    cls.tag = Regularity::SingularR1;
  } else {
    std::ostringstream os;
    os << "no admissible hypothesis set holds:";
    if (!r1_pos) os << " min eig R1 = " << cls.min_eig_R1 << " < " << eps << ";";
    if (!r2_pos) os << " min eig R2 = " << cls.min_eig_R2 << " < " << eps << ";";
    if (!r2_pos && cls.min_eig_D2tD2 < eps) {
      os << " sum_j D2j'D2j not positive definite (min eig "
         << cls.min_eig_D2tD2 << ");";
    }
    if (!r1_pos && cls.min_eig_D1tD1 < eps) {
      os << " sum_j D1j'D1j not positive definite (min eig "
         << cls.min_eig_D1tD1 << ");";
    }
    if (!g_pos) os << " G not positive definite (min eig " << cls.min_eig_G << ");";
    throw Error(ErrorCode::Inadmissible, os.str());
  }
  return cls;
}

std::size_t interval_index(const ProblemSpec& spec, double t) {
  if (!(t >= 0.0 && t <= spec.horizon)) {
    std::ostringstream os;
    os << "time " << t << " outside [0, " << spec.horizon << "]";
    throw Error(ErrorCode::OutOfRange, os.str());
  }
  const auto& bp = spec.schedule.breakpoints;
  const auto it = std::upper_bound(bp.begin(), bp.end(), t);
  const auto idx = static_cast<std::size_t>(it - bp.begin());
  return std::min(idx == 0 ? 0 : idx - 1, spec.schedule.frames.size() - 1);
}

const CoefficientFrame& frame_at(const ProblemSpec& spec, double t) {
  return spec.schedule.frames[interval_index(spec, t)];
}

}  // namespace mixlq
