#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace adpc {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::Index;

enum class ErrorCode {
  InvalidArgument,
  NotPositiveDefinite,
  DegenerateSet,
  SlaterViolated,
  NotAnAse,
  CriterionNotMet,
  FormationStalled,
  SingularMatrix,
  Infeasible,
  TubeDiverges,
  EmptyTerminalSet,
  OcpInfeasible,
  ConfigError,
};

inline const char *to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::InvalidArgument: return "InvalidArgument";
  case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
  case ErrorCode::DegenerateSet: return "DegenerateSet";
  case ErrorCode::SlaterViolated: return "SlaterViolated";
  case ErrorCode::NotAnAse: return "NotAnAse";
  case ErrorCode::CriterionNotMet: return "CriterionNotMet";
  case ErrorCode::FormationStalled: return "FormationStalled";
  case ErrorCode::SingularMatrix: return "SingularMatrix";
  case ErrorCode::Infeasible: return "Infeasible";
  case ErrorCode::TubeDiverges: return "TubeDiverges";
  case ErrorCode::EmptyTerminalSet: return "EmptyTerminalSet";
  case ErrorCode::OcpInfeasible: return "OcpInfeasible";
  case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

/// Numerical slacks used for every semidefinite comparison.
struct PsdTolerance {
  double tol_psd = 1e-8; ///< relative to the spectral norm of the tested matrix
  double tol_obj = 1e-6; ///< optimality tolerance of scalar objectives
};

template <typename Derived>
auto symmetrized(const Eigen::MatrixBase<Derived> &m) {
  return (0.5 * (m + m.transpose())).eval();
}

template <typename Scalar>
Vec<Scalar> sym_eigenvalues(const Mat<Scalar> &m) {
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(symmetrized(m),
                                                Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

template <typename Scalar> Scalar lambda_min(const Mat<Scalar> &m) {
  if (m.size() == 0)
    return Scalar(0);
  return sym_eigenvalues(m).minCoeff();
}

template <typename Scalar> Scalar lambda_max(const Mat<Scalar> &m) {
  if (m.size() == 0)
    return Scalar(0);
  return sym_eigenvalues(m).maxCoeff();
}

template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived> &m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0)
    return Scalar(0);
  Eigen::JacobiSVD<Mat<Scalar>> svd(m.eval());
  return svd.singularValues()(0);
}

/// Scale against which relative PSD tolerances are measured (never below 1e-300).
template <typename Scalar> Scalar psd_scale(const Mat<Scalar> &m) {
  Scalar s = Scalar(0);
  if (m.size() > 0) {
    Vec<Scalar> ev = sym_eigenvalues(m);
    s = std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
  }
  return std::max(s, Scalar(1e-300));
}

/// True when λ_min(m) ≥ −tol·‖m‖.
template <typename Scalar>
bool is_psd(const Mat<Scalar> &m, Scalar tol = Scalar(1e-8)) {
  if (m.size() == 0)
    return true;
  Vec<Scalar> ev = sym_eigenvalues(m);
  Scalar scale = std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
  return ev.minCoeff() >= -tol * scale;
}

/// True when λ_min(m) > tol·‖m‖.
template <typename Scalar>
bool is_pd(const Mat<Scalar> &m, Scalar tol = Scalar(1e-8)) {
  if (m.size() == 0)
    return false;
  Vec<Scalar> ev = sym_eigenvalues(m);
  Scalar scale = std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
  return ev.minCoeff() > tol * scale && ev.minCoeff() > Scalar(0);
}

/// Symmetric square root (and inverse square root) of a positive semidefinite matrix.
template <typename Scalar> Mat<Scalar> psd_sqrt(const Mat<Scalar> &m) {
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(symmetrized(m));
  Vec<Scalar> d = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

template <typename Scalar> Mat<Scalar> pd_inv_sqrt(const Mat<Scalar> &m) {
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(symmetrized(m));
  Vec<Scalar> d = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

template <typename Scalar> Mat<Scalar> pinv(const Mat<Scalar> &m) {
  if (m.size() == 0)
    return Mat<Scalar>::Zero(m.cols(), m.rows());
  Eigen::CompleteOrthogonalDecomposition<Mat<Scalar>> cod(m);
  return cod.pseudoInverse();
}

/// log det of a positive definite matrix via Cholesky.
template <typename Scalar> Scalar log_det_pd(const Mat<Scalar> &m) {
  Eigen::LLT<Mat<Scalar>> llt(symmetrized(m));
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::NotPositiveDefinite, "log_det_pd: Cholesky failed");
  Mat<Scalar> l = llt.matrixL();
  Scalar acc = Scalar(0);
  for (Index i = 0; i < l.rows(); ++i)
    acc += std::log(l(i, i));
  return Scalar(2) * acc;
}

} // namespace adpc
