#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "gpopt/error.hpp"

namespace gpopt {

// Jitter schedule, relative to the signal variance: first try the matrix as
// is, then add 1e-10 and keep doubling up to 1e-4.
inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;
// A Cholesky pivot below this (relative to the scale) counts as a failure.
inline constexpr double kMinRelativePivot = 1e-12;

struct JitteredCholesky {
  Eigen::MatrixXd lower;  // L with L L^T = A + jitter I
  double jitter = 0.0;
};

namespace detail {

inline double condition_estimate(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

template <typename Attempt>
auto escalate_jitter(const Eigen::MatrixXd& A, double scale, const char* what, Attempt&& attempt) {
  if (!A.allFinite()) throw NumericalError(std::string(what) + ": matrix has non-finite entries",
                                           std::numeric_limits<double>::infinity());
  double jitter = 0.0;
  while (true) {
    if (auto result = attempt(jitter)) return *result;
    if (jitter == 0.0) {
      jitter = kJitterStart * scale;
    } else if (jitter < kJitterMax * scale * (1.0 - 1e-12)) {
      jitter = std::min(2.0 * jitter, kJitterMax * scale);
    } else {
      break;
    }
  }
  const double cond = condition_estimate(A);
  std::ostringstream msg;
  msg << what << ": factorization failed after jitter escalation to " << jitter << " (condition estimate "
      << cond << ")";
  throw NumericalError(msg.str(), cond);
}

}  // namespace detail

// Solves (L L^T) x = b for lower-triangular L.
template <typename Rhs>
Eigen::Matrix<double, Eigen::Dynamic, Rhs::ColsAtCompileTime> cholesky_solve(const Eigen::MatrixXd& L,
                                                                             const Eigen::MatrixBase<Rhs>& b) {
  Eigen::Matrix<double, Eigen::Dynamic, Rhs::ColsAtCompileTime> x = L.triangularView<Eigen::Lower>().solve(b);
  L.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

/// Cholesky factorization of a symmetric positive-definite matrix with
/// jitter escalation. `scale` is the signal variance the jitter schedule is
/// relative to. Throws NumericalError when the largest jitter still fails.
inline JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& A, double scale) {
  const Eigen::Index n = A.rows();
  return detail::escalate_jitter(A, scale, "cholesky", [&](double jitter) -> std::optional<JitteredCholesky> {
    Eigen::MatrixXd M = A;
    M.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Eigen::MatrixXd L = llt.matrixL();
    const double floor = std::sqrt(kMinRelativePivot * scale);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(L(i, i) > floor) || !std::isfinite(L(i, i))) return std::nullopt;
    return JitteredCholesky{std::move(L), jitter};
  });
}

/// A square-root factor S with S S^T = A (+ jitter) for a symmetric positive
/// semi-definite A, used for drawing correlated samples. Built from a pivoted
/// LDL^T decomposition so exactly singular directions (posterior covariance at
/// noiseless training points) stay singular. Small negative pivots from
/// round-off are clamped to zero; clearly indefinite input triggers jitter.
inline Eigen::MatrixXd psd_sqrt_factor(const Eigen::MatrixXd& A, double scale) {
  return detail::escalate_jitter(A, scale, "covariance", [&](double jitter) -> std::optional<Eigen::MatrixXd> {
    Eigen::MatrixXd M = A;
    M.diagonal().array() += jitter;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    Eigen::VectorXd d = ldlt.vectorD();
    if (!d.allFinite()) return std::nullopt;
    const double tol = 1e-8 * std::max(scale, M.diagonal().cwiseAbs().maxCoeff());
    if (d.size() > 0 && d.minCoeff() < -tol) return std::nullopt;
    d = d.cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd L = ldlt.matrixL();
    Eigen::MatrixXd S = ldlt.transpositionsP().transpose() * (L * d.asDiagonal());
    return S;
  });
}

}  // namespace gpopt
