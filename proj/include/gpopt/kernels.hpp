#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gpopt/error.hpp"

namespace gpopt {

enum class KernelFamily { SquaredExpIso, SquaredExpArd, Matern };

// Matérn smoothness; only the half-integer values with closed forms.
enum class MaternNu { Half, ThreeHalves, FiveHalves };

inline double nu_value(MaternNu nu) {
  switch (nu) {
    case MaternNu::Half: return 0.5;
    case MaternNu::ThreeHalves: return 1.5;
    case MaternNu::FiveHalves: return 2.5;
  }
  return 0.0;
}

inline MaternNu matern_nu_from_value(double nu) {
  if (nu == 0.5) return MaternNu::Half;
  if (nu == 1.5) return MaternNu::ThreeHalves;
  if (nu == 2.5) return MaternNu::FiveHalves;
  throw InvalidArgument("Matern smoothness must be 0.5, 1.5 or 2.5, got " + std::to_string(nu));
}

/// Covariance family plus hyperparameters.
///
/// Every family carries a signal variance so kernels are interchangeable.
/// SquaredExpIso has exactly one length-scale; SquaredExpArd and Matern have
/// one per input dimension. Immutable after construction.
///
/// Log-hyperparameter layout (used by gradients and fitting):
///   [log signal_variance, log length_scale_0, ..., log length_scale_{k-1}]
class KernelSpec {
 public:
  static KernelSpec squared_exp_iso(double signal_variance, double length_scale) {
    Eigen::VectorXd ls(1);
    ls[0] = length_scale;
    return KernelSpec(KernelFamily::SquaredExpIso, signal_variance, std::move(ls), MaternNu::FiveHalves);
  }

  static KernelSpec squared_exp_ard(double signal_variance, Eigen::VectorXd length_scales) {
    return KernelSpec(KernelFamily::SquaredExpArd, signal_variance, std::move(length_scales),
                      MaternNu::FiveHalves);
  }

  static KernelSpec matern(MaternNu nu, double signal_variance, Eigen::VectorXd length_scales) {
    return KernelSpec(KernelFamily::Matern, signal_variance, std::move(length_scales), nu);
  }

  // Builds a spec of the given family from a log-hyperparameter vector.
  static KernelSpec from_log_hypers(KernelFamily family, MaternNu nu, const Eigen::VectorXd& log_hypers) {
    if (log_hypers.size() < 2) throw InvalidArgument("log-hyperparameter vector too short");
    Eigen::VectorXd ls = log_hypers.tail(log_hypers.size() - 1).array().exp();
    if (family == KernelFamily::SquaredExpIso && ls.size() != 1)
      throw InvalidArgument("isotropic kernel takes exactly one length-scale");
    return KernelSpec(family, std::exp(log_hypers[0]), std::move(ls), nu);
  }

  KernelFamily family() const noexcept { return family_; }
  double signal_variance() const noexcept { return signal_variance_; }
  const Eigen::VectorXd& length_scales() const noexcept { return length_scales_; }
  // Meaningful only for Matern.
  MaternNu nu() const noexcept { return nu_; }

  Eigen::Index num_hypers() const noexcept { return 1 + length_scales_.size(); }

  Eigen::VectorXd log_hypers() const {
    Eigen::VectorXd out(num_hypers());
    out[0] = std::log(signal_variance_);
    out.tail(length_scales_.size()) = length_scales_.array().log();
    return out;
  }

  KernelSpec with_log_hypers(const Eigen::VectorXd& log_hypers) const {
    return from_log_hypers(family_, nu_, log_hypers);
  }

  // Whether points of dimension d can be fed to this kernel.
  bool accepts_dimension(Eigen::Index d) const noexcept {
    return family_ == KernelFamily::SquaredExpIso ? d >= 1 : length_scales_.size() == d;
  }

  friend bool operator==(const KernelSpec& a, const KernelSpec& b) {
    return a.family_ == b.family_ && a.signal_variance_ == b.signal_variance_ &&
           a.length_scales_.size() == b.length_scales_.size() && a.length_scales_ == b.length_scales_ &&
           (a.family_ != KernelFamily::Matern || a.nu_ == b.nu_);
  }

 private:
  KernelSpec(KernelFamily family, double signal_variance, Eigen::VectorXd length_scales, MaternNu nu)
      : family_(family), signal_variance_(signal_variance), length_scales_(std::move(length_scales)), nu_(nu) {
    if (!(signal_variance_ > 0.0) || !std::isfinite(signal_variance_))
      throw InvalidArgument("signal variance must be positive and finite");
    if (length_scales_.size() == 0) throw InvalidArgument("at least one length-scale is required");
    for (Eigen::Index i = 0; i < length_scales_.size(); ++i) {
      if (!(length_scales_[i] > 0.0) || !std::isfinite(length_scales_[i]))
        throw InvalidArgument("length-scales must be positive and finite");
    }
  }

  KernelFamily family_;
  double signal_variance_;
  Eigen::VectorXd length_scales_;
  MaternNu nu_;
};

namespace detail {

inline void check_point_pair(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& xp) {
  if (x.size() != xp.size()) throw InvalidArgument("kernel inputs have different dimensions");
  if (!spec.accepts_dimension(x.size()))
    throw InvalidArgument("kernel length-scales do not match input dimension " + std::to_string(x.size()));
  if (!x.allFinite() || !xp.allFinite()) throw InvalidArgument("non-finite kernel input coordinate");
}

inline void check_points(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (!spec.accepts_dimension(X.cols()))
    throw InvalidArgument("kernel length-scales do not match input dimension " + std::to_string(X.cols()));
  if (!X.allFinite()) throw InvalidArgument("non-finite kernel input coordinate");
}

// Squared distance scaled by the length-scales.
template <typename A, typename B>
double scaled_sq_dist(const KernelSpec& spec, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp) {
  const auto& ls = spec.length_scales();
  if (spec.family() == KernelFamily::SquaredExpIso) return (x - xp).squaredNorm() / (ls[0] * ls[0]);
  return ((x - xp).array() / ls.array()).square().sum();
}

// Correlation as a function of the scaled squared distance.
inline double correlation(const KernelSpec& spec, double r2) {
  if (spec.family() != KernelFamily::Matern) return std::exp(-0.5 * r2);
  const double r = std::sqrt(r2);
  switch (spec.nu()) {
    case MaternNu::Half: return std::exp(-r);
    case MaternNu::ThreeHalves: {
      const double s = std::sqrt(3.0) * r;
      return (1.0 + s) * std::exp(-s);
    }
    case MaternNu::FiveHalves: {
      const double s = std::sqrt(5.0) * r;
      return (1.0 + s + s * s / 3.0) * std::exp(-s);
    }
  }
  return 0.0;
}

template <typename A, typename B>
double kernel_value(const KernelSpec& spec, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& xp) {
  return spec.signal_variance() * correlation(spec, scaled_sq_dist(spec, x, xp));
}

// -(1/r) d(correlation)/dr, the factor that multiplies each length-scale's
// scaled squared component in the log-length-scale derivative.
inline double radial_factor(const KernelSpec& spec, double r2) {
  if (spec.family() != KernelFamily::Matern) return std::exp(-0.5 * r2);
  const double r = std::sqrt(r2);
  switch (spec.nu()) {
    case MaternNu::Half: return r > 0.0 ? std::exp(-r) / r : 0.0;
    case MaternNu::ThreeHalves: return 3.0 * std::exp(-std::sqrt(3.0) * r);
    case MaternNu::FiveHalves: {
      const double s = std::sqrt(5.0) * r;
      return (5.0 / 3.0) * (1.0 + s) * std::exp(-s);
    }
  }
  return 0.0;
}

}  // namespace detail

/// Covariance between two points. Throws InvalidArgument on dimension
/// mismatch or non-finite coordinates.
inline double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& xp) {
  detail::check_point_pair(spec, x, xp);
  return detail::kernel_value(spec, x, xp);
}

/// Gram matrix over the rows of X, plus jitter on the diagonal. Each unordered
/// pair is evaluated once, so the result is exactly symmetric.
inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                   double jitter = 0.0) {
  if (X.rows() == 0) throw InvalidArgument("gram_matrix needs at least one point");
  if (!(jitter >= 0.0)) throw InvalidArgument("jitter must be non-negative");
  detail::check_points(spec, X);
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = spec.signal_variance() + jitter;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = detail::kernel_value(spec, X.row(i).transpose(), X.row(j).transpose());
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

// Cross-covariance between rows of A (m) and rows of B (n): an m x n matrix.
inline Eigen::MatrixXd cross_covariance(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& A,
                                        const Eigen::Ref<const Eigen::MatrixXd>& B) {
  if (A.cols() != B.cols()) throw InvalidArgument("cross_covariance inputs have different dimensions");
  detail::check_points(spec, A);
  detail::check_points(spec, B);
  Eigen::MatrixXd out(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      out(i, j) = detail::kernel_value(spec, A.row(i).transpose(), B.row(j).transpose());
  return out;
}

/// Gradient of eval_kernel with respect to the log-hyperparameters, in the
/// layout documented on KernelSpec.
inline Eigen::VectorXd kernel_grad_hyper(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                                         const Eigen::Ref<const Eigen::VectorXd>& xp) {
  detail::check_point_pair(spec, x, xp);
  const double r2 = detail::scaled_sq_dist(spec, x, xp);
  const double sf2 = spec.signal_variance();
  const auto& ls = spec.length_scales();

  Eigen::VectorXd grad(spec.num_hypers());
  grad[0] = sf2 * detail::correlation(spec, r2);
  const double radial = sf2 * detail::radial_factor(spec, r2);
  if (spec.family() == KernelFamily::SquaredExpIso) {
    grad[1] = radial * r2;
  } else {
    for (Eigen::Index j = 0; j < ls.size(); ++j) {
      const double c = (x[j] - xp[j]) / ls[j];
      grad[1 + j] = radial * c * c;
    }
  }
  return grad;
}

// Per-hyperparameter derivative matrices dK/dlog(theta_p) over the rows of X.
inline std::vector<Eigen::MatrixXd> gram_grad_hyper(const KernelSpec& spec,
                                                    const Eigen::Ref<const Eigen::MatrixXd>& X) {
  detail::check_points(spec, X);
  const Eigen::Index n = X.rows();
  const Eigen::Index p = spec.num_hypers();
  const auto& ls = spec.length_scales();
  std::vector<Eigen::MatrixXd> dK(static_cast<std::size_t>(p), Eigen::MatrixXd::Zero(n, n));
  for (Eigen::Index j = 0; j < n; ++j) {
    dK[0](j, j) = spec.signal_variance();
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double r2 = detail::scaled_sq_dist(spec, X.row(i).transpose(), X.row(j).transpose());
      const double k = spec.signal_variance() * detail::correlation(spec, r2);
      dK[0](i, j) = dK[0](j, i) = k;
      const double radial = spec.signal_variance() * detail::radial_factor(spec, r2);
      if (spec.family() == KernelFamily::SquaredExpIso) {
        dK[1](i, j) = dK[1](j, i) = radial * r2;
      } else {
        for (Eigen::Index q = 0; q < ls.size(); ++q) {
          const double c = (X(i, q) - X(j, q)) / ls[q];
          const auto idx = static_cast<std::size_t>(1 + q);
          dK[idx](i, j) = dK[idx](j, i) = radial * c * c;
        }
      }
    }
  }
  return dK;
}

}  // namespace gpopt
