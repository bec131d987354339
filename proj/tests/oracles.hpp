#pragma once

// Independent reference computations for the test suites. Nothing here calls
// into the factorized code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>

#include <Eigen/Core>
#include <Eigen/LU>

#include "gpopt/kernels.hpp"

namespace gpopt::oracle {

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// General Matérn correlation through the modified Bessel function of the
// second kind: 2^(1-nu)/Gamma(nu) * (sqrt(2 nu) r)^nu * K_nu(sqrt(2 nu) r),
// with r already divided by the length-scale.
inline double matern_bessel(double nu, double signal_variance, double r) {
  if (r == 0.0) return signal_variance;
  const double s = std::sqrt(2.0 * nu) * r;
  return signal_variance * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(s, nu) * std::cyl_bessel_k(nu, s);
}

// Plain double-loop kernel matrix through the public pointwise evaluator.
inline Eigen::MatrixXd pairwise(const KernelSpec& k, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd out(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.rows(); ++j) out(i, j) = eval_kernel(k, A.row(i).transpose(), B.row(j).transpose());
  return out;
}

struct DensePosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::MatrixXd covariance;
};

// Conditions the joint Gaussian of [f(X*), y] by explicit inversion of the
// training block, in extended precision. `diag` is added to the training
// block's diagonal (noise plus any jitter).
inline DensePosterior joint_conditioning(const KernelSpec& k, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         const Eigen::MatrixXd& Xs, double diag, double prior_mean) {
  const Eigen::Index n = X.rows();
  const Eigen::Index m = Xs.rows();
  Eigen::MatrixXd all(n + m, X.cols());
  all << Xs, X;
  LMatrix joint = pairwise(k, all, all).cast<long double>();
  const LMatrix Kss = joint.topLeftCorner(m, m);
  const LMatrix Ksx = joint.topRightCorner(m, n);
  LMatrix Kxx = joint.bottomRightCorner(n, n);
  Kxx.diagonal().array() += static_cast<long double>(diag);
  const LMatrix inv = Kxx.fullPivLu().inverse();
  const LVector r = (y.array() - prior_mean).matrix().cast<long double>();
  const LVector mean = (Ksx * (inv * r)).array() + static_cast<long double>(prior_mean);
  const LMatrix cov = Kss - Ksx * inv * Ksx.transpose();
  return {mean.cast<double>(), cov.diagonal().cast<double>(), cov.cast<double>()};
}

// Dense-inverse solve of (K + diag I) a = y - mean.
inline Eigen::VectorXd dense_alpha(const KernelSpec& k, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double diag,
                                   double prior_mean) {
  LMatrix K = pairwise(k, X, X).cast<long double>();
  K.diagonal().array() += static_cast<long double>(diag);
  const LVector r = (y.array() - prior_mean).matrix().cast<long double>();
  return (K.fullPivLu().inverse() * r).cast<double>();
}

// Multivariate normal log density via explicit determinant and inverse.
inline double mvn_log_density(const Eigen::VectorXd& y, double mean, const Eigen::MatrixXd& cov) {
  const LMatrix C = cov.cast<long double>();
  const auto lu = C.fullPivLu();
  const LVector r = (y.array() - mean).matrix().cast<long double>();
  const long double quad = r.dot(lu.inverse() * r);
  const long double logdet = std::log(lu.determinant());
  const long double n = static_cast<long double>(y.size());
  return static_cast<double>(-0.5L * quad - 0.5L * logdet - 0.5L * n * std::log(2.0L * std::numbers::pi_v<long double>));
}

// Central finite-difference gradient of f at x.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

// Standard normal CDF by composite Simpson integration of the density.
inline double normal_cdf_by_quadrature(double z, int intervals = 200000) {
  const double lo = -12.0;
  const double h = (z - lo) / intervals;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
  double sum = pdf(lo) + pdf(z);
  for (int i = 1; i < intervals; ++i) sum += (i % 2 ? 4.0 : 2.0) * pdf(lo + i * h);
  return sum * h / 3.0;
}

inline Eigen::MatrixXd uniform_points(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = u(rng);
  return X;
}

// A random kernel of a random family for d-dimensional inputs.
inline KernelSpec random_kernel(std::mt19937_64& rng, Eigen::Index d, double ls_lo = 0.3, double ls_hi = 2.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> fam(0, 4);
  const double sf2 = 0.2 + 2.0 * u(rng);
  Eigen::VectorXd ls(d);
  for (Eigen::Index j = 0; j < d; ++j) ls[j] = ls_lo + (ls_hi - ls_lo) * u(rng);
  switch (fam(rng)) {
    case 0: return KernelSpec::squared_exp_iso(sf2, ls[0]);
    case 1: return KernelSpec::squared_exp_ard(sf2, ls);
    case 2: return KernelSpec::matern(MaternNu::Half, sf2, ls);
    case 3: return KernelSpec::matern(MaternNu::ThreeHalves, sf2, ls);
    default: return KernelSpec::matern(MaternNu::FiveHalves, sf2, ls);
  }
}

// A random regression problem: n <= 20 points in d <= 5 dimensions, spread
// so that points are typically a length-scale or more apart, with noise on
// half of the instances.
struct RegressionInstance {
  KernelSpec kernel;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::MatrixXd Xs;
  double noise = 0.0;
};

inline RegressionInstance random_instance(std::mt19937_64& rng, int max_n = 20, int max_d = 5, int n_test = 4) {
  std::uniform_int_distribution<int> size(1, max_n), dim(1, max_d);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Index n = size(rng);
  const Eigen::Index d = dim(rng);
  const auto kernel = random_kernel(rng, d, 0.3, 1.0);
  const double side = 2.0 * std::max(1.0, std::pow(static_cast<double>(n), 1.0 / static_cast<double>(d)));
  Eigen::MatrixXd X = uniform_points(rng, n, d, 0.0, side);
  Eigen::MatrixXd Xs = uniform_points(rng, n_test, d, 0.0, side);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = std::sin(X.row(i).sum()) + 0.5 * u(rng);
  const double noise = u(rng) < 0.5 ? 0.0 : kernel.signal_variance() * std::pow(10.0, -6.0 + 4.0 * u(rng));
  return {kernel, std::move(X), std::move(y), std::move(Xs), noise};
}

// max |a - b| / max(max |b|, scale)
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double scale) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), scale);
}

}  // namespace gpopt::oracle
