#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gpopt/error.hpp"
#include "gpopt/kernels.hpp"
#include "gpopt/linalg.hpp"

namespace gpopt {

enum class Direction { Minimize, Maximize };

/// The accumulated design: n points (rows of X) and their observed values.
/// Points live in the objective's native units.
class ObservationSet {
 public:
  explicit ObservationSet(Eigen::Index dimension, Direction direction = Direction::Minimize)
      : X_(0, dimension), y_(0), direction_(direction) {
    if (dimension < 1) throw InvalidArgument("observation dimension must be positive");
  }

  ObservationSet(Eigen::MatrixXd X, Eigen::VectorXd y, Direction direction = Direction::Minimize)
      : X_(std::move(X)), y_(std::move(y)), direction_(direction) {
    if (X_.cols() < 1) throw InvalidArgument("observation dimension must be positive");
    if (X_.rows() != y_.size()) throw InvalidArgument("observation point and value counts differ");
    if (!X_.allFinite() || !y_.allFinite()) throw InvalidArgument("observations must be finite");
  }

  const Eigen::MatrixXd& X() const noexcept { return X_; }
  const Eigen::VectorXd& y() const noexcept { return y_; }
  Direction direction() const noexcept { return direction_; }
  Eigen::Index size() const noexcept { return y_.size(); }
  Eigen::Index dimension() const noexcept { return X_.cols(); }
  bool empty() const noexcept { return y_.size() == 0; }

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Direction direction_;
};

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // latent f unless noise was requested
  std::optional<Eigen::MatrixXd> covariance;
};

struct PredictOptions {
  bool include_noise = false;
  bool full_covariance = false;
};

/// A fitted, immutable posterior. Safe to share between threads.
class GpPosterior {
 public:
  const KernelSpec& kernel() const noexcept { return kernel_; }
  double noise_variance() const noexcept { return noise_variance_; }
  double prior_mean() const noexcept { return prior_mean_; }
  double jitter() const noexcept { return jitter_; }
  const Eigen::MatrixXd& train_X() const noexcept { return train_X_; }
  const Eigen::VectorXd& train_y() const noexcept { return train_y_; }
  // Lower-triangular L with L L^T = K + (noise + jitter) I.
  const Eigen::MatrixXd& factor() const noexcept { return factor_; }
  const Eigen::VectorXd& alpha() const noexcept { return alpha_; }

 private:
  friend GpPosterior fit_posterior(const ObservationSet&, const KernelSpec&, double, std::optional<double>);

  GpPosterior(KernelSpec kernel) : kernel_(std::move(kernel)) {}

  KernelSpec kernel_;
  double noise_variance_ = 0.0;
  double prior_mean_ = 0.0;
  double jitter_ = 0.0;
  Eigen::MatrixXd train_X_;
  Eigen::VectorXd train_y_;
  Eigen::MatrixXd factor_;
  Eigen::VectorXd alpha_;
};

namespace detail {

inline double mean_of(const Eigen::VectorXd& y) { return y.size() ? y.mean() : 0.0; }

inline void check_fit_inputs(const ObservationSet& obs, const KernelSpec& kernel, double noise_variance) {
  if (obs.empty()) throw InvalidArgument("cannot fit a GP to an empty observation set");
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
    throw InvalidArgument("noise variance must be non-negative and finite");
  if (!kernel.accepts_dimension(obs.dimension()))
    throw InvalidArgument("kernel does not match observation dimension");
}

}  // namespace detail

/// Exact GP posterior given observations, kernel and Gaussian observation
/// noise. The constant prior mean defaults to the mean of y.
inline GpPosterior fit_posterior(const ObservationSet& obs, const KernelSpec& kernel, double noise_variance,
                                 std::optional<double> prior_mean = std::nullopt) {
  detail::check_fit_inputs(obs, kernel, noise_variance);
  GpPosterior post(kernel);
  post.noise_variance_ = noise_variance;
  post.prior_mean_ = prior_mean.value_or(detail::mean_of(obs.y()));
  post.train_X_ = obs.X();
  post.train_y_ = obs.y();

  Eigen::MatrixXd K = gram_matrix(kernel, obs.X(), noise_variance);
  auto chol = cholesky_with_jitter(K, kernel.signal_variance());
  post.jitter_ = chol.jitter;
  post.factor_ = std::move(chol.lower);

  const Eigen::VectorXd centered = obs.y().array() - post.prior_mean_;
  post.alpha_ = cholesky_solve(post.factor_, centered);
  return post;
}

/// Posterior mean and variance at the rows of Xs.
inline Prediction predict(const GpPosterior& post, const Eigen::Ref<const Eigen::MatrixXd>& Xs,
                          PredictOptions options = {}) {
  if (Xs.rows() == 0) throw InvalidArgument("predict needs at least one test point");
  if (Xs.cols() != post.train_X().cols()) throw InvalidArgument("test point dimension mismatch");

  const Eigen::MatrixXd Ks = cross_covariance(post.kernel(), Xs, post.train_X());  // m x n
  Prediction out;
  out.mean = (Ks * post.alpha()).array() + post.prior_mean();

  // V = L^{-1} Ks^T, so Ks (K + s I)^{-1} Ks^T = V^T V.
  const Eigen::MatrixXd V = post.factor().triangularView<Eigen::Lower>().solve(Ks.transpose());
  const double noise = options.include_noise ? post.noise_variance() : 0.0;
  const double sf2 = post.kernel().signal_variance();
  out.variance = (sf2 - V.colwise().squaredNorm().array()).max(0.0) + noise;

  if (options.full_covariance) {
    Eigen::MatrixXd cov = gram_matrix(post.kernel(), Xs) - V.transpose() * V;
    cov = 0.5 * (cov + cov.transpose()).eval();
    cov.diagonal() = out.variance;
    out.covariance = std::move(cov);
  }
  return out;
}

struct LmlResult {
  double value = 0.0;
  // Layout: the kernel's log-hyperparameters, then log noise variance when
  // the noise gradient was requested.
  std::optional<Eigen::VectorXd> gradient;
};

struct LmlOptions {
  bool gradient = false;
  bool noise_gradient = false;
  std::optional<double> prior_mean;
};

/// log N(y | mean, K + noise I), evaluated through the jittered Cholesky
/// factor, optionally with its gradient in log-hyperparameter space.
inline LmlResult log_marginal_likelihood(const ObservationSet& obs, const KernelSpec& kernel, double noise_variance,
                                         LmlOptions options = {}) {
  detail::check_fit_inputs(obs, kernel, noise_variance);
  const Eigen::Index n = obs.size();
  const double mean = options.prior_mean.value_or(detail::mean_of(obs.y()));

  Eigen::MatrixXd K = gram_matrix(kernel, obs.X(), noise_variance);
  const auto chol = cholesky_with_jitter(K, kernel.signal_variance());
  const Eigen::VectorXd r = obs.y().array() - mean;
  const Eigen::VectorXd alpha = cholesky_solve(chol.lower, r);

  LmlResult out;
  out.value = -0.5 * r.dot(alpha) - chol.lower.diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(out.value)) throw NumericalError("log marginal likelihood is not finite", 0.0);

  if (options.gradient) {
    // d LML / d theta = 0.5 tr((alpha alpha^T - K^{-1}) dK/dtheta)
    const Eigen::MatrixXd Kinv = cholesky_solve(chol.lower, Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;
    const auto dK = gram_grad_hyper(kernel, obs.X());
    const Eigen::Index p = kernel.num_hypers();
    Eigen::VectorXd g(p + (options.noise_gradient ? 1 : 0));
    for (Eigen::Index i = 0; i < p; ++i) g[i] = 0.5 * W.cwiseProduct(dK[static_cast<std::size_t>(i)]).sum();
    if (options.noise_gradient) g[p] = 0.5 * noise_variance * W.trace();
    out.gradient = std::move(g);
  }
  return out;
}

/// Closed interval in log space.
struct LogInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Box constraints for hyperparameter fitting, all in log space. One
/// length-scale interval for the isotropic family, one per dimension
/// otherwise. Without a noise interval the noise stays at fixed_noise_variance.
struct HyperBounds {
  LogInterval log_signal_variance;
  std::vector<LogInterval> log_length_scales;
  std::optional<LogInterval> log_noise_variance;
  double fixed_noise_variance = 0.0;
};

struct HyperFitOptions {
  int n_restarts = 8;
  int max_iters = 200;
  double gradient_tolerance = 1e-6;
  MaternNu nu = MaternNu::FiveHalves;
  std::optional<double> prior_mean;
  // Extra starting point tried before the random restarts (e.g. the previous
  // fit in a sequential loop). Full parameter vector, noise last if fitted.
  std::optional<Eigen::VectorXd> warm_start;
};

struct HyperFit {
  KernelSpec kernel;
  double noise_variance = 0.0;
  double log_marginal_likelihood = 0.0;
  // Projected gradient at the returned point; zero components where a bound
  // is active and the gradient pushes outward.
  Eigen::VectorXd projected_gradient;
  // LML at each start point that could be evaluated.
  std::vector<double> start_values;
};

namespace detail {

struct HyperProblem {
  const ObservationSet& obs;
  KernelFamily family;
  MaternNu nu;
  const HyperBounds& bounds;
  std::optional<double> prior_mean;

  Eigen::Index num_kernel_params() const { return 1 + static_cast<Eigen::Index>(bounds.log_length_scales.size()); }
  bool fit_noise() const { return bounds.log_noise_variance.has_value(); }
  Eigen::Index num_params() const { return num_kernel_params() + (fit_noise() ? 1 : 0); }

  LogInterval interval(Eigen::Index i) const {
    if (i == 0) return bounds.log_signal_variance;
    if (i < num_kernel_params()) return bounds.log_length_scales[static_cast<std::size_t>(i - 1)];
    return *bounds.log_noise_variance;
  }

  Eigen::VectorXd clamp(Eigen::VectorXd theta) const {
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const auto iv = interval(i);
      theta[i] = std::clamp(theta[i], iv.lo, iv.hi);
    }
    return theta;
  }

  std::pair<KernelSpec, double> unpack(const Eigen::VectorXd& theta) const {
    KernelSpec k = KernelSpec::from_log_hypers(family, nu, theta.head(num_kernel_params()));
    const double noise = fit_noise() ? std::exp(theta[num_kernel_params()]) : bounds.fixed_noise_variance;
    return {std::move(k), noise};
  }

  // Value and gradient, or nullopt if the factorization fails.
  std::optional<std::pair<double, Eigen::VectorXd>> evaluate(const Eigen::VectorXd& theta) const {
    try {
      auto [kernel, noise] = unpack(theta);
      auto res = log_marginal_likelihood(obs, kernel, noise, {true, fit_noise(), prior_mean});
      if (!res.gradient->allFinite()) return std::nullopt;
      return std::make_pair(res.value, std::move(*res.gradient));
    } catch (const NumericalError&) {
      return std::nullopt;
    }
  }

  Eigen::VectorXd project_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd g) const {
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const auto iv = interval(i);
      const double tol = 1e-10 * std::max(1.0, iv.hi - iv.lo);
      if ((theta[i] <= iv.lo + tol && g[i] < 0.0) || (theta[i] >= iv.hi - tol && g[i] > 0.0)) g[i] = 0.0;
    }
    return g;
  }
};

struct AscentResult {
  Eigen::VectorXd theta;
  double value;
  Eigen::VectorXd projected_gradient;
};

// Projected quasi-Newton ascent: BFGS on the variables not held at a bound,
// Armijo backtracking along the projected path. The curvature estimate is
// reset whenever the set of free variables changes.
inline std::optional<AscentResult> projected_bfgs_ascent(const HyperProblem& problem, Eigen::VectorXd theta,
                                                         int max_iters, double tolerance) {
  theta = problem.clamp(std::move(theta));
  auto current = problem.evaluate(theta);
  if (!current) return std::nullopt;
  double value = current->first;
  Eigen::VectorXd grad = std::move(current->second);
  const Eigen::Index p = theta.size();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd H = I;
  bool fresh = true;
  std::vector<bool> free_prev;

  for (int iter = 0; iter < max_iters; ++iter) {
    const Eigen::VectorXd pg = problem.project_gradient(theta, grad);
    if (pg.norm() < tolerance) break;

    std::vector<bool> free(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) free[static_cast<std::size_t>(i)] = pg[i] != 0.0;
    if (free != free_prev) {
      H = I;
      fresh = true;
      free_prev = free;
    }
    Eigen::VectorXd dir = H * pg;
    for (Eigen::Index i = 0; i < p; ++i)
      if (!free[static_cast<std::size_t>(i)]) dir[i] = 0.0;
    if (dir.dot(pg) <= 0.0) {
      H = I;
      fresh = true;
      dir = pg;
    }
    // Cap the step so one iteration moves at most a few e-folds.
    const double max_norm = 3.0;
    if (dir.norm() > max_norm) dir *= max_norm / dir.norm();

    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd next_theta;
    std::pair<double, Eigen::VectorXd> next;
    for (int ls = 0; ls < 30; ++ls) {
      next_theta = problem.clamp(theta + step * dir);
      if (auto trial = problem.evaluate(next_theta)) {
        if (trial->first >= value + 1e-4 * grad.dot(next_theta - theta)) {
          next = std::move(*trial);
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Eigen::VectorXd s = next_theta - theta;
    // BFGS on the negated objective, restricted to the free variables.
    Eigen::VectorXd yv = grad - next.second;
    for (Eigen::Index i = 0; i < p; ++i) {
      if (!free[static_cast<std::size_t>(i)]) {
        s[i] = 0.0;
        yv[i] = 0.0;
      }
    }
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (fresh) {
        H = (sy / yv.squaredNorm()) * I;
        fresh = false;
      }
      const double rho = 1.0 / sy;
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    const double gain = next.first - value;
    const bool stalled = (next_theta - theta).norm() < 1e-12 || gain <= 1e-10 * std::max(1.0, std::abs(value));
    theta = std::move(next_theta);
    value = next.first;
    grad = std::move(next.second);
    if (stalled) break;
  }
  return AscentResult{theta, value, problem.project_gradient(theta, grad)};
}

}  // namespace detail

/// Maximizes the log marginal likelihood over a box in log-hyperparameter
/// space with multi-start projected quasi-Newton ascent. Start points are
/// log-uniform over the bounds (plus the optional warm start). Deterministic
/// for a fixed seed. Throws NumericalError if no start can be factorized.
inline HyperFit optimize_hypers(const ObservationSet& obs, KernelFamily family, const HyperBounds& bounds,
                                std::uint64_t seed, HyperFitOptions options = {}) {
  if (obs.size() < 2) throw InvalidArgument("hyperparameter fitting needs at least two observations");
  const auto expected_ls = family == KernelFamily::SquaredExpIso ? 1 : static_cast<std::size_t>(obs.dimension());
  if (bounds.log_length_scales.size() != expected_ls)
    throw InvalidArgument("length-scale bounds do not match kernel family and dimension");
  if (!(bounds.fixed_noise_variance >= 0.0)) throw InvalidArgument("fixed noise variance must be non-negative");
  if (options.n_restarts < 0 || options.max_iters < 0) throw InvalidArgument("restart and iteration counts must be non-negative");

  detail::HyperProblem problem{obs, family, options.nu, bounds, options.prior_mean};
  const Eigen::Index p = problem.num_params();
  for (Eigen::Index i = 0; i < p; ++i) {
    const auto iv = problem.interval(i);
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi)
      throw InvalidArgument("hyperparameter bounds must be finite with lo <= hi");
  }

  std::vector<Eigen::VectorXd> starts;
  if (options.warm_start) {
    if (options.warm_start->size() != p) throw InvalidArgument("warm start has the wrong number of parameters");
    starts.push_back(*options.warm_start);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int r = 0; r < options.n_restarts; ++r) {
    Eigen::VectorXd theta(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto iv = problem.interval(i);
      theta[i] = iv.lo + unit(rng) * (iv.hi - iv.lo);
    }
    starts.push_back(std::move(theta));
  }
  if (starts.empty()) throw InvalidArgument("hyperparameter fitting needs at least one start point");

  std::optional<detail::AscentResult> best;
  std::vector<double> start_values;
  for (const auto& start : starts) {
    if (auto v = problem.evaluate(problem.clamp(start))) start_values.push_back(v->first);
    auto res = detail::projected_bfgs_ascent(problem, start, options.max_iters, options.gradient_tolerance);
    if (res && (!best || res->value > best->value)) best = std::move(res);
  }
  if (!best) throw NumericalError("hyperparameter fitting: no start point could be factorized", 0.0);

  auto [kernel, noise] = problem.unpack(best->theta);
  return HyperFit{std::move(kernel), noise, best->value, std::move(best->projected_gradient),
                  std::move(start_values)};
}

/// A GP prior with constant mean, for drawing functions before any data.
struct GpPrior {
  KernelSpec kernel;
  double mean = 0.0;
};

namespace detail {

inline Eigen::MatrixXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, double scale,
                                int n_draws, std::uint64_t seed) {
  if (n_draws < 0) throw InvalidArgument("number of draws must be non-negative");
  const Eigen::MatrixXd S = psd_sqrt_factor(cov, scale);
  const Eigen::Index m = mean.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd draws(n_draws, m);
  Eigen::VectorXd z(m);
  for (int k = 0; k < n_draws; ++k) {
    for (Eigen::Index i = 0; i < m; ++i) z[i] = normal(rng);
    draws.row(k) = (mean + S * z).transpose();
  }
  return draws;
}

}  // namespace detail

/// Joint draws of f at the rows of X from the prior: n_draws x m.
inline Eigen::MatrixXd sample_function(const GpPrior& prior, const Eigen::Ref<const Eigen::MatrixXd>& X, int n_draws,
                                       std::uint64_t seed) {
  if (X.rows() == 0) throw InvalidArgument("sample_function needs at least one point");
  const Eigen::VectorXd mean = Eigen::VectorXd::Constant(X.rows(), prior.mean);
  return detail::draw_mvn(mean, gram_matrix(prior.kernel, X), prior.kernel.signal_variance(), n_draws, seed);
}

/// Joint draws of the latent f at the rows of X from a fitted posterior.
inline Eigen::MatrixXd sample_function(const GpPosterior& post, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                       int n_draws, std::uint64_t seed) {
  if (X.rows() == 0) throw InvalidArgument("sample_function needs at least one point");
  auto pred = predict(post, X, {false, true});
  return detail::draw_mvn(pred.mean, *pred.covariance, post.kernel().signal_variance(), n_draws, seed);
}

}  // namespace gpopt
