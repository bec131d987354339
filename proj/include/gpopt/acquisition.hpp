#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "gpopt/error.hpp"

namespace gpopt {

// All acquisition functions use the maximization convention: improvement
// means exceeding f_best.

enum class AcquisitionFamily { PI, EI, LCB, UCB };
enum class BoundSide { Lower, Upper };

/// Acquisition family and its knobs. `xi` is the improvement margin shared
/// by PI and EI; when unset the loop uses 0.01 times the fitted signal
/// standard deviation. With `xi_decay` the margin is multiplied by the rate
/// once per iteration.
struct AcquisitionSpec {
  AcquisitionFamily family = AcquisitionFamily::EI;
  std::optional<double> xi;
  double upsilon = 2.0;
  std::optional<double> xi_decay;

  void validate() const {
    if (xi && (!(*xi >= 0.0) || !std::isfinite(*xi))) throw InvalidArgument("xi must be non-negative and finite");
    if (!(upsilon >= 0.0) || !std::isfinite(upsilon)) throw InvalidArgument("upsilon must be non-negative and finite");
    if (xi_decay && !(*xi_decay > 0.0 && *xi_decay <= 1.0)) throw InvalidArgument("xi decay rate must be in (0, 1]");
  }

  friend bool operator==(const AcquisitionSpec&, const AcquisitionSpec&) = default;
};

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * (0.5 * std::numbers::sqrt2)); }

namespace detail {

inline void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string("non-finite acquisition input: ") + name);
}

inline void check_sigma(double sigma) {
  require_finite(sigma, "sigma");
  if (sigma < 0.0) throw InvalidArgument("sigma must be non-negative");
}

}  // namespace detail

/// P(f >= f_best + xi) for f ~ N(mu, sigma^2). At sigma = 0 this is 1 for a
/// strict improvement and 0 otherwise.
inline double probability_of_improvement(double mu, double sigma, double f_best, double xi) {
  detail::require_finite(mu, "mu");
  detail::require_finite(f_best, "f_best");
  detail::require_finite(xi, "xi");
  detail::check_sigma(sigma);
  const double gap = mu - f_best - xi;
  if (sigma == 0.0) return gap > 0.0 ? 1.0 : 0.0;
  return normal_cdf(gap / sigma);
}

/// E[max(0, f - f_best - xi)] for f ~ N(mu, sigma^2):
///   gap * Phi(gap / sigma) + sigma * phi(gap / sigma),  gap = mu - f_best - xi
/// and max(0, gap) at sigma = 0.
inline double expected_improvement(double mu, double sigma, double f_best, double xi) {
  detail::require_finite(mu, "mu");
  detail::require_finite(f_best, "f_best");
  detail::require_finite(xi, "xi");
  detail::check_sigma(sigma);
  const double gap = mu - f_best - xi;
  if (sigma == 0.0) return std::max(0.0, gap);
  const double z = gap / sigma;
  return std::max(0.0, gap * normal_cdf(z) + sigma * normal_pdf(z));
}

inline double confidence_bound(double mu, double sigma, double upsilon, BoundSide side) {
  detail::require_finite(mu, "mu");
  detail::require_finite(upsilon, "upsilon");
  detail::check_sigma(sigma);
  if (upsilon < 0.0) throw InvalidArgument("upsilon must be non-negative");
  return side == BoundSide::Lower ? mu - upsilon * sigma : mu + upsilon * sigma;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Sample-mean estimate of E[max(0, g - f_best - xi)], g ~ N(mu, sigma^2).
/// Used to check the closed form; deterministic for a fixed seed.
inline MonteCarloEstimate ei_monte_carlo_oracle(double mu, double sigma, double f_best, double xi,
                                                std::int64_t n_samples, std::uint64_t seed) {
  detail::require_finite(mu, "mu");
  detail::require_finite(f_best, "f_best");
  detail::require_finite(xi, "xi");
  detail::check_sigma(sigma);
  if (n_samples < 1) throw InvalidArgument("Monte Carlo oracle needs at least one sample");
  if (sigma == 0.0) return {std::max(0.0, mu - f_best - xi), 0.0};

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(mu, sigma);
  // Welford accumulation keeps the variance stable at 1e7 samples.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const double v = std::max(0.0, normal(rng) - f_best - xi);
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double n = static_cast<double>(n_samples);
  const double var = n > 1 ? m2 / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

/// Score to maximize for a candidate whose latent prediction is (mu, sigma)
/// in the maximization convention. Both confidence-bound families score the
/// optimistic bound mu + upsilon*sigma here: LCB on a minimization problem is
/// that same quantity once values are negated.
inline double acquisition_score(const AcquisitionSpec& spec, double mu, double sigma, double f_best, double xi) {
  switch (spec.family) {
    case AcquisitionFamily::PI: return probability_of_improvement(mu, sigma, f_best, xi);
    case AcquisitionFamily::EI: return expected_improvement(mu, sigma, f_best, xi);
    case AcquisitionFamily::UCB: return confidence_bound(mu, sigma, spec.upsilon, BoundSide::Upper);
    case AcquisitionFamily::LCB: return -confidence_bound(-mu, sigma, spec.upsilon, BoundSide::Lower);
  }
  return 0.0;
}

/// Margin in effect at a given optimization iteration (0 = first model-based
/// proposal).
inline double effective_xi(const AcquisitionSpec& spec, int iteration, double signal_variance) {
  const double base = spec.xi.value_or(0.01 * std::sqrt(signal_variance));
  if (!spec.xi_decay) return base;
  return base * std::pow(*spec.xi_decay, iteration);
}

}  // namespace gpopt
