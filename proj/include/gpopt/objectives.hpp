#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "gpopt/error.hpp"
#include "gpopt/loop.hpp"

namespace gpopt {

// Synthetic test functions, all to be minimized.

inline double sphere(const Eigen::Ref<const Eigen::VectorXd>& x) { return x.squaredNorm(); }

inline double rosenbrock(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() < 2) throw InvalidArgument("rosenbrock needs at least two dimensions");
  double sum = 0.0;
  for (Eigen::Index j = 0; j + 1 < x.size(); ++j) {
    const double a = x[j + 1] - x[j] * x[j];
    const double b = 1.0 - x[j];
    sum += 100.0 * a * a + b * b;
  }
  return sum;
}

// Global minimum 0.397887 at (-pi, 12.275), (pi, 2.275) and (9.42478, 2.475).
inline double branin(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != 2) throw InvalidArgument("branin is two-dimensional");
  constexpr double pi = std::numbers::pi;
  constexpr double a = 1.0;
  constexpr double b = 5.1 / (4.0 * pi * pi);
  constexpr double c = 5.0 / pi;
  constexpr double r = 6.0;
  constexpr double s = 10.0;
  constexpr double t = 1.0 / (8.0 * pi);
  const double inner = x[1] - b * x[0] * x[0] + c * x[0] - r;
  return a * inner * inner + s * (1.0 - t) * std::cos(x[0]) + s;
}

inline bool is_builtin_objective(std::string_view name) {
  return name == "sphere" || name == "rosenbrock" || name == "branin";
}

/// Evaluates a builtin objective by name.
inline double builtin_objective(std::string_view name, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (!x.allFinite()) throw InvalidArgument("objective input must be finite");
  if (name == "sphere") return sphere(x);
  if (name == "rosenbrock") return rosenbrock(x);
  if (name == "branin") return branin(x);
  throw InvalidArgument("unknown builtin objective '" + std::string(name) + "'");
}

/// Conventional search box for a builtin: sphere [-5.12, 5.12]^d, rosenbrock
/// [-2.048, 2.048]^d, branin [-5, 10] x [0, 15].
inline SearchSpace recommended_space(std::string_view name, Eigen::Index dimension) {
  if (name == "branin") {
    if (dimension != 2) throw InvalidArgument("branin is two-dimensional");
    return SearchSpace(Eigen::Vector2d(-5.0, 0.0), Eigen::Vector2d(10.0, 15.0));
  }
  if (dimension < 1) throw InvalidArgument("objective dimension must be positive");
  if (name == "sphere")
    return SearchSpace(Eigen::VectorXd::Constant(dimension, -5.12), Eigen::VectorXd::Constant(dimension, 5.12));
  if (name == "rosenbrock") {
    if (dimension < 2) throw InvalidArgument("rosenbrock needs at least two dimensions");
    return SearchSpace(Eigen::VectorXd::Constant(dimension, -2.048), Eigen::VectorXd::Constant(dimension, 2.048));
  }
  throw InvalidArgument("unknown builtin objective '" + std::string(name) + "'");
}

inline Objective make_builtin_objective(std::string name) {
  if (!is_builtin_objective(name)) throw InvalidArgument("unknown builtin objective '" + name + "'");
  return [name = std::move(name)](const Eigen::VectorXd& x) { return builtin_objective(name, x); };
}

/// Uniform random search over the box with the same trace format.
inline Trace random_search_baseline(const Objective& objective, const SearchSpace& space, int budget,
                                    std::uint64_t seed, Direction direction = Direction::Minimize,
                                    const TraceObserver& observer = {}) {
  if (budget < 1) throw InvalidArgument("budget must be positive");
  detail::TraceBuilder builder(space.dimension(), direction, observer);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < budget; ++i) {
    const auto start = std::chrono::steady_clock::now();
    Eigen::VectorXd x(space.dimension());
    for (Eigen::Index j = 0; j < x.size(); ++j)
      x[j] = space.lower()[j] + unit(rng) * (space.upper()[j] - space.lower()[j]);
    const double y = detail::evaluate_or_abort(objective, x, builder);
    TraceRecord rec;
    rec.x = std::move(x);
    rec.y = y;
    rec.wall_ms = detail::elapsed_ms(start);
    builder.append(std::move(rec));
  }
  return builder.take();
}

}  // namespace gpopt
