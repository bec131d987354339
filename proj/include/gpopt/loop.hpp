#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gpopt/acquisition.hpp"
#include "gpopt/error.hpp"
#include "gpopt/gp.hpp"
#include "gpopt/kernels.hpp"
#include "gpopt/sequence.hpp"

namespace gpopt {

/// Axis-aligned box in the objective's native units.
class SearchSpace {
 public:
  SearchSpace(Eigen::VectorXd lower, Eigen::VectorXd upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() < 1) throw InvalidArgument("search space needs at least one dimension");
    if (lower_.size() != upper_.size()) throw InvalidArgument("search space bounds have different dimensions");
    if (!lower_.allFinite() || !upper_.allFinite()) throw InvalidArgument("search space bounds must be finite");
    for (Eigen::Index j = 0; j < lower_.size(); ++j)
      if (!(lower_[j] < upper_[j])) throw InvalidArgument("search space needs lower < upper in every dimension");
  }

  Eigen::Index dimension() const noexcept { return lower_.size(); }
  const Eigen::VectorXd& lower() const noexcept { return lower_; }
  const Eigen::VectorXd& upper() const noexcept { return upper_; }
  Eigen::VectorXd width() const { return upper_ - lower_; }

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return x.size() == dimension() && (x.array() >= lower_.array()).all() && (x.array() <= upper_.array()).all();
  }

  Eigen::VectorXd clamp(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return x.cwiseMax(lower_).cwiseMin(upper_);
  }

  // Maps rows of a [0,1)^d design into the box.
  Eigen::MatrixXd from_unit(const Eigen::Ref<const Eigen::MatrixXd>& U) const {
    Eigen::MatrixXd X = U;
    for (Eigen::Index j = 0; j < dimension(); ++j)
      X.col(j) = (lower_[j] + U.col(j).array() * (upper_[j] - lower_[j])).matrix();
    return X;
  }

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

// Hyperparameter search ranges, relative to the data: signal and noise
// variance as multiples of var(y), length-scales as multiples of the box
// width along each dimension.
struct HyperRanges {
  double signal_variance_lo = 1e-2;
  double signal_variance_hi = 1e2;
  double length_scale_lo = 1e-2;
  double length_scale_hi = 1e1;
  double noise_variance_lo = 1e-10;
  double noise_variance_hi = 1e-1;
};

struct BoConfig {
  int budget = 30;
  std::optional<int> n_init;  // default max(4, 2d)
  KernelFamily kernel_family = KernelFamily::Matern;
  MaternNu nu = MaternNu::FiveHalves;
  HyperRanges hyper_ranges;
  bool refit_hypers = true;
  // Used as-is when refit_hypers is false. With refit_hypers false and no
  // fixed kernel, hyperparameters are fit once on the initial design and kept.
  std::optional<KernelSpec> fixed_kernel;
  int hyper_restarts = 8;
  int hyper_max_iters = 200;
  std::optional<double> noise_variance = 0.0;  // nullopt: fit it
  AcquisitionSpec acquisition;
  std::optional<int> candidate_count;  // default 1024 d
  int refine_iters = 32;
  std::uint64_t seed = 0;
  Direction direction = Direction::Minimize;

  int resolved_n_init(Eigen::Index d) const { return n_init.value_or(std::max(4, 2 * static_cast<int>(d))); }
  int resolved_candidate_count(Eigen::Index d) const {
    return candidate_count.value_or(1024 * static_cast<int>(d));
  }

  void validate(Eigen::Index d) const {
    if (budget < 1) throw InvalidArgument("budget must be positive");
    const int init = resolved_n_init(d);
    if (init < 1) throw InvalidArgument("n_init must be positive");
    if (init > budget) throw InvalidArgument("n_init must not exceed the budget");
    if (resolved_candidate_count(d) < 1) throw InvalidArgument("candidate_count must be at least 1");
    if (refine_iters < 0) throw InvalidArgument("refine_iters must be non-negative");
    if (hyper_restarts < 0 || hyper_max_iters < 0) throw InvalidArgument("hyperparameter search settings must be non-negative");
    if (noise_variance && !(*noise_variance >= 0.0 && std::isfinite(*noise_variance)))
      throw InvalidArgument("noise variance must be non-negative and finite");
    const auto& r = hyper_ranges;
    if (!(r.signal_variance_lo > 0 && r.signal_variance_lo <= r.signal_variance_hi && r.length_scale_lo > 0 &&
          r.length_scale_lo <= r.length_scale_hi && r.noise_variance_lo > 0 && r.noise_variance_lo <= r.noise_variance_hi))
      throw InvalidArgument("hyperparameter ranges must be positive with lo <= hi");
    if (fixed_kernel) {
      if (fixed_kernel->family() != kernel_family) throw InvalidArgument("fixed kernel family differs from kernel_family");
      if (!fixed_kernel->accepts_dimension(d)) throw InvalidArgument("fixed kernel does not match the search space");
    }
    acquisition.validate();
  }
};

struct TraceRecord {
  int iteration = 0;
  Eigen::VectorXd x;
  double y = 0.0;
  Eigen::VectorXd incumbent_x;
  double incumbent_f = 0.0;
  std::optional<double> acq_value;  // empty for the initial design
  std::optional<KernelSpec> kernel;
  std::optional<double> noise_variance;
  double wall_ms = 0.0;
};

struct Trace {
  Eigen::Index dimension = 0;
  std::vector<TraceRecord> records;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;
using TraceObserver = std::function<void(const TraceRecord&)>;

/// A run stopped early. Carries the records completed before the failure.
class RunAborted : public Error {
 public:
  enum class Cause { Objective, Numerical };

  RunAborted(Cause cause, int iteration, std::optional<ObjectiveErrorKind> objective_kind, const std::string& what,
             Trace partial)
      : Error("run aborted at iteration " + std::to_string(iteration) + ": " + what),
        cause_(cause),
        iteration_(iteration),
        objective_kind_(objective_kind),
        partial_(std::move(partial)) {}

  Cause cause() const noexcept { return cause_; }
  int iteration() const noexcept { return iteration_; }
  std::optional<ObjectiveErrorKind> objective_kind() const noexcept { return objective_kind_; }
  const Trace& partial_trace() const noexcept { return partial_; }

 private:
  Cause cause_;
  int iteration_;
  std::optional<ObjectiveErrorKind> objective_kind_;
  Trace partial_;
};

struct Incumbent {
  Eigen::Index index = 0;
  Eigen::VectorXd x;
  double f = 0.0;
};

/// Best observation under the set's direction; ties go to the lowest index.
inline Incumbent incumbent(const ObservationSet& obs) {
  if (obs.empty()) throw InvalidArgument("incumbent of an empty observation set");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < obs.size(); ++i) {
    const bool better = obs.direction() == Direction::Minimize ? obs.y()[i] < obs.y()[best] : obs.y()[i] > obs.y()[best];
    if (better) best = i;
  }
  return {best, obs.X().row(best).transpose(), obs.y()[best]};
}

/// A new set with (x, y) appended; `obs` is left untouched.
inline ObservationSet update(const ObservationSet& obs, const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
  if (x.size() != obs.dimension()) throw InvalidArgument("observation dimension mismatch");
  if (!std::isfinite(y)) throw InvalidArgument("observed value must be finite");
  if (!x.allFinite()) throw InvalidArgument("observed point must be finite");
  const Eigen::Index n = obs.size();
  Eigen::MatrixXd X(n + 1, obs.dimension());
  Eigen::VectorXd Y(n + 1);
  X.topRows(n) = obs.X();
  X.row(n) = x.transpose();
  Y.head(n) = obs.y();
  Y[n] = y;
  return ObservationSet(std::move(X), std::move(Y), obs.direction());
}

struct Proposal {
  Eigen::VectorXd x;
  double acq_value = 0.0;
};

namespace detail {

// Scaled max-norm distance below which a proposal counts as a repeat of a
// training point.
inline constexpr double kDuplicateTolerance = 1e-9;

inline bool is_duplicate(const SearchSpace& space, const Eigen::MatrixXd& train, const Eigen::VectorXd& x) {
  const Eigen::ArrayXd width = space.width().array();
  for (Eigen::Index i = 0; i < train.rows(); ++i) {
    const double dist = ((train.row(i).transpose().array() - x.array()).abs() / width).maxCoeff();
    if (dist < kDuplicateTolerance) return true;
  }
  return false;
}

class AcquisitionScorer {
 public:
  AcquisitionScorer(const GpPosterior& post, const AcquisitionSpec& acq, double f_best, double xi)
      : post_(post), acq_(acq), f_best_(f_best), xi_(xi) {}

  Eigen::VectorXd score(const Eigen::MatrixXd& X) const {
    const auto pred = predict(post_, X);
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out[i] = acquisition_score(acq_, pred.mean[i], std::sqrt(pred.variance[i]), f_best_, xi_);
    return out;
  }

  double score_point(const Eigen::VectorXd& x) const { return score(x.transpose())[0]; }

 private:
  const GpPosterior& post_;
  const AcquisitionSpec& acq_;
  double f_best_;
  double xi_;
};

}  // namespace detail

/// Next point to evaluate: scores `candidate_count` shifted-Halton candidates
/// in the box, then refines the best with a bounded coordinate-wise pattern
/// search for `refine_iters` rounds. Uses the maximization convention for
/// `f_best` and the posterior. With noiseless observations a proposal that
/// repeats a training point is replaced by the best non-repeating candidate.
inline Proposal propose_next(const GpPosterior& post, const AcquisitionSpec& acq, const SearchSpace& space,
                             int candidate_count, int refine_iters, std::uint64_t seed, double f_best) {
  if (post.train_X().cols() != space.dimension()) throw InvalidArgument("posterior and search space dimensions differ");
  if (candidate_count < 1) throw InvalidArgument("candidate_count must be at least 1");
  if (refine_iters < 0) throw InvalidArgument("refine_iters must be non-negative");
  acq.validate();
  const double xi = acq.xi.value_or(0.01 * std::sqrt(post.kernel().signal_variance()));
  const detail::AcquisitionScorer scorer(post, acq, f_best, xi);

  const Eigen::Index d = space.dimension();
  const Eigen::MatrixXd candidates = space.from_unit(halton_points(candidate_count, d, seed));
  const Eigen::VectorXd scores = scorer.score(candidates);

  // Stable descending order so ties resolve to the lowest candidate index.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(candidate_count));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });

  Eigen::VectorXd x = candidates.row(order.front()).transpose();
  double value = scores[order.front()];

  const Eigen::VectorXd width = space.width();
  Eigen::VectorXd step = 0.5 * width * std::pow(static_cast<double>(candidate_count), -1.0 / static_cast<double>(d));
  for (int round = 0; round < refine_iters; ++round) {
    Eigen::VectorXd best_move = x;
    double best_value = value;
    for (Eigen::Index j = 0; j < d; ++j) {
      for (double sign : {-1.0, 1.0}) {
        Eigen::VectorXd trial = x;
        trial[j] = std::clamp(x[j] + sign * step[j], space.lower()[j], space.upper()[j]);
        if (trial[j] == x[j]) continue;
        const double s = scorer.score_point(trial);
        if (s > best_value) {
          best_value = s;
          best_move = std::move(trial);
        }
      }
    }
    if (best_value > value) {
      x = std::move(best_move);
      value = best_value;
    } else {
      step *= 0.5;
    }
  }

  if (post.noise_variance() == 0.0 && detail::is_duplicate(space, post.train_X(), x)) {
    for (Eigen::Index idx : order) {
      Eigen::VectorXd c = candidates.row(idx).transpose();
      if (!detail::is_duplicate(space, post.train_X(), c)) return {std::move(c), scores[idx]};
    }
  }
  return {std::move(x), value};
}

namespace detail {

inline HyperBounds loop_hyper_bounds(const BoConfig& config, const SearchSpace& space, const Eigen::VectorXd& y) {
  const auto& r = config.hyper_ranges;
  double var = y.size() > 1 ? (y.array() - y.mean()).square().mean() : 0.0;
  if (std::isinf(var) || std::isnan(var)) throw NumericalError("observed values overflow their variance", 0.0);
  if (!(var > 0.0)) var = 1.0;
  HyperBounds b;
  b.log_signal_variance = {std::log(r.signal_variance_lo * var), std::log(r.signal_variance_hi * var)};
  const Eigen::VectorXd width = space.width();
  auto ls_interval = [&](double w) { return LogInterval{std::log(r.length_scale_lo * w), std::log(r.length_scale_hi * w)}; };
  if (config.kernel_family == KernelFamily::SquaredExpIso) {
    b.log_length_scales.push_back(ls_interval(width.mean()));
  } else {
    for (Eigen::Index j = 0; j < width.size(); ++j) b.log_length_scales.push_back(ls_interval(width[j]));
  }
  if (config.noise_variance) {
    b.fixed_noise_variance = *config.noise_variance;
  } else {
    b.log_noise_variance = LogInterval{std::log(r.noise_variance_lo * var), std::log(r.noise_variance_hi * var)};
  }
  return b;
}

// Hyperparameters for a design too small to fit: unit signal variance and a
// quarter of the box width.
inline std::pair<KernelSpec, double> default_hypers(const BoConfig& config, const SearchSpace& space) {
  const Eigen::VectorXd ls = 0.25 * space.width();
  const double noise = config.noise_variance.value_or(1e-6);
  switch (config.kernel_family) {
    case KernelFamily::SquaredExpIso: return {KernelSpec::squared_exp_iso(1.0, ls.mean()), noise};
    case KernelFamily::SquaredExpArd: return {KernelSpec::squared_exp_ard(1.0, ls), noise};
    case KernelFamily::Matern: break;
  }
  return {KernelSpec::matern(config.nu, 1.0, ls), noise};
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// Appends evaluations to a trace while tracking the incumbent.
class TraceBuilder {
 public:
  TraceBuilder(Eigen::Index dimension, Direction direction, TraceObserver observer)
      : direction_(direction), observer_(std::move(observer)) {
    trace_.dimension = dimension;
  }

  void append(TraceRecord rec) {
    const bool better = trace_.records.empty() ||
                        (direction_ == Direction::Minimize ? rec.y < best_f_ : rec.y > best_f_);
    if (better) {
      best_f_ = rec.y;
      best_x_ = rec.x;
    }
    rec.iteration = static_cast<int>(trace_.records.size());
    rec.incumbent_x = best_x_;
    rec.incumbent_f = best_f_;
    trace_.records.push_back(std::move(rec));
    if (observer_) observer_(trace_.records.back());
  }

  int next_iteration() const { return static_cast<int>(trace_.records.size()); }
  const Trace& trace() const { return trace_; }
  Trace take() { return std::move(trace_); }

 private:
  Trace trace_;
  Direction direction_;
  TraceObserver observer_;
  double best_f_ = 0.0;
  Eigen::VectorXd best_x_;
};

// Evaluates the objective; failures become RunAborted with the trace so far.
inline double evaluate_or_abort(const Objective& objective, const Eigen::VectorXd& x, TraceBuilder& builder) {
  const int iteration = builder.next_iteration();
  double y = 0.0;
  try {
    y = objective(x);
  } catch (const ObjectiveError& e) {
    throw RunAborted(RunAborted::Cause::Objective, iteration, e.kind(), e.what(), builder.trace());
  }
  if (!std::isfinite(y)) {
    throw RunAborted(RunAborted::Cause::Objective, iteration, ObjectiveErrorKind::NonFinite,
                     "objective returned a non-finite value", builder.trace());
  }
  return y;
}

}  // namespace detail

/// Sequential Bayesian optimization of `objective` over `space`.
///
/// Evaluates a shifted-Halton initial design of n_init points, then for each
/// remaining evaluation refits the GP (hyperparameters by marginal likelihood
/// unless fixed), proposes the acquisition maximizer and evaluates it. Values
/// are negated internally for minimization so the model and acquisition
/// always maximize. `observer` sees every record as soon as it is appended.
/// Objective failures and numerical breakdowns throw RunAborted carrying the
/// partial trace. Deterministic for a fixed seed and deterministic objective.
inline Trace run_bo(const Objective& objective, const SearchSpace& space, const BoConfig& config,
                    const TraceObserver& observer = {}) {
  const Eigen::Index d = space.dimension();
  config.validate(d);
  const int n_init = config.resolved_n_init(d);
  const int candidate_count = config.resolved_candidate_count(d);
  const double sign = config.direction == Direction::Maximize ? 1.0 : -1.0;

  detail::TraceBuilder builder(d, config.direction, observer);
  // Observations in the internal (maximization) convention.
  ObservationSet internal(d, Direction::Maximize);

  const Eigen::MatrixXd design = space.from_unit(halton_points(n_init, d, mix_seed(config.seed, 0)));
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Eigen::VectorXd x = design.row(i).transpose();
    const double y = detail::evaluate_or_abort(objective, x, builder);
    internal = update(internal, x, sign * y);
    TraceRecord rec;
    rec.x = x;
    rec.y = y;
    rec.wall_ms = detail::elapsed_ms(start);
    builder.append(std::move(rec));
  }

  std::optional<KernelSpec> kernel = config.refit_hypers ? std::nullopt : config.fixed_kernel;
  double noise = config.noise_variance.value_or(0.0);
  std::optional<Eigen::VectorXd> warm_start;

  for (int t = 0; builder.next_iteration() < config.budget; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const int iteration = builder.next_iteration();
    const auto numerical_abort = [&](const std::exception& e) {
      return RunAborted(RunAborted::Cause::Numerical, iteration, std::nullopt, e.what(), builder.trace());
    };

    Proposal proposal;
    try {
      if (!kernel || config.refit_hypers) {
        if (internal.size() < 2) {
          std::tie(kernel, noise) = detail::default_hypers(config, space);
        } else {
          const HyperBounds bounds = detail::loop_hyper_bounds(config, space, internal.y());
          HyperFitOptions opts;
          opts.n_restarts = config.hyper_restarts;
          opts.max_iters = config.hyper_max_iters;
          opts.nu = config.nu;
          if (warm_start) opts.warm_start = warm_start;
          const auto fit = optimize_hypers(internal, config.kernel_family, bounds,
                                           mix_seed(config.seed, 2 * static_cast<std::uint64_t>(iteration) + 1), opts);
          kernel = fit.kernel;
          noise = fit.noise_variance;
          Eigen::VectorXd theta(kernel->num_hypers() + (bounds.log_noise_variance ? 1 : 0));
          theta.head(kernel->num_hypers()) = kernel->log_hypers();
          if (bounds.log_noise_variance) theta[kernel->num_hypers()] = std::log(noise);
          warm_start = std::move(theta);
        }
      }
      const GpPosterior post = fit_posterior(internal, *kernel, noise);
      const double f_best = internal.y().maxCoeff();
      AcquisitionSpec acq = config.acquisition;
      acq.xi = effective_xi(config.acquisition, t, kernel->signal_variance());
      proposal = propose_next(post, acq, space, candidate_count, config.refine_iters,
                              mix_seed(config.seed, 2 * static_cast<std::uint64_t>(iteration) + 2), f_best);
    } catch (const NumericalError& e) {
      throw numerical_abort(e);
    }

    const double y = detail::evaluate_or_abort(objective, proposal.x, builder);
    internal = update(internal, proposal.x, sign * y);
    TraceRecord rec;
    rec.x = std::move(proposal.x);
    rec.y = y;
    rec.acq_value = proposal.acq_value;
    rec.kernel = kernel;
    rec.noise_variance = noise;
    rec.wall_ms = detail::elapsed_ms(start);
    builder.append(std::move(rec));
  }
  return builder.take();
}

}  // namespace gpopt
