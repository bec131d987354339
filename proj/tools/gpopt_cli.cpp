// gpopt: command-line driver for Bayesian optimization runs.
//
//   gpopt run      --config cfg.json [overrides]    one BO run
//   gpopt baseline --config cfg.json [overrides]    random search, same trace format
//   gpopt bench    --config cfg.json --seed S       paired BO vs random search over seeds
//   gpopt sample   --config cfg.json --draws K      GP prior/posterior draws as CSV
//
// Exit codes: 0 success, 2 configuration error, 3 objective or protocol
// error, 4 numerical failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "gpopt/gpopt.hpp"

namespace {

using namespace gpopt;
namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kConfigError = 2, kObjectiveError = 3, kNumericalError = 4 };

struct CommonOptions {
  std::string config_path;
  std::optional<std::string> builtin;
  std::optional<int> dimension;
  std::optional<std::uint64_t> seed;
  std::optional<int> budget;
  std::optional<int> n_init;
  std::optional<std::string> acquisition;
  std::optional<double> xi;
  std::optional<double> upsilon;
  std::optional<std::string> trace_path;
  std::optional<std::string> summary_path;
  bool quiet = false;
};

void add_common(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("-c,--config", o.config_path, "JSON configuration file");
  cmd.add_option("--builtin", o.builtin, "use a builtin objective (sphere, rosenbrock, branin) instead of the config's");
  cmd.add_option("--dim", o.dimension, "dimension for --builtin")->check(CLI::PositiveNumber);
  cmd.add_option("--seed", o.seed, "random seed");
  cmd.add_option("--budget", o.budget, "total evaluations")->check(CLI::PositiveNumber);
  cmd.add_option("--n-init", o.n_init, "initial design size")->check(CLI::PositiveNumber);
  cmd.add_option("--acq", o.acquisition, "acquisition family")->check(CLI::IsMember({"pi", "ei", "lcb", "ucb"}));
  cmd.add_option("--xi", o.xi, "PI/EI improvement margin");
  cmd.add_option("--upsilon", o.upsilon, "confidence-bound weight");
  cmd.add_option("--trace", o.trace_path, "trace CSV output path");
  cmd.add_option("--summary", o.summary_path, "summary JSON output path");
  cmd.add_flag("-q,--quiet", o.quiet, "no progress output");
}

RunConfig load_config(const CommonOptions& o) {
  Json doc = o.config_path.empty() ? Json::object() : load_json_file(o.config_path);
  if (!doc.is_object()) throw InvalidArgument("config must be a JSON object");
  if (o.builtin) {
    doc["objective"] = {{"builtin", *o.builtin}, {"dimension", o.dimension.value_or(2)}};
    doc.erase("space");
  } else if (o.dimension) {
    throw InvalidArgument("--dim only applies together with --builtin");
  }
  if (!doc.contains("objective")) throw InvalidArgument("no objective: pass --config or --builtin");

  RunConfig cfg = run_config_from_json(doc);
  auto& bo = cfg.bo;
  if (o.seed) bo.seed = *o.seed;
  if (o.budget) bo.budget = *o.budget;
  if (o.n_init) bo.n_init = *o.n_init;
  if (o.acquisition) bo.acquisition.family = acquisition_family_from_string(*o.acquisition);
  if (o.xi) bo.acquisition.xi = *o.xi;
  if (o.upsilon) bo.acquisition.upsilon = *o.upsilon;
  if (o.trace_path) cfg.output.trace_path = *o.trace_path;
  if (o.summary_path) cfg.output.summary_path = *o.summary_path;
  bo.validate(cfg.space.dimension());
  return cfg;
}

Json config_echo(const RunConfig& cfg) {
  Json objective;
  if (cfg.objective.is_builtin()) {
    objective["builtin"] = std::get<std::string>(cfg.objective.source);
  } else {
    const auto& ext = std::get<ExternalSpec>(cfg.objective.source);
    objective["command"] = ext.command;
    objective["mode"] = ext.mode == WorkerMode::Persistent ? "persistent" : "oneshot";
    objective["timeout_ms"] = ext.timeout.count();
  }
  objective["dimension"] = cfg.objective.dimension;
  return {{"space", space_to_json(cfg.space)}, {"objective", objective}, {"bo", bo_config_to_json(cfg.bo)}};
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

Json summarize(const Trace& trace, double total_ms) {
  Json s;
  s["evaluations"] = trace.records.size();
  s["total_wall_ms"] = total_ms;
  if (!trace.records.empty()) {
    const auto& last = trace.records.back();
    s["best_x"] = std::vector<double>(last.incumbent_x.data(), last.incumbent_x.data() + last.incumbent_x.size());
    s["best_f"] = last.incumbent_f;
  }
  return s;
}

enum class Method { Bo, RandomSearch };

// Runs one optimization, streaming the trace to disk when a path is set.
// Returns the exit code and fills `summary`.
int execute(const RunConfig& cfg, Method method, bool quiet, Json& summary) {
  const auto start = std::chrono::steady_clock::now();
  std::optional<TraceWriter> writer;
  if (!cfg.output.trace_path.empty()) writer.emplace(cfg.output.trace_path, cfg.space.dimension());
  const TraceObserver observer = [&](const TraceRecord& r) {
    if (writer) writer->append(r);
    if (!quiet) {
      std::fprintf(stderr, "[%3d] y = %-14.8g best = %.8g\n", r.iteration, r.y, r.incumbent_f);
    }
  };
  auto elapsed = [&] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count(); };

  const Objective objective = make_objective(cfg.objective);
  int code = kOk;
  try {
    const Trace trace = method == Method::Bo
                            ? run_bo(objective, cfg.space, cfg.bo, observer)
                            : random_search_baseline(objective, cfg.space, cfg.bo.budget, cfg.bo.seed,
                                                     cfg.bo.direction, observer);
    summary = summarize(trace, elapsed());
    summary["status"] = "ok";
  } catch (const RunAborted& e) {
    summary = summarize(e.partial_trace(), elapsed());
    summary["status"] = "aborted";
    summary["error"] = e.what();
    summary["failed_iteration"] = e.iteration();
    if (e.objective_kind()) summary["error_kind"] = to_string(*e.objective_kind());
    code = e.cause() == RunAborted::Cause::Objective ? kObjectiveError : kNumericalError;
    std::cerr << "gpopt: " << e.what() << '\n';
  }
  summary["method"] = method == Method::Bo ? "bo" : "random_search";
  summary["config"] = config_echo(cfg);
  if (!cfg.output.summary_path.empty()) write_json(cfg.output.summary_path, summary);
  return code;
}

int cmd_single(const CommonOptions& o, Method method) {
  const RunConfig cfg = load_config(o);
  Json summary;
  const int code = execute(cfg, method, o.quiet, summary);
  if (summary.contains("best_f")) {
    std::cout << "best_f " << detail::format_real(summary["best_f"].get<double>()) << "\nbest_x";
    for (double v : summary["best_x"]) std::cout << ' ' << detail::format_real(v);
    std::cout << "\nevaluations " << summary["evaluations"].get<std::size_t>() << '\n';
  }
  return code;
}

struct BenchOptions {
  int seeds = 20;
  int jobs = 1;
  std::string out_dir;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_bench(const CommonOptions& o, const BenchOptions& b) {
  if (!o.seed) throw InvalidArgument("bench requires --seed");
  if (b.seeds < 1) throw InvalidArgument("--seeds must be positive");
  const RunConfig base = load_config(o);
  if (!b.out_dir.empty()) fs::create_directories(b.out_dir);

  struct Row {
    std::uint64_t seed = 0;
    Json bo, rs;
    int bo_code = 0, rs_code = 0;
  };
  std::vector<Row> rows(static_cast<std::size_t>(b.seeds));
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;

  // Each worker thread takes whole seeds; every run owns its objective (and
  // therefore its worker process) and its trace files.
  auto work = [&] {
    for (std::size_t i; (i = next++) < rows.size();) {
      try {
        Row& row = rows[i];
        row.seed = *o.seed + i;
        RunConfig cfg = base;
        cfg.bo.seed = row.seed;
        const auto stem = b.out_dir.empty() ? fs::path() : fs::path(b.out_dir) / ("seed_" + std::to_string(row.seed));
        cfg.output.summary_path.clear();
        cfg.output.trace_path = stem.empty() ? "" : stem.string() + "_bo.csv";
        row.bo_code = execute(cfg, Method::Bo, true, row.bo);
        cfg.output.trace_path = stem.empty() ? "" : stem.string() + "_rs.csv";
        row.rs_code = execute(cfg, Method::RandomSearch, true, row.rs);
        if (!o.quiet) {
          std::lock_guard lock(error_mutex);
          std::fprintf(stderr, "seed %llu done\n", static_cast<unsigned long long>(row.seed));
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min(b.jobs, b.seeds));
  std::vector<std::thread> threads;
  for (int t = 1; t < jobs; ++t) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<double> bo_best, rs_best;
  int worst_code = kOk, bo_wins = 0;
  std::printf("%-8s %-22s %-22s %s\n", "seed", "bo_best", "random_best", "winner");
  Json table = Json::array();
  for (const auto& row : rows) {
    worst_code = std::max({worst_code, row.bo_code, row.rs_code});
    const double bo = row.bo.value("best_f", std::numeric_limits<double>::quiet_NaN());
    const double rs = row.rs.value("best_f", std::numeric_limits<double>::quiet_NaN());
    const bool bo_better = base.bo.direction == Direction::Minimize ? bo < rs : bo > rs;
    bo_wins += bo_better;
    bo_best.push_back(bo);
    rs_best.push_back(rs);
    std::printf("%-8llu %-22.12g %-22.12g %s\n", static_cast<unsigned long long>(row.seed), bo, rs,
                bo == rs ? "tie" : (bo_better ? "bo" : "random"));
    table.push_back({{"seed", row.seed}, {"bo", row.bo}, {"random_search", row.rs}});
  }
  const double bo_med = median(bo_best), rs_med = median(rs_best);
  std::printf("median   %-22.12g %-22.12g\n", bo_med, rs_med);
  std::printf("bo better on %d of %d seeds\n", bo_wins, b.seeds);

  if (!base.output.summary_path.empty()) {
    write_json(base.output.summary_path, {{"runs", table},
                                          {"median_bo", bo_med},
                                          {"median_random_search", rs_med},
                                          {"bo_wins", bo_wins},
                                          {"config", config_echo(base)}});
  }
  return worst_code;
}

struct SampleOptions {
  int draws = 5;
  int points = 200;
  std::string from_trace;
  std::string out;
};

int cmd_sample(const CommonOptions& o, const SampleOptions& s) {
  if (s.draws < 1 || s.points < 1) throw InvalidArgument("--draws and --points must be positive");
  if (s.out.empty()) throw InvalidArgument("sample requires --out");
  const RunConfig cfg = load_config(o);
  const Eigen::Index d = cfg.space.dimension();

  // Evaluation points: an even grid in one dimension, Halton points otherwise.
  Eigen::MatrixXd X;
  if (d == 1) {
    X.resize(s.points, 1);
    for (int i = 0; i < s.points; ++i)
      X(i, 0) = cfg.space.lower()[0] + cfg.space.width()[0] * (s.points == 1 ? 0.5 : double(i) / (s.points - 1));
  } else {
    X = cfg.space.from_unit(halton_points(s.points, d, mix_seed(cfg.bo.seed, 1)));
  }

  KernelSpec kernel = cfg.bo.fixed_kernel ? *cfg.bo.fixed_kernel : detail::default_hypers(cfg.bo, cfg.space).first;
  Eigen::MatrixXd draws;
  if (s.from_trace.empty()) {
    draws = sample_function(GpPrior{kernel, 0.0}, X, s.draws, cfg.bo.seed);
  } else {
    const Trace trace = read_trace(s.from_trace);
    if (trace.dimension != d) throw InvalidArgument("trace dimension differs from the search space");
    if (trace.records.empty()) throw InvalidArgument("trace has no records to condition on");
    Eigen::MatrixXd TX(static_cast<Eigen::Index>(trace.records.size()), d);
    Eigen::VectorXd Ty(TX.rows());
    for (Eigen::Index i = 0; i < TX.rows(); ++i) {
      TX.row(i) = trace.records[static_cast<std::size_t>(i)].x.transpose();
      Ty[i] = trace.records[static_cast<std::size_t>(i)].y;
    }
    const ObservationSet obs(TX, Ty);
    double noise = cfg.bo.noise_variance.value_or(1e-6);
    if (!cfg.bo.fixed_kernel && obs.size() >= 2) {
      HyperFitOptions opts;
      opts.n_restarts = cfg.bo.hyper_restarts;
      opts.max_iters = cfg.bo.hyper_max_iters;
      opts.nu = cfg.bo.nu;
      const auto fit = optimize_hypers(obs, cfg.bo.kernel_family, detail::loop_hyper_bounds(cfg.bo, cfg.space, Ty),
                                       cfg.bo.seed, opts);
      kernel = fit.kernel;
      noise = fit.noise_variance;
    }
    draws = sample_function(fit_posterior(obs, kernel, noise), X, s.draws, cfg.bo.seed);
  }

  std::ofstream out(s.out);
  if (!out) throw IoError("cannot open '" + s.out + "' for writing");
  for (Eigen::Index j = 0; j < d; ++j) out << (j ? "," : "") << "x_" << j;
  for (int k = 0; k < s.draws; ++k) out << ",f_" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out << (j ? "," : "") << detail::format_real(X(i, j));
    for (int k = 0; k < s.draws; ++k) out << ',' << detail::format_real(draws(k, i));
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + s.out + "'");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian optimization with Gaussian processes"};
  app.require_subcommand(1);

  CommonOptions run_opts, baseline_opts, bench_opts, sample_opts;
  BenchOptions bench;
  SampleOptions sample;

  auto* run = app.add_subcommand("run", "run Bayesian optimization");
  add_common(*run, run_opts);
  auto* baseline = app.add_subcommand("baseline", "run uniform random search");
  add_common(*baseline, baseline_opts);
  auto* bench_cmd = app.add_subcommand("bench", "paired BO vs random search over consecutive seeds");
  add_common(*bench_cmd, bench_opts);
  bench_cmd->add_option("--seeds", bench.seeds, "number of seeds, starting at --seed");
  bench_cmd->add_option("-j,--jobs", bench.jobs, "runs in flight at once");
  bench_cmd->add_option("--out-dir", bench.out_dir, "directory for per-seed trace files");
  auto* sample_cmd = app.add_subcommand("sample", "draw GP prior or posterior functions to CSV");
  add_common(*sample_cmd, sample_opts);
  sample_cmd->add_option("--draws", sample.draws, "number of functions to draw");
  sample_cmd->add_option("--points", sample.points, "number of evaluation points");
  sample_cmd->add_option("--from-trace", sample.from_trace, "condition on the observations in a trace CSV");
  sample_cmd->add_option("-o,--out", sample.out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_single(run_opts, Method::Bo);
    if (*baseline) return cmd_single(baseline_opts, Method::RandomSearch);
    if (*bench_cmd) return cmd_bench(bench_opts, bench);
    if (*sample_cmd) return cmd_sample(sample_opts, sample);
  } catch (const InvalidArgument& e) {
    std::cerr << "gpopt: configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "gpopt: " << e.what() << '\n';
    return kConfigError;
  } catch (const FormatError& e) {
    std::cerr << "gpopt: " << e.what() << '\n';
    return kConfigError;
  } catch (const ObjectiveError& e) {
    std::cerr << "gpopt: objective error: " << e.what() << '\n';
    return kObjectiveError;
  } catch (const NumericalError& e) {
    std::cerr << "gpopt: numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "gpopt: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
