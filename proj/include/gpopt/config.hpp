#pragma once

// JSON forms of the library's configuration types and the run-config
// document read by the command-line tool.
//
// Kernel:       {"family": "sq_exp_iso"|"sq_exp_ard"|"matern", "signal_variance": f,
//                "length_scales": [f, ...], "nu": 0.5|1.5|2.5}
// Acquisition:  {"family": "pi"|"ei"|"lcb"|"ucb", "xi": f|null, "upsilon": f, "xi_decay": f|null}
// Run config:   {"space": {"lower": [...], "upper": [...]},
//                "objective": {"builtin": "branin", "dimension": 2}
//                           | {"command": ["prog", "arg"], "mode": "persistent"|"oneshot",
//                              "timeout_ms": n, "dimension": d},
//                "bo": {...BoConfig fields...},
//                "output": {"trace": "trace.csv", "summary": "summary.json"}}

#include <chrono>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "gpopt/acquisition.hpp"
#include "gpopt/error.hpp"
#include "gpopt/external.hpp"
#include "gpopt/kernels.hpp"
#include "gpopt/loop.hpp"
#include "gpopt/objectives.hpp"

namespace gpopt {

using Json = nlohmann::json;

inline std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::SquaredExpIso: return "sq_exp_iso";
    case KernelFamily::SquaredExpArd: return "sq_exp_ard";
    case KernelFamily::Matern: return "matern";
  }
  return "";
}

inline KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "sq_exp_iso") return KernelFamily::SquaredExpIso;
  if (s == "sq_exp_ard") return KernelFamily::SquaredExpArd;
  if (s == "matern") return KernelFamily::Matern;
  throw InvalidArgument("unknown kernel family '" + s + "'");
}

inline std::string to_string(AcquisitionFamily f) {
  switch (f) {
    case AcquisitionFamily::PI: return "pi";
    case AcquisitionFamily::EI: return "ei";
    case AcquisitionFamily::LCB: return "lcb";
    case AcquisitionFamily::UCB: return "ucb";
  }
  return "";
}

inline AcquisitionFamily acquisition_family_from_string(const std::string& s) {
  if (s == "pi") return AcquisitionFamily::PI;
  if (s == "ei") return AcquisitionFamily::EI;
  if (s == "lcb") return AcquisitionFamily::LCB;
  if (s == "ucb") return AcquisitionFamily::UCB;
  throw InvalidArgument("unknown acquisition family '" + s + "'");
}

namespace detail {

inline Eigen::VectorXd vector_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw InvalidArgument(std::string(what) + " must be a non-empty array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidArgument(std::string(what) + " must contain only numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Reads a field with a type check, translating library exceptions.
template <typename T>
std::optional<T> get_optional(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw InvalidArgument(std::string("config field '") + key + "' has the wrong type");
  }
}

template <typename T>
T get_required(const Json& j, const char* key) {
  auto v = get_optional<T>(j, key);
  if (!v) throw InvalidArgument(std::string("config field '") + key + "' is required");
  return *v;
}

inline void require_object(const Json& j, const char* what) {
  if (!j.is_object()) throw InvalidArgument(std::string(what) + " must be a JSON object");
}

}  // namespace detail

inline Json kernel_to_json(const KernelSpec& k) {
  Json j;
  j["family"] = to_string(k.family());
  j["signal_variance"] = k.signal_variance();
  j["length_scales"] = detail::vector_to_json(k.length_scales());
  if (k.family() == KernelFamily::Matern) j["nu"] = nu_value(k.nu());
  return j;
}

inline KernelSpec kernel_from_json(const Json& j) {
  detail::require_object(j, "kernel");
  const auto family = kernel_family_from_string(detail::get_required<std::string>(j, "family"));
  const double sf2 = detail::get_required<double>(j, "signal_variance");
  if (!j.contains("length_scales")) throw InvalidArgument("config field 'length_scales' is required");
  Eigen::VectorXd ls = detail::vector_from_json(j.at("length_scales"), "length_scales");
  switch (family) {
    case KernelFamily::SquaredExpIso:
      if (ls.size() != 1) throw InvalidArgument("sq_exp_iso takes exactly one length-scale");
      return KernelSpec::squared_exp_iso(sf2, ls[0]);
    case KernelFamily::SquaredExpArd: return KernelSpec::squared_exp_ard(sf2, std::move(ls));
    case KernelFamily::Matern: break;
  }
  return KernelSpec::matern(matern_nu_from_value(detail::get_required<double>(j, "nu")), sf2, std::move(ls));
}

inline Json acquisition_to_json(const AcquisitionSpec& a) {
  Json j;
  j["family"] = to_string(a.family);
  j["xi"] = a.xi ? Json(*a.xi) : Json(nullptr);
  j["upsilon"] = a.upsilon;
  j["xi_decay"] = a.xi_decay ? Json(*a.xi_decay) : Json(nullptr);
  return j;
}

inline AcquisitionSpec acquisition_from_json(const Json& j) {
  detail::require_object(j, "acquisition");
  AcquisitionSpec a;
  if (auto f = detail::get_optional<std::string>(j, "family")) a.family = acquisition_family_from_string(*f);
  a.xi = detail::get_optional<double>(j, "xi");
  if (auto u = detail::get_optional<double>(j, "upsilon")) a.upsilon = *u;
  a.xi_decay = detail::get_optional<double>(j, "xi_decay");
  a.validate();
  return a;
}

inline std::string to_string(Direction d) { return d == Direction::Minimize ? "minimize" : "maximize"; }

inline Direction direction_from_string(const std::string& s) {
  if (s == "minimize") return Direction::Minimize;
  if (s == "maximize") return Direction::Maximize;
  throw InvalidArgument("direction must be 'minimize' or 'maximize', got '" + s + "'");
}

inline Json bo_config_to_json(const BoConfig& c) {
  Json j;
  j["budget"] = c.budget;
  j["n_init"] = c.n_init ? Json(*c.n_init) : Json(nullptr);
  Json kernel = c.fixed_kernel ? kernel_to_json(*c.fixed_kernel) : Json::object();
  kernel["family"] = to_string(c.kernel_family);
  if (c.kernel_family == KernelFamily::Matern) kernel["nu"] = nu_value(c.nu);
  j["kernel"] = kernel;
  j["refit_hypers"] = c.refit_hypers;
  j["hyper_restarts"] = c.hyper_restarts;
  j["hyper_max_iters"] = c.hyper_max_iters;
  j["hyper_ranges"] = {{"signal_variance", {c.hyper_ranges.signal_variance_lo, c.hyper_ranges.signal_variance_hi}},
                       {"length_scale", {c.hyper_ranges.length_scale_lo, c.hyper_ranges.length_scale_hi}},
                       {"noise_variance", {c.hyper_ranges.noise_variance_lo, c.hyper_ranges.noise_variance_hi}}};
  j["noise_variance"] = c.noise_variance ? Json(*c.noise_variance) : Json("fit");
  j["acquisition"] = acquisition_to_json(c.acquisition);
  j["candidate_count"] = c.candidate_count ? Json(*c.candidate_count) : Json(nullptr);
  j["refine_iters"] = c.refine_iters;
  j["seed"] = c.seed;
  j["direction"] = to_string(c.direction);
  return j;
}

inline BoConfig bo_config_from_json(const Json& j) {
  detail::require_object(j, "bo");
  BoConfig c;
  if (auto v = detail::get_optional<int>(j, "budget")) c.budget = *v;
  c.n_init = detail::get_optional<int>(j, "n_init");
  if (auto it = j.find("kernel"); it != j.end()) {
    detail::require_object(*it, "kernel");
    if (auto f = detail::get_optional<std::string>(*it, "family")) c.kernel_family = kernel_family_from_string(*f);
    if (auto nu = detail::get_optional<double>(*it, "nu")) c.nu = matern_nu_from_value(*nu);
    if (it->contains("signal_variance") || it->contains("length_scales")) {
      Json full = *it;
      full["family"] = to_string(c.kernel_family);
      if (c.kernel_family == KernelFamily::Matern) full["nu"] = nu_value(c.nu);
      c.fixed_kernel = kernel_from_json(full);
    }
  }
  if (auto v = detail::get_optional<bool>(j, "refit_hypers")) c.refit_hypers = *v;
  if (auto v = detail::get_optional<int>(j, "hyper_restarts")) c.hyper_restarts = *v;
  if (auto v = detail::get_optional<int>(j, "hyper_max_iters")) c.hyper_max_iters = *v;
  if (auto it = j.find("hyper_ranges"); it != j.end()) {
    detail::require_object(*it, "hyper_ranges");
    auto pair = [&](const char* key, double& lo, double& hi) {
      if (auto v = detail::get_optional<std::vector<double>>(*it, key)) {
        if (v->size() != 2) throw InvalidArgument(std::string("hyper_ranges.") + key + " must be [lo, hi]");
        lo = (*v)[0];
        hi = (*v)[1];
      }
    };
    pair("signal_variance", c.hyper_ranges.signal_variance_lo, c.hyper_ranges.signal_variance_hi);
    pair("length_scale", c.hyper_ranges.length_scale_lo, c.hyper_ranges.length_scale_hi);
    pair("noise_variance", c.hyper_ranges.noise_variance_lo, c.hyper_ranges.noise_variance_hi);
  }
  if (auto it = j.find("noise_variance"); it != j.end() && !it->is_null()) {
    if (it->is_string()) {
      if (it->get<std::string>() != "fit") throw InvalidArgument("noise_variance must be a number or \"fit\"");
      c.noise_variance = std::nullopt;
    } else if (it->is_number()) {
      c.noise_variance = it->get<double>();
    } else {
      throw InvalidArgument("noise_variance must be a number or \"fit\"");
    }
  }
  if (auto it = j.find("acquisition"); it != j.end()) c.acquisition = acquisition_from_json(*it);
  c.candidate_count = detail::get_optional<int>(j, "candidate_count");
  if (auto v = detail::get_optional<int>(j, "refine_iters")) c.refine_iters = *v;
  if (auto v = detail::get_optional<std::uint64_t>(j, "seed")) c.seed = *v;
  if (auto v = detail::get_optional<std::string>(j, "direction")) c.direction = direction_from_string(*v);
  return c;
}

/// Where the objective comes from: a builtin by name or an external worker.
struct ObjectiveSpec {
  std::variant<std::string, ExternalSpec> source;
  Eigen::Index dimension = 0;

  bool is_builtin() const { return std::holds_alternative<std::string>(source); }
};

inline ObjectiveSpec objective_from_json(const Json& j) {
  detail::require_object(j, "objective");
  ObjectiveSpec spec;
  const bool has_builtin = j.contains("builtin");
  const bool has_command = j.contains("command");
  if (has_builtin == has_command) throw InvalidArgument("objective needs exactly one of 'builtin' or 'command'");
  const auto dim = detail::get_optional<long>(j, "dimension");
  if (has_builtin) {
    auto name = detail::get_required<std::string>(j, "builtin");
    if (!is_builtin_objective(name)) throw InvalidArgument("unknown builtin objective '" + name + "'");
    spec.dimension = dim.value_or(2);
    spec.source = std::move(name);
  } else {
    ExternalSpec ext;
    ext.command = detail::get_required<std::vector<std::string>>(j, "command");
    if (ext.command.empty() || ext.command.front().empty())
      throw InvalidArgument("objective command must be non-empty");
    if (auto mode = detail::get_optional<std::string>(j, "mode")) {
      if (*mode == "persistent") ext.mode = WorkerMode::Persistent;
      else if (*mode == "oneshot") ext.mode = WorkerMode::OneShot;
      else throw InvalidArgument("objective mode must be 'persistent' or 'oneshot'");
    }
    if (auto t = detail::get_optional<long>(j, "timeout_ms")) {
      if (*t <= 0) throw InvalidArgument("timeout_ms must be positive");
      ext.timeout = std::chrono::milliseconds(*t);
    }
    spec.dimension = dim.value_or(0);
    spec.source = std::move(ext);
  }
  if (spec.dimension < 0) throw InvalidArgument("objective dimension must be positive");
  return spec;
}

inline Objective make_objective(const ObjectiveSpec& spec) {
  if (spec.is_builtin()) return make_builtin_objective(std::get<std::string>(spec.source));
  return make_external_objective(std::get<ExternalSpec>(spec.source));
}

struct OutputSpec {
  std::string trace_path;
  std::string summary_path;
};

/// Everything one invocation of the tool needs.
struct RunConfig {
  SearchSpace space;
  ObjectiveSpec objective;
  BoConfig bo;
  OutputSpec output;
};

inline SearchSpace space_from_json(const Json& j) {
  detail::require_object(j, "space");
  if (!j.contains("lower") || !j.contains("upper")) throw InvalidArgument("space needs 'lower' and 'upper'");
  return SearchSpace(detail::vector_from_json(j.at("lower"), "space.lower"),
                     detail::vector_from_json(j.at("upper"), "space.upper"));
}

inline Json space_to_json(const SearchSpace& s) {
  return {{"lower", detail::vector_to_json(s.lower())}, {"upper", detail::vector_to_json(s.upper())}};
}

inline RunConfig run_config_from_json(const Json& j) {
  detail::require_object(j, "config");
  if (!j.contains("objective")) throw InvalidArgument("config needs an 'objective'");
  ObjectiveSpec objective = objective_from_json(j.at("objective"));

  std::optional<SearchSpace> space;
  if (auto it = j.find("space"); it != j.end()) space = space_from_json(*it);
  if (!space) {
    if (!objective.is_builtin()) throw InvalidArgument("external objectives need an explicit 'space'");
    space = recommended_space(std::get<std::string>(objective.source), objective.dimension);
  }
  if (objective.dimension == 0) objective.dimension = space->dimension();
  if (objective.dimension != space->dimension())
    throw InvalidArgument("objective dimension differs from the search space dimension");
  if (objective.is_builtin()) {
    const auto& name = std::get<std::string>(objective.source);
    if (name == "branin" && objective.dimension != 2) throw InvalidArgument("branin is two-dimensional");
    if (name == "rosenbrock" && objective.dimension < 2) throw InvalidArgument("rosenbrock needs at least two dimensions");
  }

  BoConfig bo;
  if (auto it = j.find("bo"); it != j.end()) bo = bo_config_from_json(*it);

  OutputSpec output;
  if (auto it = j.find("output"); it != j.end()) {
    detail::require_object(*it, "output");
    output.trace_path = detail::get_optional<std::string>(*it, "trace").value_or("");
    output.summary_path = detail::get_optional<std::string>(*it, "summary").value_or("");
  }
  return RunConfig{std::move(*space), std::move(objective), std::move(bo), std::move(output)};
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw InvalidArgument("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace gpopt
