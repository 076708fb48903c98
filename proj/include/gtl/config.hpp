#ifndef GTL_CONFIG_HPP_
#define GTL_CONFIG_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtl/approximator.hpp"
#include "gtl/bounds.hpp"
#include "gtl/common.hpp"
#include "gtl/guided.hpp"
#include "gtl/io.hpp"
#include "gtl/nlp_solver.hpp"
#include "gtl/systems.hpp"
#include "gtl/taskspace.hpp"

namespace gtl {

using json = nlohmann::json;

struct Seeds {
  std::uint64_t tasks = 1;
  std::uint64_t test = 2;
  std::uint64_t init = 3;
  std::uint64_t train = 4;

  /// --seed B sets tasks, test, init, train to B, B+1, B+2, B+3.
  static Seeds from_base(std::uint64_t b) { return {b, b + 1, b + 2, b + 3}; }
};

/// Swept task coordinate for the continuity study; the feature is X[node, state_index] with
/// node = floor(node_fraction * L_T).
struct ContinuityConfig {
  double lower = -0.25;
  double upper = 0.25;
  int points = 101;
  int axis = 0;
  int state_index = 1;
  double node_fraction = 0.2;
};

struct BoundsConfig {
  int grid_n = 1000;  // per axis for the measured violation
  LipschitzProbeConfig lipschitz;
  std::size_t mc_samples = 1000;
  std::vector<std::size_t> gumbel_grid{50, 100, 200, 400, 800, 1600, 3200};
  int gumbel_replicates = 30;
};

struct ExperimentConfig {
  std::string system = "double_integrator";
  json system_params = json::object();
  Vec task_lower;
  Vec task_upper;
  int nodes = 64;
  int n_tasks = 200;
  int n_test = -1;  // -1 means n_tasks / 5
  NetConfig net;
  SolverConfig solver;
  GtlConfig gtl;
  TrainConfig train;
  Seeds seeds;
  std::vector<double> thresholds{0.01, 0.015};
  ContinuityConfig continuity;
  BoundsConfig bounds;
  std::string output_dir = "out";
  int workers = 1;
  // Evaluation-only restriction of the task box to this fraction of its width around the centre.
  double eval_range_fraction = 1.0;

  TaskSpace space() const { return TaskSpace(task_lower, task_upper); }
  int test_count() const { return n_test >= 0 ? n_test : n_tasks / 5; }

  void validate() const;
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), where + " must be an object", "invalid_config");
  for (const auto& [k, v] : j.items())
    require(allowed.count(k) > 0, "unknown key '" + k + "' in " + where, "invalid_config");
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline void get_vec(const json& j, const char* key, Vec& out) {
  if (j.contains(key)) out = io::vec_from_json(j.at(key));
}

inline void get_double_or_inf(const json& j, const char* key, double& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  out = v.is_null() || (v.is_string() && v.get<std::string>() == "inf") ? kInf : v.get<double>();
}

}  // namespace detail

inline const std::vector<std::string>& known_systems() {
  static const std::vector<std::string> s{"double_integrator", "pendulum", "discontinuous_family"};
  return s;
}

/// Builds the system from name, task box and system_params.
inline SystemSpec make_system(const std::string& name, const TaskSpace& space, const json& p) {
  using detail::get_opt;
  if (name == "double_integrator") {
    detail::check_keys(p, {"duration_lower", "duration_upper"}, "system_params");
    DoubleIntegratorParams dp;
    get_opt(p, "duration_lower", dp.duration.lower);
    get_opt(p, "duration_upper", dp.duration.upper);
    return double_integrator_spec(space, dp);
  }
  if (name == "pendulum") {
    detail::check_keys(p, {"inertia", "gravity", "max_torque"}, "system_params");
    PendulumParams pp;
    get_opt(p, "inertia", pp.inertia);
    get_opt(p, "gravity", pp.gravity);
    get_opt(p, "max_torque", pp.max_torque);
    return pendulum_spec(space, pp);
  }
  if (name == "discontinuous_family") {
    detail::check_keys(p,
                       {"duration", "weight", "sigma_x", "sigma_y", "offset_scale", "obstacle_x",
                        "goal_x", "guess_detour"},
                       "system_params");
    ObstacleParams op;
    get_opt(p, "duration", op.duration);
    get_opt(p, "weight", op.weight);
    get_opt(p, "sigma_x", op.sigma_x);
    get_opt(p, "sigma_y", op.sigma_y);
    get_opt(p, "offset_scale", op.offset_scale);
    get_opt(p, "obstacle_x", op.obstacle_x);
    get_opt(p, "goal_x", op.goal_x);
    get_opt(p, "guess_detour", op.guess_detour);
    return discontinuous_family_spec(space, op);
  }
  throw Error("unknown_system", "unknown system '" + name + "'");
}

inline void ExperimentConfig::validate() const {
  require(task_lower.size() >= 1 && task_lower.size() == task_upper.size(),
          "task_space needs lower and upper of equal nonzero length", "invalid_config");
  for (Eigen::Index j = 0; j < task_lower.size(); ++j)
    require(task_lower[j] < task_upper[j], "task_space requires lower < upper", "invalid_config");
  require(nodes >= 2, "nodes must be >= 2", "invalid_config");
  require(n_tasks >= 1, "n_tasks must be >= 1", "invalid_config");
  require(net.seq_len == nodes, "net.seq_len must equal nodes", "invalid_config");
  require(net.task_dim == task_lower.size(), "net.task_dim must equal the task dimension",
          "invalid_config");
  net.validate();
  solver.validate();
  gtl.validate();
  train.validate();
  require(workers >= 1, "workers must be >= 1", "invalid_config");
  require(!thresholds.empty(), "thresholds must not be empty", "invalid_config");
  require(continuity.points >= 2, "continuity.points must be >= 2", "invalid_config");
  require(continuity.axis >= 0 && continuity.axis < task_lower.size(),
          "continuity.axis out of range", "invalid_config");
  require(continuity.node_fraction >= 0.0 && continuity.node_fraction <= 1.0,
          "continuity.node_fraction must be in [0, 1]", "invalid_config");
  require(bounds.grid_n >= 2, "bounds.grid_n must be >= 2", "invalid_config");
  require(bounds.mc_samples >= 2, "bounds.mc_samples must be >= 2", "invalid_config");
  require(bounds.gumbel_replicates >= 1, "bounds.gumbel_replicates must be >= 1", "invalid_config");
  require(eval_range_fraction > 0.0 && eval_range_fraction <= 1.0,
          "eval_range_fraction must be in (0, 1]", "invalid_config");
}

/// Parses and validates a config. Unknown system names raise "unknown_system", everything else
/// "invalid_config".
inline ExperimentConfig parse_config(const json& j) {
  using detail::check_keys;
  using detail::get_opt;
  ExperimentConfig c;
  try {
    check_keys(j,
               {"system", "system_params", "task_space", "nodes", "n_tasks", "n_test", "net",
                "solver", "gtl", "train", "seeds", "thresholds", "continuity", "bounds",
                "output_dir", "workers", "eval_range_fraction"},
               "config");
    get_opt(j, "system", c.system);
    if (j.contains("system_params")) c.system_params = j.at("system_params");
    require(j.contains("task_space"), "task_space is required", "invalid_config");
    const json& ts = j.at("task_space");
    check_keys(ts, {"lower", "upper"}, "task_space");
    detail::get_vec(ts, "lower", c.task_lower);
    detail::get_vec(ts, "upper", c.task_upper);
    get_opt(j, "nodes", c.nodes);
    get_opt(j, "n_tasks", c.n_tasks);
    get_opt(j, "n_test", c.n_test);
    get_opt(j, "workers", c.workers);
    get_opt(j, "output_dir", c.output_dir);
    get_opt(j, "thresholds", c.thresholds);
    get_opt(j, "eval_range_fraction", c.eval_range_fraction);

    c.net.seq_len = c.nodes;
    c.net.task_dim = static_cast<int>(c.task_lower.size());
    if (j.contains("net")) {
      const json& n = j.at("net");
      check_keys(n, {"n_hidden", "hidden_size", "n_upsample", "kernel_len", "input_center",
                     "input_scale", "normalize_inputs"},
                 "net");
      get_opt(n, "n_hidden", c.net.n_hidden);
      get_opt(n, "hidden_size", c.net.hidden_size);
      get_opt(n, "n_upsample", c.net.n_upsample);
      get_opt(n, "kernel_len", c.net.kernel_len);
      detail::get_vec(n, "input_center", c.net.input_center);
      detail::get_vec(n, "input_scale", c.net.input_scale);
      if (n.value("normalize_inputs", false)) {
        c.net.input_center = 0.5 * (c.task_lower + c.task_upper);
        c.net.input_scale = 0.5 * (c.task_upper - c.task_lower);
      }
    }

    if (j.contains("solver")) {
      const json& s = j.at("solver");
      check_keys(s, {"max_outer", "max_inner", "penalty_init", "penalty_growth", "penalty_max",
                     "feas_tol", "opt_tol", "mult_tol", "armijo", "backtrack", "max_backtracks"},
                 "solver");
      get_opt(s, "max_outer", c.solver.max_outer);
      get_opt(s, "max_inner", c.solver.max_inner);
      get_opt(s, "penalty_init", c.solver.penalty_init);
      get_opt(s, "penalty_growth", c.solver.penalty_growth);
      get_opt(s, "penalty_max", c.solver.penalty_max);
      get_opt(s, "feas_tol", c.solver.feas_tol);
      get_opt(s, "opt_tol", c.solver.opt_tol);
      get_opt(s, "mult_tol", c.solver.mult_tol);
      get_opt(s, "armijo", c.solver.inner_step.armijo);
      get_opt(s, "backtrack", c.solver.inner_step.backtrack);
      get_opt(s, "max_backtracks", c.solver.inner_step.max_backtracks);
    }

    c.gtl.n_tasks = c.n_tasks;
    if (j.contains("gtl")) {
      const json& g = j.at("gtl");
      check_keys(g, {"gamma", "rho", "alpha", "max_iterations", "stopping", "stopping_tol",
                     "resample_each_iter"},
                 "gtl");
      get_opt(g, "gamma", c.gtl.gamma);
      get_opt(g, "alpha", c.gtl.alpha);
      get_opt(g, "max_iterations", c.gtl.max_iterations);
      get_opt(g, "stopping_tol", c.gtl.stopping_tol);
      get_opt(g, "resample_each_iter", c.gtl.resample_each_iter);
      if (g.contains("stopping")) {
        const std::string m = g.at("stopping");
        require(m == "multiplier_delta" || m == "recon_error_delta",
                "gtl.stopping must be multiplier_delta or recon_error_delta", "invalid_config");
        c.gtl.stopping =
            m == "multiplier_delta" ? StoppingMode::multiplier_delta : StoppingMode::recon_error_delta;
      }
      if (g.contains("rho")) {
        const json& r = g.at("rho");
        if (r.is_number()) {
          c.gtl.rho.initial = r.get<double>();
        } else {
          check_keys(r, {"initial", "growth", "max"}, "gtl.rho");
          get_opt(r, "initial", c.gtl.rho.initial);
          get_opt(r, "growth", c.gtl.rho.growth);
          detail::get_double_or_inf(r, "max", c.gtl.rho.max);
        }
      }
    }

    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t, {"epochs", "batch_size", "learning_rate", "final_lr_fraction", "momentum",
                     "optimizer"},
                 "train");
      get_opt(t, "epochs", c.train.epochs);
      get_opt(t, "batch_size", c.train.batch_size);
      get_opt(t, "learning_rate", c.train.learning_rate);
      get_opt(t, "final_lr_fraction", c.train.final_lr_fraction);
      get_opt(t, "momentum", c.train.momentum);
      get_opt(t, "optimizer", c.train.optimizer);
    }

    if (j.contains("seeds")) {
      const json& s = j.at("seeds");
      check_keys(s, {"tasks", "test", "init", "train"}, "seeds");
      get_opt(s, "tasks", c.seeds.tasks);
      get_opt(s, "test", c.seeds.test);
      get_opt(s, "init", c.seeds.init);
      get_opt(s, "train", c.seeds.train);
    }

    if (j.contains("continuity")) {
      const json& s = j.at("continuity");
      check_keys(s, {"lower", "upper", "points", "axis", "state_index", "node_fraction"},
                 "continuity");
      get_opt(s, "lower", c.continuity.lower);
      get_opt(s, "upper", c.continuity.upper);
      get_opt(s, "points", c.continuity.points);
      get_opt(s, "axis", c.continuity.axis);
      get_opt(s, "state_index", c.continuity.state_index);
      get_opt(s, "node_fraction", c.continuity.node_fraction);
    }

    if (j.contains("bounds")) {
      const json& b = j.at("bounds");
      check_keys(b, {"grid_n", "mc_samples", "gumbel_grid", "gumbel_replicates", "lipschitz"},
                 "bounds");
      get_opt(b, "grid_n", c.bounds.grid_n);
      get_opt(b, "mc_samples", c.bounds.mc_samples);
      get_opt(b, "gumbel_grid", c.bounds.gumbel_grid);
      get_opt(b, "gumbel_replicates", c.bounds.gumbel_replicates);
      if (b.contains("lipschitz")) {
        const json& l = b.at("lipschitz");
        check_keys(l, {"method", "grid_n", "pairs", "constraint_probes", "local_center",
                       "local_radius"},
                   "bounds.lipschitz");
        get_opt(l, "method", c.bounds.lipschitz.method);
        get_opt(l, "grid_n", c.bounds.lipschitz.grid_n);
        get_opt(l, "pairs", c.bounds.lipschitz.pairs);
        get_opt(l, "constraint_probes", c.bounds.lipschitz.constraint_probes);
        detail::get_vec(l, "local_center", c.bounds.lipschitz.local_center);
        detail::get_double_or_inf(l, "local_radius", c.bounds.lipschitz.local_radius);
      }
    }
  } catch (const json::exception& e) {
    throw Error("invalid_config", std::string("config type error: ") + e.what());
  }
  require(std::find(known_systems().begin(), known_systems().end(), c.system) !=
              known_systems().end(),
          "unknown system '" + c.system + "'", "unknown_system");
  require(c.task_lower.size() >= 1 && c.task_lower.size() == c.task_upper.size() &&
              (c.task_lower.array() < c.task_upper.array()).all(),
          "task_space needs lower < upper of equal nonzero length", "invalid_config");
  try {
    c.net.state_dim = make_system(c.system, c.space(), c.system_params).state_dim;
  } catch (const Error& e) {
    if (e.kind() == "unknown_system") throw;
    throw Error("invalid_config", e.what());
  }
  c.validate();
  return c;
}

/// Fully resolved config, echoed into the output directory and hashed into the manifest.
/// output_dir and workers are left out: they never change artifact content.
inline json to_json(const ExperimentConfig& c) {
  auto num_or_inf = [](double v) { return std::isinf(v) ? json("inf") : json(v); };
  const auto& l = c.bounds.lipschitz;
  return {
      {"system", c.system},
      {"system_params", c.system_params},
      {"task_space", {{"lower", io::to_json(c.task_lower)}, {"upper", io::to_json(c.task_upper)}}},
      {"nodes", c.nodes},
      {"n_tasks", c.n_tasks},
      {"n_test", c.test_count()},
      {"net", io::net_config_json(c.net)},
      {"solver",
       {{"max_outer", c.solver.max_outer},
        {"max_inner", c.solver.max_inner},
        {"penalty_init", c.solver.penalty_init},
        {"penalty_growth", c.solver.penalty_growth},
        {"penalty_max", c.solver.penalty_max},
        {"feas_tol", c.solver.feas_tol},
        {"opt_tol", c.solver.opt_tol},
        {"mult_tol", c.solver.mult_tol},
        {"armijo", c.solver.inner_step.armijo},
        {"backtrack", c.solver.inner_step.backtrack},
        {"max_backtracks", c.solver.inner_step.max_backtracks}}},
      {"gtl",
       {{"gamma", c.gtl.gamma},
        {"rho",
         {{"initial", c.gtl.rho.initial}, {"growth", c.gtl.rho.growth}, {"max", num_or_inf(c.gtl.rho.max)}}},
        {"alpha", c.gtl.alpha},
        {"max_iterations", c.gtl.max_iterations},
        {"stopping", to_string(c.gtl.stopping)},
        {"stopping_tol", c.gtl.stopping_tol},
        {"resample_each_iter", c.gtl.resample_each_iter}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"final_lr_fraction", c.train.final_lr_fraction},
        {"momentum", c.train.momentum},
        {"optimizer", c.train.optimizer}}},
      {"seeds",
       {{"tasks", c.seeds.tasks}, {"test", c.seeds.test}, {"init", c.seeds.init}, {"train", c.seeds.train}}},
      {"thresholds", c.thresholds},
      {"continuity",
       {{"lower", c.continuity.lower},
        {"upper", c.continuity.upper},
        {"points", c.continuity.points},
        {"axis", c.continuity.axis},
        {"state_index", c.continuity.state_index},
        {"node_fraction", c.continuity.node_fraction}}},
      {"bounds",
       {{"grid_n", c.bounds.grid_n},
        {"mc_samples", c.bounds.mc_samples},
        {"gumbel_grid", c.bounds.gumbel_grid},
        {"gumbel_replicates", c.bounds.gumbel_replicates},
        {"lipschitz",
         {{"method", l.method},
          {"grid_n", l.grid_n},
          {"pairs", l.pairs},
          {"constraint_probes", l.constraint_probes},
          {"local_center", io::to_json(l.local_center)},
          {"local_radius", num_or_inf(l.local_radius)}}}}},
      {"eval_range_fraction", c.eval_range_fraction}};
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw Error("invalid_config", "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_text(path), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw Error("invalid_config", std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace gtl

#endif  // GTL_CONFIG_HPP_
