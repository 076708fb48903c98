#ifndef GTL_EXPERIMENT_HPP_
#define GTL_EXPERIMENT_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtl/approximator.hpp"
#include "gtl/bounds.hpp"
#include "gtl/config.hpp"
#include "gtl/guided.hpp"
#include "gtl/io.hpp"
#include "gtl/nlp_solver.hpp"
#include "gtl/taskspace.hpp"

namespace gtl {

namespace fs = std::filesystem;

/// Records every artifact written under the output root and the wall time of each stage.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& root() const { return root_; }

  void csv(const std::string& rel, const std::vector<std::string>& header,
           const std::vector<std::vector<double>>& rows) {
    io::write_csv(root_ / rel, header, rows);
    add(rel);
  }
  void json(const std::string& rel, const nlohmann::json& j) {
    io::write_json(root_ / rel, j);
    add(rel);
  }
  void text(const std::string& rel, const std::string& s) {
    io::write_text(root_ / rel, s);
    add(rel);
  }
  void taskset(const std::string& rel, const TaskSet& ts, const TaskSpace& space) {
    io::write_taskset(root_ / rel, ts, space);
    add(rel);
    add(fs::path(rel).replace_extension(".json").string());
  }
  void trajectory(const std::string& rel, const Trajectory& tr, const Task& task) {
    io::write_trajectory(root_ / rel, tr, task);
    add(rel);
    add(fs::path(rel).replace_extension(".json").string());
  }
  void weights(const std::string& rel, const ApproximatorWeights& w) {
    io::write_weights(root_ / rel, w);
    add(rel);
  }

  template <class Fn>
  auto stage(const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Record {
      ArtifactWriter* self;
      std::string name;
      std::chrono::steady_clock::time_point t0;
      ~Record() {
        self->timings_.push_back(
            {name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
      }
    } rec{this, name, t0};
    return fn();
  }

  /// manifest.json, entry runs.<command>: config hash, input hash, artifact hashes and stage
  /// timings. Timings live only here, so every other artifact is a pure function of config and seeds.
  void finish(const std::string& command, const ExperimentConfig& cfg,
              const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json arts = nlohmann::json::object();
    std::sort(files_.begin(), files_.end());
    files_.erase(std::unique(files_.begin(), files_.end()), files_.end());
    for (const auto& f : files_) arts[f] = io::sha256_file(root_ / f);
    nlohmann::json timing = nlohmann::json::array();
    for (const auto& [n, s] : timings_) timing.push_back({{"stage", n}, {"seconds", s}});
    const std::string cfg_dump = to_json(cfg).dump();
    nlohmann::json entry{{"config_hash", io::sha256_hex(cfg_dump)},
                         {"inputs_hash", io::sha256_hex(command + "\n" + cfg_dump)},
                         {"artifacts", arts},
                         {"timings", timing},
                         {"output_dir", cfg.output_dir},
                         {"workers", cfg.workers}};
    for (const auto& [k, v] : extra.items()) entry[k] = v;
    // several commands may share one output directory; each keeps its own entry
    const fs::path mp = root_ / "manifest.json";
    nlohmann::json m = nlohmann::json::object();
    if (fs::exists(mp)) {
      try {
        m = nlohmann::json::parse(io::read_text(mp));
      } catch (const nlohmann::json::exception&) {
        m = nlohmann::json::object();
      }
    }
    m["runs"][command] = entry;
    io::write_json(mp, m);
  }

 private:
  void add(const std::string& rel) { files_.push_back(rel); }

  fs::path root_;
  std::vector<std::string> files_;
  std::vector<std::pair<std::string, double>> timings_;
};

namespace detail {

inline std::string padded(std::size_t i, int width = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return buf;
}

inline std::vector<std::string> tau_header(int m) {
  std::vector<std::string> h;
  for (int j = 0; j < m; ++j) h.push_back("tau_" + std::to_string(j));
  return h;
}

inline GtlContext make_context(const ExperimentConfig& cfg) {
  const TaskSpace space = cfg.space();
  TrainConfig train = cfg.train;
  train.seed = cfg.seeds.train;
  return GtlContext{make_system(cfg.system, space, cfg.system_params),
                    space,
                    cfg.nodes,
                    cfg.solver,
                    train,
                    cfg.workers,
                    cfg.seeds.tasks,
                    cfg.thresholds};
}

/// Evenly spaced tasks along one axis, other coordinates at the box centre.
inline TaskSet sweep_tasks(const ExperimentConfig& cfg) {
  const ContinuityConfig& c = cfg.continuity;
  TaskSet ts;
  const Vec centre = 0.5 * (cfg.task_lower + cfg.task_upper);
  for (int i = 0; i < c.points; ++i) {
    Vec v = centre;
    v[c.axis] = c.lower + (c.upper - c.lower) * i / (c.points - 1);
    ts.tasks.push_back(Task{v});
  }
  return ts;
}

inline double state_norm_inf(const TaskIterate& it, int L, int p) {
  return (it.traj.states - unflatten_rows(it.z.head(L * p), L, p)).lpNorm<Eigen::Infinity>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// solve

/// Batch-solves the original problem on the training TaskSet and exports one CSV per task.
inline nlohmann::json cmd_solve(const ExperimentConfig& cfg, const fs::path& out) {
  ArtifactWriter w(out);
  const GtlContext ctx = detail::make_context(cfg);
  const TaskSet tasks = sample_uniform(ctx.space, cfg.n_tasks, cfg.seeds.tasks);
  w.json("config.json", to_json(cfg));
  w.taskset("tasks.csv", tasks, ctx.space);
  const auto reps = w.stage("solve", [&] {
    return solve_original_batch(ctx.spec, tasks, cfg.nodes, cfg.solver, cfg.workers);
  });
  auto header = detail::tau_header(ctx.space.dims());
  header.insert(header.begin(), "task");
  for (const char* h : {"status", "objective", "feas_residual", "stationarity", "inner_iterations",
                        "outer_iterations"})
    header.push_back(h);
  std::vector<std::vector<double>> log;
  int n_conv = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const NlpInstance nlp = transcribe(ctx.spec, tasks[i], cfg.nodes);
    w.trajectory("trajectories/task_" + detail::padded(i) + ".csv", nlp.unpack(reps[i].solution),
                 tasks[i]);
    std::vector<double> row{static_cast<double>(i)};
    for (int j = 0; j < tasks[i].dims(); ++j) row.push_back(tasks[i][j]);
    row.push_back(static_cast<double>(reps[i].status));
    row.push_back(reps[i].objective);
    row.push_back(reps[i].feas_residual);
    row.push_back(reps[i].stationarity);
    row.push_back(reps[i].inner_iterations);
    row.push_back(reps[i].outer_iterations);
    log.push_back(std::move(row));
    n_conv += reps[i].status == SolveStatus::converged;
  }
  w.csv("run_log.csv", header, log);
  const nlohmann::json summary{{"n_tasks", tasks.size()},
                               {"n_converged", n_conv},
                               {"status_codes", {"converged", "max_iter", "infeasible_point"}}};
  w.json("summary.json", summary);
  w.finish("solve", cfg);
  return summary;
}

// ---------------------------------------------------------------------------
// regress / gtl / gtl0

enum class GtlMode { regress, gtl, gtl0 };

inline std::string to_string(GtlMode m) {
  switch (m) {
    case GtlMode::regress: return "regress";
    case GtlMode::gtl: return "gtl";
    case GtlMode::gtl0: return "gtl0";
  }
  return "?";
}

/// Result handle for callers that need the in-memory run besides the files.
struct GtlOutcome {
  RunResult run;
  std::vector<nlohmann::json> test_stats;  // per iteration, held-out split
  nlohmann::json summary;
};

/// Runs Regression (iteration 0 only), GTL or GTL-0 and writes metrics, error distributions,
/// checkpoints, per-task trajectories and the continuity study.
inline GtlOutcome cmd_gtl(ExperimentConfig cfg, const fs::path& out, GtlMode mode) {
  switch (mode) {
    case GtlMode::regress: cfg.gtl.max_iterations = 0; break;
    case GtlMode::gtl0:
      require(cfg.gtl.alpha == 0.0, "gtl0 requires gtl.alpha = 0", "invalid_config");
      break;
    case GtlMode::gtl:
      require(cfg.gtl.alpha > 0.0, "gtl requires gtl.alpha > 0 (use gtl0 for alpha = 0)",
              "invalid_config");
      break;
  }
  cfg.validate();
  ArtifactWriter w(out);
  const GtlContext ctx = detail::make_context(cfg);
  const TaskSet train_tasks = sample_uniform(ctx.space, cfg.n_tasks, cfg.seeds.tasks);
  const int n_test = cfg.test_count();
  const TaskSet test_tasks =
      n_test > 0 ? sample_uniform(ctx.space, n_test, cfg.seeds.test) : TaskSet{};
  const TaskSet sweep = detail::sweep_tasks(cfg);
  TaskSet eval = test_tasks;
  eval.tasks.insert(eval.tasks.end(), sweep.tasks.begin(), sweep.tasks.end());

  w.json("config.json", to_json(cfg));
  w.taskset("tasks_train.csv", train_tasks, ctx.space);
  if (n_test > 0) w.taskset("tasks_test.csv", test_tasks, ctx.space);

  const int L = cfg.nodes, p = ctx.spec.state_dim, m = ctx.space.dims();
  const int node = static_cast<int>(std::floor(cfg.continuity.node_fraction * L));
  const int feat = cfg.continuity.state_index;
  require(feat >= 0 && feat < p, "continuity.state_index out of range", "invalid_config");
  const int feat_node = std::min(node, L - 1);

  std::vector<std::string> mhead{"k", "rho", "mean_ninf", "max_ninf"};
  for (std::size_t t = 0; t < cfg.thresholds.size(); ++t)
    mhead.push_back("frac_gt_thresh" + std::to_string(t + 1));
  for (const char* h : {"mean_cost", "multiplier_norm", "test_mean_ninf", "test_max_ninf"})
    mhead.push_back(h);
  for (std::size_t t = 0; t < cfg.thresholds.size(); ++t)
    mhead.push_back("test_frac_gt_thresh" + std::to_string(t + 1));
  for (const char* h : {"mean_ninf_sq", "mean_duration_error", "recon_error",
                        "augmented_lagrangian", "n_failed"})
    mhead.push_back(h);
  std::vector<std::vector<double>> mrows, logrows;
  std::vector<double> original_feat, regression_feat;
  GtlOutcome outcome;

  auto ehead = detail::tau_header(m);
  ehead.insert(ehead.begin(), {"split", "task"});
  ehead.insert(ehead.end(), {"ninf", "duration_error", "solved"});

  auto on_iter = [&](const AdmmState& s, const IterationMetrics& im) {
    const std::string tag = "iter_" + std::to_string(s.k);
    // held-out statistics use only the test split of the evaluation set
    std::vector<double> test_err;
    std::vector<std::vector<double>> erows;
    auto emit = [&](int split, const TaskSet& ts, const std::vector<TaskIterate>& its,
                    std::size_t count) {
      for (std::size_t i = 0; i < count; ++i) {
        const TaskIterate& it = its[i];
        const double e = detail::state_norm_inf(it, L, p);
        std::vector<double> row{static_cast<double>(split), static_cast<double>(i)};
        for (int j = 0; j < m; ++j) row.push_back(ts[i][j]);
        row.push_back(e);
        row.push_back(std::abs(it.traj.duration - it.z[L * p] / s.gamma));
        row.push_back(it.solved ? 1.0 : 0.0);
        erows.push_back(std::move(row));
        if (split == 1 && it.solved) test_err.push_back(e);
      }
    };
    emit(0, s.tasks, s.iterates, s.iterates.size());
    emit(1, s.eval_tasks, s.eval_iterates, static_cast<std::size_t>(n_test));
    w.csv("errors/" + tag + ".csv", ehead, erows);

    nlohmann::json ts = nlohmann::json::object();
    std::vector<double> test_frac(cfg.thresholds.size(), 0.0);
    double test_mean = 0.0, test_max = 0.0;
    if (!test_err.empty()) {
      const ErrorStats st = error_statistics(test_err, cfg.thresholds);
      test_mean = st.mean;
      test_max = st.max;
      test_frac = st.exceed_fraction;
      ts = {{"mean", st.mean}, {"max", st.max}, {"mode", st.mode}, {"exceed_fraction", st.exceed_fraction}};
    }
    outcome.test_stats.push_back(ts);

    std::vector<double> row{static_cast<double>(im.k), im.rho, im.mean_ninf, im.max_ninf};
    for (std::size_t t = 0; t < cfg.thresholds.size(); ++t)
      row.push_back(t < im.frac_gt.size() ? im.frac_gt[t] : 0.0);
    row.insert(row.end(), {im.mean_cost, im.multiplier_norm, test_mean, test_max});
    row.insert(row.end(), test_frac.begin(), test_frac.end());
    row.insert(row.end(), {im.mean_ninf_sq, im.mean_duration_error, im.recon_error,
                           im.augmented_lagrangian, static_cast<double>(im.n_failed)});
    mrows.push_back(std::move(row));

    for (std::size_t i = 0; i < s.iterates.size(); ++i) {
      const TaskIterate& it = s.iterates[i];
      logrows.push_back({static_cast<double>(s.k), static_cast<double>(i),
                         static_cast<double>(it.status), it.solved ? 1.0 : 0.0, it.cost});
    }

    const std::string ck = "checkpoints/" + tag + "/";
    w.weights(ck + "weights.bin", s.weights);
    for (std::size_t i = 0; i < s.iterates.size(); ++i)
      w.trajectory(ck + "trajectories/task_" + detail::padded(i) + ".csv", s.iterates[i].traj,
                   s.tasks[i]);

    if (s.k == 0) {
      for (std::size_t i = 0; i < sweep.size(); ++i) {
        const TaskIterate& it = s.eval_iterates[n_test + i];
        original_feat.push_back(it.traj.states(feat_node, feat));
        regression_feat.push_back(it.z[feat_node * p + feat]);
      }
    }
  };

  outcome.run = w.stage("gtl", [&] { return run(train_tasks, cfg.gtl, ctx,
                                                  init_weights(cfg.net, cfg.seeds.init), eval,
                                                  on_iter); });
  const AdmmState& fin = outcome.run.state;

  w.csv("metrics.csv", mhead, mrows);
  w.csv("run_log.csv", {"k", "task", "status", "solved", "cost"}, logrows);
  w.weights("checkpoints/final/weights.bin", fin.weights);

  std::vector<std::vector<double>> crows;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const TaskIterate& it = fin.eval_iterates[n_test + i];
    crows.push_back({sweep[i][cfg.continuity.axis], original_feat[i],
                     it.traj.states(feat_node, feat), regression_feat[i],
                     it.z[feat_node * p + feat]});
  }
  w.csv("continuity.csv", {"tau", "original", "guided", "regression_pred", "gtl_pred"}, crows);

  const Proposition1Report prop = proposition1_check(cfg.gtl, 0.0);
  outcome.summary = {{"mode", to_string(mode)},
                     {"iterations", fin.k},
                     {"stop_reason", outcome.run.stop_reason},
                     {"criterion_met", outcome.run.criterion_met},
                     {"continuity_node", feat_node},
                     {"n_train", train_tasks.size()},
                     {"n_test", n_test},
                     {"test_stats", outcome.test_stats},
                     {"proposition1",
                      {{"lipschitz_L", 0.0},
                       {"regime", prop.regime},
                       {"message", prop.message},
                       {"warning", prop.warning}}}};
  w.json("summary.json", outcome.summary);
  w.finish(to_string(mode), cfg);
  return outcome;
}

// ---------------------------------------------------------------------------
// bounds

struct GumbelCurve {
  std::vector<std::size_t> n;
  std::vector<double> mean_eps;
  std::vector<double> bound;
  double beta = 0.0;  // smallest single beta dominating every mean_eps
};

/// Mean covering radius over replicates per N and the fitted expectation bound.
inline GumbelCurve gumbel_curve(const TaskSpace& space, const std::vector<std::size_t>& grid,
                                int replicates, std::uint64_t seed) {
  GumbelCurve g;
  const int m = space.dims();
  for (std::size_t n : grid) {
    double s = 0.0;
    for (int r = 0; r < replicates; ++r)
      s += covering_radius(sample_uniform(space, n, seed + 1000003ULL * n + r));
    g.n.push_back(n);
    g.mean_eps.push_back(s / replicates);
    g.beta = std::max(g.beta, g.mean_eps.back() / gumbel_expectation_bound(n, m, 1.0));
  }
  for (std::size_t n : g.n) g.bound.push_back(gumbel_expectation_bound(n, m, g.beta));
  return g;
}

/// Bounds pipeline on a trained checkpoint. eps defaults to the training covering radius.
inline nlohmann::json cmd_bounds(const ExperimentConfig& cfg, const fs::path& out,
                                 const fs::path& weights_path, std::optional<double> eps_override,
                                 double slack = 1.2) {
  const ApproximatorWeights wts = io::read_weights(weights_path);
  require(wts.config.seq_len == cfg.nodes && wts.config.task_dim == cfg.net.task_dim,
          "checkpoint network does not match the config", "invalid_checkpoint");
  ArtifactWriter w(out);
  const GtlContext ctx = detail::make_context(cfg);
  const TaskSet train_tasks = sample_uniform(ctx.space, cfg.n_tasks, cfg.seeds.tasks);
  const double eps_n = covering_radius(train_tasks);
  const double eps = eps_override.value_or(eps_n);
  const TrajectoryMap map = approximator_map(wts);

  LipschitzProbeConfig lc = cfg.bounds.lipschitz;
  lc.seed = cfg.seeds.test;
  const LipschitzEstimates lip = w.stage("lipschitz", [&] {
    return estimate_lipschitz(map, ctx.spec, ctx.space, lc);
  });
  const ViolationBound vb = violation_bound(lip, eps, false);
  const ViolationBound vbl = violation_bound(lip, eps, true);
  const ViolationProfile prof = w.stage("violation", [&] {
    return violation_measured(map, ctx.spec, ctx.space, cfg.bounds.grid_n);
  });
  const McEstimate mc = w.stage("monte_carlo", [&] {
    return mc_cost_integral(
        [&](const Task& t) {
          const NlpInstance nlp = transcribe(ctx.spec, t, cfg.nodes);
          return nlp.trajectory_cost(nlp.pack(completed_trajectory(ctx.spec, t, map(t))));
        },
        ctx.space, cfg.bounds.mc_samples, cfg.seeds.test);
  });
  const GumbelCurve gc = w.stage("gumbel", [&] {
    return gumbel_curve(ctx.space, cfg.bounds.gumbel_grid, cfg.bounds.gumbel_replicates,
                        cfg.seeds.tasks);
  });

  std::vector<bool> dominated, dominated_slack;
  for (std::size_t i = 0; i < vb.bound.size(); ++i) {
    dominated.push_back(prof.max_violation[i] <= vb.bound[i]);
    dominated_slack.push_back(prof.max_violation[i] <= slack * vb.bound[i]);
  }
  const nlohmann::json report{
      {"K", lip.K},
      {"L_dur", lip.L_dur},
      {"constraints", lip.constraint_names},
      {"m_i", lip.m},
      {"eps", eps},
      {"covering_radius", eps_n},
      {"bound_i", vb.bound},
      {"measured_i", prof.max_violation},
      {"dominated", dominated},
      {"slack", slack},
      {"dominated_with_slack", dominated_slack},
      {"local",
       {{"K", lip.K_local}, {"L_dur", lip.L_dur_local}, {"m_i", lip.m_local}, {"bound_i", vbl.bound}}},
      {"lipschitz_method", lip.method},
      {"lipschitz_pairs", lip.pairs_used},
      {"grid_n", cfg.bounds.grid_n},
      {"mc_cost", {{"I_N", mc.integral}, {"var_est", mc.var_est}, {"n", mc.n}}},
      {"gumbel",
       {{"n", gc.n}, {"mean_eps", gc.mean_eps}, {"bound", gc.bound}, {"beta", gc.beta},
        {"m", ctx.space.dims()}}}};
  w.json("bounds.json", report);

  auto head = detail::tau_header(ctx.space.dims());
  head.insert(head.end(), prof.names.begin(), prof.names.end());
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < prof.tasks.size(); ++i) {
    std::vector<double> r(prof.tasks[i].coords.data(),
                          prof.tasks[i].coords.data() + prof.tasks[i].dims());
    r.insert(r.end(), prof.per_task[i].begin(), prof.per_task[i].end());
    rows.push_back(std::move(r));
  }
  w.csv("violation_profile.csv", head, rows);
  w.finish("bounds", cfg, {{"weights", weights_path.string()},
                           {"weights_sha256", io::sha256_file(weights_path)}});
  return report;
}

// ---------------------------------------------------------------------------
// report

/// Re-reads errors/iter_k.csv from a GTL run and recomputes the per-iteration distribution,
/// optionally only for tasks inside the central range_fraction of the task box.
inline nlohmann::json cmd_report(const ExperimentConfig& cfg, const fs::path& run_dir,
                                 double range_fraction) {
  require(range_fraction > 0.0 && range_fraction <= 1.0, "range fraction must be in (0, 1]",
          "invalid_config");
  const int m = static_cast<int>(cfg.task_lower.size());
  const Vec centre = 0.5 * (cfg.task_lower + cfg.task_upper);
  const Vec half = 0.5 * range_fraction * (cfg.task_upper - cfg.task_lower);
  nlohmann::json iters = nlohmann::json::array();
  for (int k = 0;; ++k) {
    const fs::path f = run_dir / "errors" / ("iter_" + std::to_string(k) + ".csv");
    if (!fs::exists(f)) {
      if (k == 0) throw Error("missing_checkpoint", "no error exports under " + run_dir.string());
      break;
    }
    std::istringstream in(io::read_text(f));
    std::string line;
    std::getline(in, line);
    std::vector<double> train_e, test_e;
    while (std::getline(in, line)) {
      std::vector<double> v;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
      require(static_cast<int>(v.size()) == m + 5, "malformed error export " + f.string(),
              "invalid_checkpoint");
      bool inside = v[m + 4] > 0.5;
      for (int j = 0; j < m; ++j) inside = inside && std::abs(v[2 + j] - centre[j]) <= half[j];
      if (inside) (v[0] == 0.0 ? train_e : test_e).push_back(v[2 + m]);
    }
    auto stats = [&](const std::vector<double>& e) -> nlohmann::json {
      if (e.empty()) return nullptr;
      const ErrorStats st = error_statistics(e, cfg.thresholds);
      return {{"n", e.size()}, {"mean", st.mean}, {"max", st.max}, {"mode", st.mode},
              {"exceed_fraction", st.exceed_fraction}};
    };
    iters.push_back({{"k", k}, {"train", stats(train_e)}, {"test", stats(test_e)}});
  }
  const nlohmann::json rep{{"range_fraction", range_fraction}, {"thresholds", cfg.thresholds},
                           {"iterations", iters}};
  io::write_json(run_dir / "report.json", rep);
  return rep;
}

}  // namespace gtl

#endif  // GTL_EXPERIMENT_HPP_
