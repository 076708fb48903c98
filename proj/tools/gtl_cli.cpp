// Experiment driver: solve | regress | gtl | gtl0 | bounds | report.
//
// Exit codes: 0 success, 2 configuration error, 3 missing or unreadable checkpoint,
// 4 runtime failure. Failures print {kind, message, stage} as JSON on stderr and, when the
// output directory is known, to <out>/error.json.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gtl/config.hpp"
#include "gtl/experiment.hpp"
#include "gtl/io.hpp"

namespace {

int exit_code_for(const std::string& kind) {
  if (kind == "invalid_config" || kind == "unknown_system" || kind == "invalid_argument") return 2;
  if (kind == "missing_checkpoint" || kind == "invalid_checkpoint") return 3;
  return 4;
}

int fail(const std::string& kind, const std::string& message, const std::string& stage,
         const std::optional<std::filesystem::path>& out) {
  const nlohmann::json err{{"kind", kind}, {"message", message}, {"stage", stage}};
  std::cerr << err.dump() << "\n";
  if (out) {
    try {
      gtl::io::write_json(*out / "error.json", err);
    } catch (...) {
    }
  }
  return exit_code_for(kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided trajectory learning experiment driver"};
  app.require_subcommand(1);

  std::string config_path, out_dir, weights_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<double> eps;
  std::optional<double> range_fraction;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "base seed; tasks, test, init, train use seed, seed+1, ...");
    sub->add_option("--workers", workers, "parallel solver workers")->check(CLI::PositiveNumber);
  };
  auto* solve = app.add_subcommand("solve", "batch-solve the original problem on the training tasks");
  auto* regress = app.add_subcommand("regress", "Regression baseline (iteration 0 only)");
  auto* gtl = app.add_subcommand("gtl", "guided trajectory learning with alpha > 0");
  auto* gtl0 = app.add_subcommand("gtl0", "GTL-0 (alpha = 0 penalty variant)");
  auto* bounds = app.add_subcommand("bounds", "violation bounds for a trained checkpoint");
  auto* report = app.add_subcommand("report", "error distribution report for a finished run");
  for (auto* s : {solve, regress, gtl, gtl0, bounds, report}) common(s);
  bounds->add_option("--eps", eps, "override the covering radius")->check(CLI::NonNegativeNumber);
  bounds->add_option("--weights", weights_path,
                     "weights checkpoint (default <out>/checkpoints/final/weights.bin)");
  report->add_option("--range-fraction", range_fraction,
                     "evaluate only the central fraction of the task box");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("invalid_config", e.what(), "arguments", std::nullopt);
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string cmd = sub->get_name();
  gtl::ExperimentConfig cfg;
  try {
    cfg = gtl::load_config(config_path);
    if (seed) cfg.seeds = gtl::Seeds::from_base(*seed);
    if (workers) cfg.workers = *workers;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
  } catch (const gtl::Error& e) {
    return fail(e.kind(), e.what(), "config", out_dir.empty() ? std::nullopt
                                                              : std::optional<std::filesystem::path>(out_dir));
  }
  const std::filesystem::path out = cfg.output_dir;

  try {
    nlohmann::json result;
    if (cmd == "solve") {
      result = gtl::cmd_solve(cfg, out);
    } else if (cmd == "regress" || cmd == "gtl" || cmd == "gtl0") {
      const gtl::GtlMode mode = cmd == "regress" ? gtl::GtlMode::regress
                                : cmd == "gtl"   ? gtl::GtlMode::gtl
                                                 : gtl::GtlMode::gtl0;
      result = gtl::cmd_gtl(cfg, out, mode).summary;
      result.erase("test_stats");
    } else if (cmd == "bounds") {
      const std::filesystem::path wp =
          weights_path.empty() ? out / "checkpoints" / "final" / "weights.bin"
                               : std::filesystem::path(weights_path);
      const nlohmann::json rep = gtl::cmd_bounds(cfg, out, wp, eps);
      result = {{"K", rep["K"]}, {"L_dur", rep["L_dur"]}, {"eps", rep["eps"]},
                {"bound_i", rep["bound_i"]}, {"measured_i", rep["measured_i"]},
                {"dominated", rep["dominated"]}};
    } else {
      result = gtl::cmd_report(cfg, out, range_fraction.value_or(cfg.eval_range_fraction));
    }
    std::cout << result.dump(2) << "\n";
  } catch (const gtl::Error& e) {
    return fail(e.kind(), e.what(), cmd, out);
  } catch (const std::exception& e) {
    return fail("runtime_error", e.what(), cmd, out);
  }
  return 0;
}
