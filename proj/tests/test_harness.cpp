#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "shapeopt/harness/run.hpp"

using namespace shapeopt;
using namespace shapeopt::harness;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

std::string echo(const RunConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("shapeopt_harness_" + name);
  fs::remove_all(p);
  return p;
}

/// Surrogate run small enough for a unit test.
RunConfig tiny_surrogate() {
  return parse(
      "run.objective = surrogate\n"
      "mesh.layers = 12\n"
      "rl.episode_steps = 8\n"
      "rl.warmup_episodes = 1\n"
      "rl.epochs = 6\n"
      "rl.steps_per_epoch = 4\n"
      "rl.batch_small = 4\n"
      "rl.batch_large = 8\n"
      "rl.batch_switch = 30\n"
      "rl.hidden = 16\n"
      "rl.embed = 8\n");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SHAPEOPT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kSmallMesh = "--set geometry.n_points=60 --set mesh.layers=12 --set geometry.degree=12";

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(Config, EchoRoundTripsDefaults) {
  const RunConfig d{};
  const auto text = echo(d);
  EXPECT_EQ(echo(parse(text)), text);
  EXPECT_NE(text.find("run.objective = drag"), std::string::npos);
  EXPECT_NE(text.find("geometry.thickness_ranges = 0:0.1,0.7:1"), std::string::npos);
}

TEST(Config, ShippedConfigsParseAndRoundTrip) {
  int n = 0;
  for (const auto& f : fs::directory_iterator(SHAPEOPT_CONFIG_DIR)) {
    if (f.path().extension() != ".cfg") continue;
    ++n;
    const auto c = load_config(f.path().string());
    EXPECT_EQ(echo(parse(echo(c))), echo(c)) << f.path();
  }
  EXPECT_GE(n, 4);
}

TEST(Config, ValuesAreApplied) {
  const auto c = parse(
      "# comment line\n"
      "  flow.mach = 0.8   # trailing comment\n"
      "flow.aoa_deg=1.25\n"
      "\n"
      "run.objective = lift_drag_ratio\n"
      "run.seed = 42\n"
      "rl.retry = false\n"
      "mesh.layers = 20\n"
      "geometry.thickness_ranges = 0:0.2\n"
      "surrogate.target_actions = 0.5:0.001:-0.001:0.3\n");
  EXPECT_EQ(c.env.objective.freestream.mach, 0.8);
  EXPECT_EQ(c.env.objective.freestream.aoa_deg, 1.25);
  EXPECT_EQ(c.env.objective.mode, rl::ObjectiveMode::ratio);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_FALSE(c.train.retry);
  EXPECT_EQ(c.env.layers, 20);
  ASSERT_EQ(c.env.thickness_ranges.size(), 1u);
  EXPECT_EQ(c.env.thickness_ranges[0].hi, 0.2);
  ASSERT_EQ(c.env.objective.surrogate.target_actions.size(), 1u);
  EXPECT_EQ(c.env.objective.surrogate.target_actions[0].y_lower_change, -0.001);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse("no.such.key = 1\n"), ConfigError);
  EXPECT_THROW(parse("flow.mach = 0.8\nflow.mach = 0.7\n"), ConfigError);
  EXPECT_THROW(parse("flow.mach 0.8\n"), ConfigError);
  EXPECT_THROW(parse("flow.mach = fast\n"), ConfigError);
  EXPECT_THROW(parse("mesh.layers = 2.5\n"), ConfigError);
  EXPECT_THROW(parse("rl.batch_small = -4\n"), ConfigError);
  EXPECT_THROW(parse("rl.retry = maybe\n"), ConfigError);
  EXPECT_THROW(parse("flow.mach = -1\n"), ConfigError);           // validation
  EXPECT_THROW(parse("geometry.n_points = 131\n"), ConfigError);  // validation
  EXPECT_THROW(parse("run.objective = lift\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);
  try {
    parse("flow.mach = 0.8\n\nflow.gamma = x\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

TEST(Optimize, TracesAndEcho) {
  const auto out = scratch_dir("opt");
  const auto cfg = tiny_surrogate();
  const auto r = run_optimize(cfg, out);
  for (const char* f : {"config.cfg", "trace.csv", "drag_trace.csv", "noise_trace.csv", "ratio_trace.csv", "summary.csv",
                        "final_shape.dat", "final_mesh.msh", "last_shape.dat", "checkpoint/actor.ckpt"})
    EXPECT_TRUE(fs::exists(out / f)) << f;

  const auto drag = read_csv(out / "drag_trace.csv");
  ASSERT_GE(drag.size(), 3u);
  EXPECT_EQ(drag[0], (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(parse_double(drag[1][1]), r.result.d0);
  EXPECT_EQ(drag.size(), 2u + 8u + 6u * 4u);

  const auto ratio = read_csv(out / "ratio_trace.csv");
  ASSERT_EQ(ratio.size(), drag.size());
  for (std::size_t i = 1; i < ratio.size(); ++i) EXPECT_EQ(parse_double(ratio[i][1]), -parse_double(drag[i][1]));

  const auto noise = read_csv(out / "noise_trace.csv");
  ASSERT_EQ(noise.size(), 7u);
  for (std::size_t i = 2; i < noise.size(); ++i) EXPECT_LE(parse_double(noise[i][1]), parse_double(noise[i - 1][1]));

  // the echo alone reproduces the run
  const auto again = scratch_dir("opt_again");
  run_optimize(load_config((out / "config.cfg").string()), again);
  EXPECT_EQ(slurp(out / "trace.csv"), slurp(again / "trace.csv"));
  EXPECT_EQ(slurp(out / "final_shape.dat"), slurp(again / "final_shape.dat"));
  fs::remove_all(again);

  // replay of the best design gives the best objective and leaves the input alone
  const auto shape_before = slurp(out / "final_shape.dat");
  const auto rep = scratch_dir("replay");
  const auto v = run_replay(cfg, out / "final_shape.dat", rep);
  EXPECT_EQ(v.d, r.result.best_d);
  EXPECT_EQ(slurp(out / "final_shape.dat"), shape_before);
  fs::remove_all(rep);
  fs::remove_all(out);
}

TEST(Optimize, DragModeHasNoRatioTrace) {
  rl::TrainResult res;
  res.d0 = 1.0;
  const auto out = scratch_dir("drag_only");
  fs::create_directories(out);
  emit_traces(out, res, rl::ObjectiveMode::drag);
  EXPECT_TRUE(fs::exists(out / "drag_trace.csv"));
  EXPECT_FALSE(fs::exists(out / "ratio_trace.csv"));
  fs::remove_all(out);
}

TEST(Adapt, SurrogateObjectiveRejected) {
  EXPECT_THROW(run_adapt(tiny_surrogate(), scratch_dir("adapt_sur")), ConfigError);
}

TEST(Output, UnwritableDirectoryIsIoError) {
  EXPECT_THROW(prepare_output("/proc/shapeopt_cannot_write_here", RunConfig{}), IoError);
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("solve --no-such-flag"), 1);
  EXPECT_EQ(run_cli("solve --config /nonexistent.cfg"), 1);
  EXPECT_EQ(run_cli("solve --set no.such.key=1"), 1);
  EXPECT_EQ(run_cli("replay"), 1);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Cli, SolverFailureExitsTwo) {
  const auto out = scratch_dir("cli_fail");
  EXPECT_EQ(run_cli("solve " + kSmallMesh + " --set solver.max_iter=2 --out " + out.string()), 2);
  fs::remove_all(out);
}

TEST(Cli, SolveWritesSymmetricForces) {
  const auto out = scratch_dir("cli_solve");
  ASSERT_EQ(run_cli("solve " + kSmallMesh + " --out " + out.string()), 0);
  const auto rows = read_csv(out / "forces.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"label", "cells", "newton_iterations", "cd", "cl"}));
  EXPECT_LT(std::abs(parse_double(rows[1][4])), 5e-3);
  EXPECT_GT(parse_double(rows[1][3]), 0.0);
  EXPECT_TRUE(fs::exists(out / "config.cfg"));
  fs::remove_all(out);
}

TEST(Cli, AdaptWritesHistorySchema) {
  const auto out = scratch_dir("cli_adapt");
  ASSERT_EQ(run_cli("adapt " + kSmallMesh + " --set dwr.refine_steps=1 --out " + out.string()), 0);
  const auto rows = read_csv(out / "dwr_history.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"step", "cells_coarse", "cells_fine", "J_uncorrected", "correction",
                                               "J_corrected", "TOL", "marked"}));
  fs::remove_all(out);
}

TEST(Cli, OptimizeSameSeedIdenticalTraces) {
  const std::string tiny =
      " --set run.objective=surrogate --set mesh.layers=12 --set rl.episode_steps=8 --set rl.warmup_episodes=1"
      " --set rl.epochs=4 --set rl.steps_per_epoch=4 --set rl.batch_small=4 --set rl.batch_large=8"
      " --set rl.hidden=16 --set rl.embed=8 --quiet --seed 7";
  const auto a = scratch_dir("cli_opt_a"), b = scratch_dir("cli_opt_b");
  ASSERT_EQ(run_cli("optimize" + tiny + " --out " + a.string()), 0);
  ASSERT_EQ(run_cli("optimize" + tiny + " --out " + b.string()), 0);
  EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv"));
  EXPECT_NE(slurp(a / "config.cfg").find("run.seed = 7"), std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}
