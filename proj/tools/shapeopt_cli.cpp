// shapeopt command line: solve, adapt, optimize, replay, validate.
// Exit codes: 0 success, 1 configuration or usage error, 2 solver failure,
// 3 a validate check failed.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "shapeopt/harness/run.hpp"

using namespace shapeopt;
using namespace shapeopt::harness;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonOptions& o, const std::string& default_out) {
  o.out = default_out;
  sub->add_option("--config", o.config, "Run configuration (key = value lines)")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Random seed, overrides run.seed");
  sub->add_option("--out", o.out, "Output directory")->capture_default_str();
  sub->add_option("--set", o.overrides, "Extra key=value setting applied after the config file");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_key(cfg, harness::detail::trim(kv.substr(0, eq)), harness::detail::trim(kv.substr(eq + 1)));
  }
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

void print_row(const rl::TraceRow& r) {
  std::printf("%s episode %d epoch %d step %ld t %d D %.6g reward %.4g%s\n", r.retry ? "  retry" : "step", r.episode,
              r.epoch, r.step, r.t, r.d, r.reward, r.infeasible ? " (rejected)" : "");
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aerodynamic shape optimization: Euler solver, adjoint-based adaptation, TD3 agent"};
  app.require_subcommand(1);

  CommonOptions solve_o, adapt_o, opt_o, replay_o, valid_o;
  auto* solve = app.add_subcommand("solve", "One flow solve on the baseline mesh, writes forces");
  add_common(solve, solve_o, "out/solve");
  auto* adapt = app.add_subcommand("adapt", "Adjoint-based adaptation loop, writes the history");
  add_common(adapt, adapt_o, "out/adapt");
  auto* optimize = app.add_subcommand("optimize", "TD3 shape optimization run");
  add_common(optimize, opt_o, "out/optimize");
  bool quiet = false;
  optimize->add_flag("--quiet", quiet, "Do not print a line per step");
  auto* replay = app.add_subcommand("replay", "Re-evaluate a saved shape");
  add_common(replay, replay_o, "out/replay");
  std::string shape_file;
  replay->add_option("--shape", shape_file, "Shape file written by optimize")->required()->check(CLI::ExistingFile);
  auto* validate = app.add_subcommand("validate", "Run the invariant suites");
  add_common(validate, valid_o, "out/validate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (solve->parsed()) {
      const auto r = run_solve(resolve(solve_o), solve_o.out);
      std::printf("cells %zu newton_iterations %d residual %.3e cd %.7f cl %.7f\n", r.cells, r.iterations,
                  r.residual_norm, r.forces.cd, r.forces.cl);
    } else if (adapt->parsed()) {
      const auto r = run_adapt(resolve(adapt_o), adapt_o.out);
      for (const auto& h : r.result.history)
        std::printf("step %d cells %zu cd %.7f cl %.7f J_corrected %.7f marked %zu\n", h.step, h.cells_coarse,
                    h.cd_coarse, h.cl_coarse, h.j_corrected, h.marked);
      std::printf("final cells %zu cd %.7f cl %.7f\n", r.result.mesh.triangles.size(), r.final_forces.cd,
                  r.final_forces.cl);
    } else if (optimize->parsed()) {
      const auto cfg = resolve(opt_o);
      const auto r = run_optimize(cfg, opt_o.out, quiet ? std::function<void(const rl::TraceRow&)>{} : print_row);
      std::printf("d0 %.7g best %.7g last %.7g updates %ld time %.1fs\n", r.result.d0, r.result.best_d,
                  r.result.last.value.d, r.result.updates, r.seconds);
    } else if (replay->parsed()) {
      const auto v = run_replay(resolve(replay_o), shape_file, replay_o.out);
      std::printf("d %.7g cd %.7g cl %.7g cells %zu\n", v.d, v.cd, v.cl, v.cells);
    } else if (validate->parsed()) {
      bool all = true;
      run_validate(resolve(valid_o), valid_o.out, [&](const CheckResult& c) {
        all = all && c.pass;
        std::printf("%s  %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
        std::fflush(stdout);
      });
      return all ? 0 : 3;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
