// Command-line front end: run configured second-order analyses, reproduce the
// j2 curvature study, aggregate the finite-difference checks, or just solve.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "stsparse/stsparse.hpp"

namespace {

using namespace stsparse;

void print_counterexample(const CounterexampleTable& table) {
  std::printf("%-12s %-14s %-14s %-14s %-14s %-12s\n", "t", "j2(v_t)", "analytic", "pairing",
              "analytic", "quotient");
  for (const auto& r : table.rows)
    std::printf("%-12.6g %-14.10f %-14.10f %-14.10f %-14.10f %-12.8f\n", r.t, r.j2_grid,
                r.j2_analytic, r.pairing_grid, r.pairing_analytic, r.quotient);
  std::printf("extrapolated curvature limit: %.8f (analytic 1/3 = %.8f)\n",
              table.extrapolated_limit, 1.0 / 3.0);
}

void print_fdcheck(const FdCheckReport& rep) {
  std::printf("%-28s %-14s %-14s %s\n", "check", "observed", "threshold", "status");
  for (const auto& r : rep.rows)
    std::printf("%-28s %-14.6g %s %-12.6g %s\n", r.name.c_str(), r.observed,
                r.larger_is_better ? ">=" : "<=", r.threshold, r.pass ? "pass" : "FAIL");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"second-order analysis of spatio-temporally sparse optimal control"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags remain usable after the subcommand

  std::uint64_t seed = 0;
  int samples = 0;
  std::string json_path, csv_dir;
  app.add_option("--seed", seed, "override the config RNG seed");
  app.add_option("--samples", samples, "override the number of critical samples");
  app.add_option("--json", json_path, "write the JSON report here");
  app.add_option("--csv-dir", csv_dir, "write CSV tables into this directory");

  std::string cfg_path;
  auto* analyze_cmd = app.add_subcommand("analyze", "solve and certify one configuration");
  analyze_cmd->add_option("config", cfg_path, "problem configuration file")->required();

  auto* counter_cmd =
      app.add_subcommand("counterexample", "reproduce the j2 curvature study at u = 0");
  int grid_n = 512;
  double t_min = 0.5 / 1024.0;
  counter_cmd->add_option("--grid", grid_n, "cells per axis");
  counter_cmd->add_option("--tmin", t_min, "smallest t of the halving schedule");

  auto* fd_cmd = app.add_subcommand("fdcheck", "run the finite-difference oracle suite");
  std::string fd_cfg_path;
  fd_cmd->add_option("config", fd_cfg_path, "problem configuration file (optional)");

  auto* solve_cmd = app.add_subcommand("solve", "solve one configuration");
  std::string solve_cfg_path, out_dir;
  solve_cmd->add_option("config", solve_cfg_path, "problem configuration file")->required();
  solve_cmd->add_option("--out", out_dir, "output directory for the solution files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze_cmd) {
      const ConfigFile cfg = ConfigFile::parse_file(cfg_path);
      const ProblemConfig pc = load_problem(cfg);
      AnalyzeOptions aopts = load_analyze_options(cfg);
      if (seed) aopts.seed = seed;
      if (samples) aopts.critical_samples = samples;
      const SocReport rep = analyze(pc, aopts, load_solve_options(cfg));
      if (!rep.error.empty()) {
        std::fprintf(stderr, "analysis failed: %s (partial report written)\n",
                     rep.error.c_str());
        if (!json_path.empty()) write_json(rep, json_path);
        if (!csv_dir.empty()) write_csv_tables(rep, csv_dir);
        return 1;
      }
      std::printf("first-order residual %.3e (%s)\n", rep.first_order_residual,
                  rep.first_order_pass ? "pass" : "FAIL");
      for (const auto& s : rep.critical_samples)
        std::printf("direction %d: F''v^2 = %.6g, G'' = %s, sum = %.6g (%s)\n", s.id, s.fpp,
                    s.gpp_known ? s.gpp.str().c_str() : "unknown", s.sum,
                    s.pass ? "pass" : "FAIL");
      std::printf("growth: %d samples in radius %.3g, min margin %.6g (%s)\n",
                  rep.growth.sample_count, rep.growth.radius, rep.growth.min_margin,
                  rep.growth.pass ? "pass" : "FAIL");
      if (rep.necessary_condition_violation)
        std::printf("necessary-condition violation detected\n");
      if (!json_path.empty()) write_json(rep, json_path);
      if (!csv_dir.empty()) write_csv_tables(rep, csv_dir);
      const bool ok =
          rep.first_order_pass && rep.growth.pass && !rep.necessary_condition_violation;
      return ok ? 0 : 1;
    }

    if (*counter_cmd) {
      const auto schedule = default_counterexample_schedule(t_min);
      const CounterexampleTable table = reproduce_j2_counterexample(schedule, grid_n);
      print_counterexample(table);
      if (!json_path.empty() || !csv_dir.empty()) {
        SocReport rep;
        rep.generated_at = report_detail::timestamp();
        rep.kind = "j2";
        rep.counterexample = table;
        if (!json_path.empty()) write_json(rep, json_path);
        if (!csv_dir.empty()) write_csv_tables(rep, csv_dir);
      }
      return std::abs(table.extrapolated_limit - 1.0 / 3.0) <= 1e-3 ? 0 : 1;
    }

    if (*fd_cmd) {
      ProblemConfig pc;  // built-in defaults when no config is given
      pc.pde.grid = make_grid_1d(12, 12);
      pc.pde.nu = 0.5;
      pc.penalty = {SparsityKind::J1, 0.3, {-1.0, 1.0}};
      if (!fd_cfg_path.empty()) pc = load_problem(ConfigFile::parse_file(fd_cfg_path));
      const FdCheckReport rep = fd_check_suite(pc, seed ? seed : 1);
      print_fdcheck(rep);
      return rep.all_pass ? 0 : 1;
    }

    if (*solve_cmd) {
      const ConfigFile cfg = ConfigFile::parse_file(solve_cfg_path);
      const ProblemConfig pc = load_problem(cfg);
      const SolveResult res =
          solve_ocp(pc, GridFunction::zeros(pc.pde.grid), load_solve_options(cfg));
      std::printf("iterations %d, converged %s, kkt residual %.3e, objective %.10g\n",
                  res.iterations, res.converged ? "yes" : "no", res.kkt,
                  res.objective_history.back());
      if (!out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        write_csv(res.u, (fs::path(out_dir) / "control.csv").string());
        write_binary(res.u, (fs::path(out_dir) / "control.bin").string());
        write_binary(res.lambda, (fs::path(out_dir) / "subgradient.bin").string());
      }
      return res.converged ? 0 : 1;
    }
  } catch (const stsparse::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
