// Command-line front end: reference-data generation, forward/inverse training,
// evaluation, plot-data export, and multi-run sweeps.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pfw/config.hpp"
#include "pfw/core.hpp"
#include "pfw/jets.hpp"
#include "pfw/network.hpp"
#include "pfw/residual.hpp"
#include "pfw/spectral.hpp"
#include "pfw/train.hpp"

namespace fs = std::filesystem;
using pfw::config::RunConfig;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;  // empty = config output_dir
  std::optional<std::uint64_t> seed;
  std::optional<int> iters;
};

RunConfig load_with_overrides(const CommonArgs& args) {
  RunConfig cfg = pfw::config::load_run_config(args.config_path);
  if (args.seed) cfg.training.seed = *args.seed;
  if (args.iters) cfg.training.iterations = *args.iters;
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  cfg.training.validate();
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw pfw::IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw pfw::IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw pfw::IoError("write failed: " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw pfw::IoError("cannot open for reading: " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw pfw::IoError(path + ": malformed JSON: " + e.what());
  }
}

pfw::train::ProgressFn make_progress(int iterations) {
  int stride = std::max(1, iterations / 10);
  return [stride, iterations](int stage, const pfw::train::IterationRecord& r) {
    if ((r.iteration + 1) % stride != 0 && r.iteration + 1 != iterations) return;
    std::fprintf(stderr,
                 "  stage %d  iter %6d/%d  loss %.6e  residual %.3e  initial %.3e  data %.3e\n",
                 stage, r.iteration + 1, iterations, r.total, r.residual, r.initial, r.data);
  };
}

// ---------------------------------------------------------------------------

int cmd_generate(const CommonArgs& args) {
  RunConfig cfg = load_with_overrides(args);
  ensure_dir(cfg.output_dir);
  auto grid = cfg.grid();
  auto pde = cfg.pde();
  auto ic = pfw::config::make_initial_condition(cfg.initial, cfg.dimension);

  std::printf("generate: %s (%s, %dD) grid", cfg.name.c_str(),
              pfw::equation_name(cfg.equation), cfg.dimension);
  for (int a = 0; a < cfg.dimension; ++a) std::printf(" %d", grid.n[static_cast<std::size_t>(a)]);
  std::printf(", dt=%g, T=%g\n", cfg.reference.dt, cfg.t_end);

  pfw::spectral::Trajectory traj = pfw::spectral::simulate(
      grid, pde, ic, cfg.reference.dt, cfg.t_end, cfg.reference.save_every);
  std::string traj_path = (fs::path(cfg.output_dir) / "reference.traj").string();
  pfw::spectral::write_trajectory(traj_path, traj);
  double e0 = pfw::spectral::free_energy(grid, pde, traj.snapshots.front());
  double e1 = pfw::spectral::free_energy(grid, pde, traj.snapshots.back());
  std::printf("  %zu snapshots -> %s\n  free energy %.6f -> %.6f\n", traj.times.size(),
              traj_path.c_str(), e0, e1);

  if (cfg.sensors.enabled) {
    pfw::spectral::MeasurementSet set = pfw::spectral::make_measurements(
        traj, cfg.sensor_spec(), cfg.sensors.noise_level, cfg.training.seed);
    std::string meas_path = (fs::path(cfg.output_dir) / "measurements.tsv").string();
    pfw::spectral::write_measurements(meas_path, set);
    std::printf("  %zu measurements (noise %g, sigma_ref %.6g) -> %s\n", set.points.size(),
                set.noise_level, set.sigma_ref, meas_path.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_forward(const CommonArgs& args, std::optional<int> stages, std::string reference_path,
                bool no_eval) {
  RunConfig cfg = load_with_overrides(args);
  if (stages) cfg.training.sub_intervals = *stages;
  cfg.training.validate();
  if (reference_path.empty())
    reference_path = (fs::path(cfg.output_dir) / "reference.traj").string();
  if (!no_eval && !fs::exists(reference_path))
    throw pfw::ConfigError("reference trajectory not found at " + reference_path +
                           " (run `generate` first, pass --reference, or use --no-eval)");
  ensure_dir(cfg.output_dir);

  pfw::train::ForwardProblem problem;
  problem.pde = cfg.pde();
  problem.domain = cfg.domain();
  problem.t_end = cfg.t_end;
  problem.fourier = cfg.fourier();
  problem.hidden = cfg.network.hidden;
  problem.skips = cfg.network.skips;
  problem.initial_condition = pfw::config::make_initial_condition(cfg.initial, cfg.dimension);

  std::printf("forward: %s  %d stages x %d iterations, seed %llu\n", cfg.name.c_str(),
              cfg.training.sub_intervals, cfg.training.iterations,
              static_cast<unsigned long long>(cfg.training.seed));
  pfw::train::ForwardResult result =
      pfw::train::train_forward(problem, cfg.training, make_progress(cfg.training.iterations));

  std::string manifest = pfw::train::save_model(
      cfg.output_dir, "model", result.model,
      result.mu_stages.empty() ? nullptr : &result.mu_stages);
  for (const auto& stage : result.stages) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "history_stage_%03d.tsv", stage.stage + 1);
    pfw::train::write_history((fs::path(cfg.output_dir) / buf).string(), stage);
  }
  std::printf("  model -> %s\n", manifest.c_str());

  if (!no_eval) {
    pfw::spectral::Trajectory ref = pfw::spectral::read_trajectory(reference_path);
    pfw::train::Metrics metrics = pfw::train::evaluate_field(result.model, ref);
    nlohmann::json mj = {{"rel_l2", metrics.rel_l2}, {"max_abs", metrics.max_abs}};
    std::string metrics_path = (fs::path(cfg.output_dir) / "metrics.json").string();
    write_json_file(metrics_path, mj);
    std::printf("  rel_l2 = %.6e\n  max_abs = %.6e\n  metrics -> %s\n", metrics.rel_l2,
                metrics.max_abs, metrics_path.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_inverse(const CommonArgs& args, std::string measurements_path, int export_points) {
  RunConfig cfg = load_with_overrides(args);
  if (measurements_path.empty())
    measurements_path = (fs::path(cfg.output_dir) / "measurements.tsv").string();
  pfw::spectral::MeasurementSet set =
      pfw::spectral::read_measurements(measurements_path, cfg.dimension);
  ensure_dir(cfg.output_dir);

  pfw::train::InverseProblem problem;
  problem.pde = cfg.pde();
  problem.domain = cfg.domain();
  problem.t_end = cfg.t_end;
  problem.fourier = cfg.fourier();
  problem.hidden = cfg.network.hidden;
  problem.hidden_potential = cfg.network.hidden_potential;
  problem.skips = cfg.network.skips;
  problem.initial_condition = pfw::config::make_initial_condition(cfg.initial, cfg.dimension);

  std::printf("inverse: %s  %d iterations over %zu measurements, seed %llu\n", cfg.name.c_str(),
              cfg.training.iterations, set.points.size(),
              static_cast<unsigned long long>(cfg.training.seed));
  pfw::train::InverseResult result = pfw::train::train_inverse(
      problem, set, cfg.training, make_progress(cfg.training.iterations));

  pfw::save_checkpoint((fs::path(cfg.output_dir) / "phi.net").string(), result.phi);
  if (result.mu)
    pfw::save_checkpoint((fs::path(cfg.output_dir) / "mu.net").string(), *result.mu);
  pfw::save_checkpoint((fs::path(cfg.output_dir) / "potential.net").string(), result.potential);
  pfw::train::write_history((fs::path(cfg.output_dir) / "history.tsv").string(), result.history);

  auto [phi_lo, phi_hi] = pfw::train::observed_range(set);
  bool mean_shift = cfg.equation == pfw::Equation::kCahnHilliard;
  pfw::train::PotentialComparison cmp =
      pfw::train::compare_potential(result.potential, phi_lo, phi_hi, export_points, mean_shift);

  std::string table_path = (fs::path(cfg.output_dir) / "potential.tsv").string();
  std::vector<std::string> comments = {
      "pfw-potential",
      "phi_min=" + pfw::io::format_double(phi_lo),
      "phi_max=" + pfw::io::format_double(phi_hi),
      "mean_shift=" + pfw::io::format_double(cmp.shift),
      "f_rel_l2=" + pfw::io::format_double(cmp.rel_l2),
      "columns: phi\tf_identified\tf_true",
  };
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < cmp.phi.size(); ++i)
    rows.push_back({cmp.phi[i], cmp.f_pred[i], cmp.f_true[i]});
  pfw::io::write_table(table_path, comments, rows);

  nlohmann::json mj = {{"f_rel_l2", cmp.rel_l2}, {"mean_shift", cmp.shift}};
  std::string metrics_path = (fs::path(cfg.output_dir) / "metrics.json").string();
  write_json_file(metrics_path, mj);
  std::printf("  f_rel_l2 = %.6e on phi in [%.4f, %.4f]\n  potential table -> %s\n", cmp.rel_l2,
              phi_lo, phi_hi, table_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_eval(const std::string& model_path, const std::string& reference_path,
             const std::string& out_path) {
  pfw::train::PiecewiseModel model = pfw::train::load_model(model_path);
  pfw::spectral::Trajectory ref = pfw::spectral::read_trajectory(reference_path);
  pfw::train::Metrics metrics = pfw::train::evaluate_field(model, ref);
  std::printf("rel_l2 = %.17g\nmax_abs = %.17g\n", metrics.rel_l2, metrics.max_abs);
  if (!out_path.empty())
    write_json_file(out_path,
                    nlohmann::json{{"rel_l2", metrics.rel_l2}, {"max_abs", metrics.max_abs}});
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_export_plot(const CommonArgs& args, const std::string& trajectory_path,
                    const std::string& model_path, std::vector<double> times) {
  if (trajectory_path.empty() == model_path.empty())
    throw pfw::ConfigError("export-plot needs exactly one of --trajectory or --model");
  if (times.empty()) throw pfw::ConfigError("export-plot needs --times");

  std::optional<pfw::spectral::Trajectory> traj;
  std::optional<pfw::train::PiecewiseModel> model;
  pfw::spectral::Grid grid;
  if (!trajectory_path.empty()) {
    traj = pfw::spectral::read_trajectory(trajectory_path);
    grid = traj->grid;
  } else {
    model = pfw::train::load_model(model_path);
    if (args.config_path.empty())
      throw pfw::ConfigError("export-plot --model needs --config for the sampling grid");
    RunConfig cfg = pfw::config::load_run_config(args.config_path);
    if (cfg.dimension != model->dim())
      throw pfw::ConfigError("model dimension does not match the config");
    grid = cfg.grid();
  }

  std::string out_dir = args.out_dir.empty() ? "." : args.out_dir;
  ensure_dir(out_dir);
  std::vector<pfw::Point> pts;
  std::vector<double> values;
  for (std::size_t idx = 0; idx < times.size(); ++idx) {
    double t = times[idx];
    if (traj) {
      values = traj->snapshots[pfw::spectral::snapshot_index(*traj, t)];
    } else {
      if (t < model->boundaries.front() - 1e-12 || t > model->boundaries.back() + 1e-12)
        throw pfw::ConfigError("requested time " + std::to_string(t) +
                               " lies outside the trained span");
      pts.resize(static_cast<std::size_t>(grid.total()));
      values.resize(pts.size());
      for (int i = 0; i < grid.total(); ++i)
        pts[static_cast<std::size_t>(i)] = pfw::Point{t, grid.node(i)};
      model->eval_batch(pts, values);
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "field_%03zu.tsv", idx);
    std::vector<std::string> comments = {
        "pfw-plot",
        "t=" + pfw::io::format_double(t),
        grid.dim == 2 ? "columns: x\ty\tvalue" : "columns: x\tvalue",
    };
    std::vector<std::vector<double>> rows;
    rows.reserve(values.size());
    for (int i = 0; i < grid.total(); ++i) {
      auto node = grid.node(i);
      if (grid.dim == 2)
        rows.push_back({node[0], node[1], values[static_cast<std::size_t>(i)]});
      else
        rows.push_back({node[0], values[static_cast<std::size_t>(i)]});
    }
    std::string path = (fs::path(out_dir) / buf).string();
    pfw::io::write_table(path, comments, rows);
    std::printf("t=%g (%d rows) -> %s\n", t, grid.total(), path.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep: seed variation and sensor ablation as independent child processes
// ---------------------------------------------------------------------------

std::string self_exe() {
  char buf[4096];
  ssize_t n = readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) throw pfw::IoError("cannot determine the executable path");
  buf[n] = '\0';
  return std::string(buf);
}

void run_child(const std::vector<std::string>& argv_str) {
  std::vector<char*> argv;
  for (const auto& s : argv_str) argv.push_back(const_cast<char*>(s.c_str()));
  argv.push_back(nullptr);
  pid_t pid = fork();
  if (pid < 0) throw pfw::IoError("fork failed");
  if (pid == 0) {
    execv(argv[0], argv.data());
    std::perror("execv");
    _exit(127);
  }
  int status = 0;
  if (waitpid(pid, &status, 0) < 0) throw pfw::IoError("waitpid failed");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw pfw::NumericsError("child run failed: " + argv_str.back() +
                             " (exit status " + std::to_string(WEXITSTATUS(status)) + ")");
}

int cmd_sweep(const CommonArgs& args, int n_seeds, const std::string& task,
              std::vector<int> ablation_nt) {
  RunConfig cfg = load_with_overrides(args);
  std::string out_dir = cfg.output_dir + "/sweep";
  if (!args.out_dir.empty()) out_dir = args.out_dir;
  ensure_dir(out_dir);
  const std::string exe = self_exe();
  const std::string iters_str = std::to_string(cfg.training.iterations);

  if (!ablation_nt.empty()) {
    // Sensor ablation: vary the temporal sensor count at fixed spatial layout.
    if (!cfg.sensors.enabled)
      throw pfw::ConfigError("sensor ablation needs a config with a sensors section");
    std::vector<std::vector<double>> rows;
    bool non_increasing = true;
    double prev = 0.0;
    for (std::size_t k = 0; k < ablation_nt.size(); ++k) {
      int nt = ablation_nt[k];
      if (nt < 1) throw pfw::ConfigError("ablation sensor counts must be >= 1");
      RunConfig derived = cfg;
      derived.sensors.nt = nt;
      derived.sensors.times.clear();
      derived.name = cfg.name + "-nt" + std::to_string(nt);
      std::string run_dir = out_dir + "/nt_" + std::to_string(nt);
      derived.output_dir = run_dir;
      ensure_dir(run_dir);
      std::string derived_path = run_dir + "/config.json";
      pfw::config::save_run_config(derived_path, derived);
      std::printf("sweep: sensor ablation nt=%d\n", nt);
      run_child({exe, "generate", "--config", derived_path});
      run_child({exe, "inverse", "--config", derived_path, "--iters", iters_str});
      double err = read_json_file(run_dir + "/metrics.json").at("f_rel_l2").get<double>();
      rows.push_back({static_cast<double>(nt), err});
      if (k > 0 && err > prev) non_increasing = false;
      prev = err;
    }
    pfw::io::write_table(out_dir + "/summary.tsv",
                         {"pfw-sweep sensor-ablation", "columns: nt\tf_rel_l2"}, rows);
    std::printf("sweep summary (nt, f_rel_l2):\n");
    for (const auto& r : rows) std::printf("  %3d  %.6e\n", static_cast<int>(r[0]), r[1]);
    std::printf("f-error non-increasing in nt: %s\n", non_increasing ? "yes" : "no");
    return 0;
  }

  // Seed variation of the forward or inverse task over shared reference data.
  if (task != "forward" && task != "inverse")
    throw pfw::ConfigError("sweep --task must be 'forward' or 'inverse'");
  std::string data_dir = out_dir + "/data";
  RunConfig data_cfg = cfg;
  data_cfg.output_dir = data_dir;
  ensure_dir(data_dir);
  std::string data_config_path = data_dir + "/config.json";
  pfw::config::save_run_config(data_config_path, data_cfg);
  run_child({exe, "generate", "--config", data_config_path});

  std::vector<std::vector<double>> rows;
  double acc = 0.0;
  for (int k = 0; k < n_seeds; ++k) {
    std::uint64_t seed = cfg.training.seed + static_cast<std::uint64_t>(k);
    std::string run_dir = out_dir + "/seed_" + std::to_string(seed);
    std::printf("sweep: %s seed %llu\n", task.c_str(), static_cast<unsigned long long>(seed));
    if (task == "forward") {
      run_child({exe, "forward", "--config", data_config_path, "--seed", std::to_string(seed),
                 "--iters", iters_str, "--out", run_dir, "--reference",
                 data_dir + "/reference.traj"});
      nlohmann::json m = read_json_file(run_dir + "/metrics.json");
      rows.push_back({static_cast<double>(seed), m.at("rel_l2").get<double>(),
                      m.at("max_abs").get<double>()});
      acc += m.at("rel_l2").get<double>();
    } else {
      run_child({exe, "inverse", "--config", data_config_path, "--seed", std::to_string(seed),
                 "--iters", iters_str, "--out", run_dir, "--measurements",
                 data_dir + "/measurements.tsv"});
      nlohmann::json m = read_json_file(run_dir + "/metrics.json");
      rows.push_back({static_cast<double>(seed), m.at("f_rel_l2").get<double>()});
      acc += m.at("f_rel_l2").get<double>();
    }
  }
  double mean = acc / n_seeds;
  pfw::io::write_table(out_dir + "/summary.tsv",
                       {"pfw-sweep " + task, "mean_rel_l2=" + pfw::io::format_double(mean),
                        task == "forward" ? "columns: seed\trel_l2\tmax_abs"
                                          : "columns: seed\tf_rel_l2"},
                       rows);
  std::printf("sweep mean error over %d seeds: %.6e\n", n_seeds, mean);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-form neural-network solvers for phase-field equations"};
  app.require_subcommand(1);

  CommonArgs common;
  std::optional<int> stages;
  std::string reference_path, measurements_path, model_path, trajectory_path, out_path;
  std::string task = "forward";
  bool no_eval = false;
  int export_points = 201;
  int n_seeds = 5;
  std::vector<double> times;
  std::vector<int> ablation_nt;

  auto add_common = [&](CLI::App* sub, bool config_required = true) {
    auto* opt = sub->add_option("--config", common.config_path, "run configuration (JSON)");
    if (config_required) opt->required();
    sub->add_option("--out", common.out_dir, "output directory (overrides the config)");
    sub->add_option("--seed", common.seed, "seed override");
    sub->add_option("--iters", common.iters, "iteration-count override");
  };

  CLI::App* generate = app.add_subcommand(
      "generate", "Integrate the reference trajectory and synthesize measurements");
  add_common(generate);

  CLI::App* forward =
      app.add_subcommand("forward", "Train the weak-form forward solver by time marching");
  add_common(forward);
  forward->add_option("--stages", stages, "sub-interval count override");
  forward->add_option("--reference", reference_path, "reference trajectory for evaluation");
  forward->add_flag("--no-eval", no_eval, "skip evaluation against a reference");

  CLI::App* inverse =
      app.add_subcommand("inverse", "Identify the nonlinear potential from measurements");
  add_common(inverse);
  inverse->add_option("--measurements", measurements_path, "measurement table");
  inverse->add_option("--export-points", export_points, "potential export grid size");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Compare a trained model against a reference");
  eval_cmd->add_option("--model", model_path, "model manifest")->required();
  eval_cmd->add_option("--reference", reference_path, "reference trajectory")->required();
  eval_cmd->add_option("--out", out_path, "metrics output file");

  CLI::App* export_plot =
      app.add_subcommand("export-plot", "Export field snapshots as delimited text");
  add_common(export_plot, /*config_required=*/false);
  export_plot->add_option("--trajectory", trajectory_path, "trajectory to export");
  export_plot->add_option("--model", model_path, "model manifest to sample");
  export_plot->add_option("--times", times, "times to export")->delimiter(',');

  CLI::App* sweep = app.add_subcommand("sweep", "Run seed sweeps or sensor ablations");
  add_common(sweep);
  sweep->add_option("--seeds", n_seeds, "number of seeds");
  sweep->add_option("--task", task, "forward | inverse");
  sweep->add_option("--ablation-nt", ablation_nt, "temporal sensor counts to compare")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(common);
    if (forward->parsed()) return cmd_forward(common, stages, reference_path, no_eval);
    if (inverse->parsed()) return cmd_inverse(common, measurements_path, export_points);
    if (eval_cmd->parsed()) return cmd_eval(model_path, reference_path, out_path);
    if (export_plot->parsed()) return cmd_export_plot(common, trajectory_path, model_path, times);
    if (sweep->parsed()) return cmd_sweep(common, n_seeds, task, ablation_nt);
    return 2;
  } catch (const pfw::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const pfw::CapabilityError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const pfw::NumericsError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const pfw::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
