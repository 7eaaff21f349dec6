#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "dualflow/errors.hpp"
#include "dualflow/runner.hpp"

namespace fs = std::filesystem;
using namespace dualflow;

namespace {

struct SolverFlags {
  std::string method;
  int steps = 4;
  double atol = 1e-1;
  double rtol = 1e-2;

  void attach(CLI::App* cmd) {
    cmd->add_option("--solver", method, "euler | dopri5");
    cmd->add_option("--steps", steps, "euler step count");
    cmd->add_option("--atol", atol, "dopri5 absolute tolerance");
    cmd->add_option("--rtol", rtol, "dopri5 relative tolerance");
  }

  std::optional<SolverSection> to_section() const {
    if (method.empty()) return std::nullopt;
    SolverSection s;
    s.method = method;
    s.steps = steps;
    s.atol = atol;
    s.rtol = rtol;
    return s;
  }
};

struct TraceFlags {
  std::string kind;
  int probes = 1;
  std::string dist = "rademacher";

  void attach(CLI::App* cmd) {
    cmd->add_option("--trace", kind, "exact | hutchinson");
    cmd->add_option("--probes", probes, "hutchinson probe count");
    cmd->add_option("--probe-dist", dist, "rademacher | gaussian");
  }

  std::optional<TraceSection> to_section() const {
    if (kind.empty()) return std::nullopt;
    TraceSection t;
    t.kind = kind;
    t.probes = probes;
    t.dist = dist;
    return t;
  }
};

int dispatch(CLI::App& app, int argc, char** argv) {
  // train
  auto* train_cmd = app.add_subcommand("train", "Train a flow model from a config file");
  std::string train_config, train_out;
  train_cmd->add_option("config", train_config, "run config (json)")->required();
  train_cmd->add_option("-o,--out", train_out, "output directory");

  // score
  auto* score_cmd = app.add_subcommand("score", "Score windows with a trained model");
  std::string score_ckpt, score_out, score_data, score_labels, score_strategy;
  bool score_adjust = false;
  SolverFlags score_solver;
  TraceFlags score_trace;
  score_cmd->add_option("checkpoint", score_ckpt, "checkpoint directory")->required();
  score_cmd->add_option("-o,--out", score_out, "output directory");
  score_cmd->add_option("--data", score_data, "series file overriding the config dataset");
  score_cmd->add_option("--labels", score_labels, "labels file for --data");
  score_cmd->add_option("--strategy", score_strategy, "reverse_model | forward_model");
  score_cmd->add_flag("--point-adjust", score_adjust, "apply segment point-adjust");
  score_solver.attach(score_cmd);
  score_trace.attach(score_cmd);

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Draw push-forward samples");
  std::string sample_ckpt, sample_out;
  std::size_t sample_n = 1000;
  std::uint64_t sample_seed = 0;
  sample_cmd->add_option("checkpoint", sample_ckpt)->required();
  sample_cmd->add_option("-n,--num", sample_n, "sample count");
  sample_cmd->add_option("--seed", sample_seed);
  sample_cmd->add_option("-o,--out", sample_out, "output csv");

  // density
  auto* density_cmd = app.add_subcommand("density", "Evaluate log-density at points");
  std::string density_ckpt, density_points, density_out;
  std::size_t grid_steps = 0;
  double grid_lo = -3.0, grid_hi = 3.0;
  density_cmd->add_option("checkpoint", density_ckpt)->required();
  density_cmd->add_option("--points", density_points, "csv of points (header row)");
  density_cmd->add_option("--grid", grid_steps, "2-D grid resolution");
  density_cmd->add_option("--lo", grid_lo, "grid lower bound");
  density_cmd->add_option("--hi", grid_hi, "grid upper bound");
  density_cmd->add_option("-o,--out", density_out, "output csv");

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic datasets");
  std::string gen_kind = "telemetry", gen_out;
  std::size_t gen_n = 4096, gen_t = 20000, gen_c = 5;
  double gen_noise = 0.08, gen_rate = 0.05, gen_clean = 0.6;
  std::uint64_t gen_seed = 0;
  gen_cmd->add_option("--kind", gen_kind, "two_moons | telemetry")->required();
  gen_cmd->add_option("-o,--out", gen_out, "output path (.csv or .json)")->required();
  gen_cmd->add_option("--n", gen_n, "two_moons point count");
  gen_cmd->add_option("--noise-std", gen_noise, "two_moons noise");
  gen_cmd->add_option("--timesteps", gen_t);
  gen_cmd->add_option("--channels", gen_c);
  gen_cmd->add_option("--rate", gen_rate, "anomaly rate");
  gen_cmd->add_option("--clean-frac", gen_clean, "anomaly-free leading fraction");
  gen_cmd->add_option("--seed", gen_seed);

  app.require_subcommand(1);
  app.parse(argc, argv);

  if (*train_cmd) {
    RunConfig cfg = load_run_config(train_config);
    if (train_out.empty())
      train_out = (fs::path(default_out_root()) / fs::path(train_config).stem()).string();
    TrainRunResult r = run_train(cfg, train_out);
    std::printf("trained %s for %d steps in %.1fs -> %s\n", cfg.objective.c_str(),
                r.state.step, r.wall_seconds, r.checkpoint_dir.c_str());
    return 0;
  }
  if (*score_cmd) {
    ScoreOverrides overrides;
    overrides.solver = score_solver.to_section();
    overrides.trace = score_trace.to_section();
    overrides.strategy = score_strategy;
    if (score_cmd->count("--point-adjust")) overrides.point_adjust = score_adjust;
    overrides.data_path = score_data;
    overrides.labels_path = score_labels;
    if (score_out.empty()) score_out = (fs::path(default_out_root()) / "score").string();
    ScoreRunResult r = run_score(score_ckpt, overrides, score_out);
    std::printf("scored %zu windows [%s, %s, nfe=%ld]\n", r.scores.size(),
                r.solver_tag.c_str(), r.strategy.c_str(), r.nfe);
    if (r.has_labels)
      std::printf("P=%.4f R=%.4f F1=%.4f AUC=%.4f threshold=%.6g point_adjust=%s\n",
                  r.sweep.precision, r.sweep.recall, r.sweep.f1, r.auc, r.sweep.threshold,
                  r.point_adjust ? "true" : "false");
    else
      std::printf("labels absent: metrics omitted\n");
    std::printf("wrote %s\n", score_out.c_str());
    return 0;
  }
  if (*sample_cmd) {
    if (sample_out.empty())
      sample_out = (fs::path(default_out_root()) / "samples.csv").string();
    Tensor s = run_sample(sample_ckpt, sample_n, sample_seed, sample_out);
    std::printf("wrote %zu samples to %s\n", s.empty() ? 0 : s.shape()[0], sample_out.c_str());
    return 0;
  }
  if (*density_cmd) {
    if (density_out.empty())
      density_out = (fs::path(default_out_root()) / "density.csv").string();
    if (grid_steps > 0) {
      Tensor grid = run_density_grid(density_ckpt, {grid_lo, grid_hi, grid_steps}, density_out);
      const double cell = (grid_hi - grid_lo) / static_cast<double>(grid_steps);
      double mass = 0.0;
      for (std::size_t i = 0; i < grid.shape()[0]; ++i) mass += grid.at(i, 3) * cell * cell;
      std::printf("wrote %zu grid densities to %s (riemann mass %.4f)\n", grid.shape()[0],
                  density_out.c_str(), mass);
    } else {
      if (density_points.empty())
        throw ConfigError("density: pass --points or --grid");
      Tensor pts = load_series(density_points).values;
      Tensor logp = run_density_points(density_ckpt, pts, density_out);
      std::printf("wrote %zu densities to %s\n", logp.size(), density_out.c_str());
    }
    return 0;
  }
  if (*gen_cmd) {
    if (gen_kind == "two_moons") {
      Tensor pts = gen_two_moons(gen_n, gen_noise, gen_seed);
      write_matrix_csv(pts, {"x0", "x1"}, gen_out);
      std::printf("wrote %zu points to %s\n", pts.shape()[0], gen_out.c_str());
    } else if (gen_kind == "telemetry") {
      RawSeries series = gen_telemetry(gen_t, gen_c, gen_rate, gen_seed, gen_clean);
      save_series(series, gen_out);
      std::printf("wrote series T=%zu C=%zu to %s\n", series.timesteps(), series.channels(),
                  gen_out.c_str());
    } else {
      throw ConfigError("gen-data: unknown kind '" + gen_kind + "'");
    }
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous flow models for density estimation and anomaly detection"};
  try {
    return dispatch(app, argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
