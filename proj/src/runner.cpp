#include "dualflow/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>

#include "dualflow/errors.hpp"

namespace dualflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RawSeries series_for_config(const RunConfig& cfg) {
  if (cfg.data.kind == "telemetry") {
    Rng rng(cfg.seed);
    return gen_telemetry(cfg.data.timesteps, cfg.data.channels, cfg.data.anomaly_rate,
                         rng.fork(11).next_u64(), cfg.data.clean_frac);
  }
  return load_series(cfg.data.data_path, cfg.data.labels_path);
}

void assign_params(const Checkpoint& ckpt, const std::string& prefix,
                   const std::vector<std::pair<std::string, Var>>& params) {
  for (const auto& [name, var] : params) {
    const std::string full = prefix + "." + name;
    const Tensor& stored = ckpt.tensor(full);
    if (!stored.same_shape(var->value))
      throw DataError("checkpoint: tensor '" + full + "' has shape " + stored.shape_str() +
                      " but the configured model expects " + var->value.shape_str());
    var->value = stored;
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

DatasetBundle build_dataset(const RunConfig& cfg) {
  DatasetBundle out;
  if (cfg.data.kind == "two_moons") {
    Rng rng(cfg.seed);
    out.train_rows = gen_two_moons(cfg.data.n, cfg.data.noise_std, rng.fork(10).next_u64());
    return out;
  }
  RawSeries series = series_for_config(cfg);
  WindowedDataset windows = make_windows(series, cfg.data.window);
  const std::size_t t_len = series.timesteps();
  auto split = static_cast<std::size_t>(cfg.data.train_frac * static_cast<double>(t_len));
  if (split == 0 || split >= t_len)
    throw DataError("dataset: train_frac " + std::to_string(cfg.data.train_frac) +
                    " leaves an empty split for T=" + std::to_string(t_len));
  Tensor train = slice_rows(windows.windows, 0, split);
  Tensor eval_rows = slice_rows(windows.windows, split, t_len);
  if (cfg.data.normalize) {
    Normalizer norm = Normalizer::fit(train);
    train = norm.transform(train);
    eval_rows = norm.transform(eval_rows);
    out.normalizer = std::move(norm);
  }
  out.train_rows = std::move(train);
  out.eval_rows = std::move(eval_rows);
  if (windows.has_labels) {
    out.eval_labels.assign(windows.labels.begin() + static_cast<std::ptrdiff_t>(split),
                           windows.labels.end());
    out.has_labels = true;
  }
  return out;
}

Checkpoint make_checkpoint(const RunConfig& cfg, const TrainState& state,
                           const std::optional<Normalizer>& normalizer) {
  Checkpoint ckpt;
  ckpt.step = state.step;
  ckpt.config = cfg;
  ckpt.rng_state = state.rng_state;
  ckpt.normalizer = normalizer;
  for (const auto& [name, var] : state.theta->named_params())
    ckpt.tensors.emplace_back("theta." + name, var->value);
  if (state.lambda) {
    for (const auto& [name, var] : state.lambda->named_params())
      ckpt.tensors.emplace_back("lambda." + name, var->value);
  }
  for (const auto& [name, var] : state.prior->named_params())
    ckpt.tensors.emplace_back("prior." + name, var->value);
  return ckpt;
}

TrainRunResult run_train(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  TrainRunResult result;
  result.out_dir = out_dir;
  result.data = build_dataset(cfg);
  result.state = train(cfg.to_train_options(), result.data.train_rows);

  fs::create_directories(out_dir);
  save_run_config(cfg, (fs::path(out_dir) / "config.json").string());

  {
    std::ofstream loss_csv(fs::path(out_dir) / "loss.csv");
    if (!loss_csv) throw DataError("train: cannot write loss.csv in " + out_dir);
    loss_csv << "step,phase,loss,dfm_metric\n";
    for (const TrainRecord& rec : result.state.history) {
      loss_csv << rec.step << "," << rec.phase << "," << format_double(rec.loss) << ",";
      if (std::isnan(rec.dfm_metric))
        loss_csv << "";
      else
        loss_csv << format_double(rec.dfm_metric);
      loss_csv << "\n";
    }
  }

  result.checkpoint_dir = (fs::path(out_dir) / "checkpoint").string();
  save_checkpoint(make_checkpoint(cfg, result.state, result.data.normalizer),
                  result.checkpoint_dir);

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json summary;
  summary["objective"] = cfg.objective;
  summary["steps"] = result.state.step;
  summary["wall_seconds"] = result.wall_seconds;
  if (!result.state.history.empty()) {
    summary["initial_loss"] = result.state.history.front().loss;
    summary["final_loss"] = result.state.history.back().loss;
    if (cfg.objective == "dfm") {
      summary["initial_dfm_loss"] = result.state.history.front().dfm_metric;
      summary["final_dfm_loss"] = result.state.history.back().dfm_metric;
    }
  }
  summary["checkpoint"] = "checkpoint";
  std::ofstream sum_out(fs::path(out_dir) / "summary.json");
  sum_out << summary.dump(2) << "\n";
  return result;
}

ScoreStrategy LoadedRun::strategy_or_default(const std::string& requested) const {
  std::string name = requested.empty() ? config.score.strategy : requested;
  if (name == "auto") name = lambda ? "reverse_model" : "forward_model";
  ScoreStrategy strategy = score_strategy_from_string(name);
  if (strategy == ScoreStrategy::kReverseModel && !lambda)
    throw ConfigError("score: strategy 'reverse_model' needs a reverse field; this "
                      "checkpoint only holds theta");
  return strategy;
}

LoadedRun load_run(const std::string& checkpoint_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  LoadedRun run;
  run.config = ckpt.config;
  run.step = ckpt.step;
  run.normalizer = ckpt.normalizer;

  const std::size_t dim = ckpt.tensor("prior.mu").size();
  Rng dummy(0);
  run.theta = std::make_shared<MlpVectorField>(dim, ckpt.config.model.hidden,
                                               ckpt.config.model.time_embed, dummy);
  assign_params(ckpt, "theta", run.theta->named_params());
  if (ckpt.has("lambda.layer0.weight")) {
    run.lambda = std::make_shared<MlpVectorField>(dim, ckpt.config.model.hidden,
                                                  ckpt.config.model.time_embed, dummy);
    assign_params(ckpt, "lambda", run.lambda->named_params());
  }
  run.prior = std::make_shared<GaussianPrior>(dim);
  assign_params(ckpt, "prior", run.prior->named_params());
  return run;
}

ScoreRunResult run_score(const std::string& checkpoint_dir, const ScoreOverrides& overrides,
                         const std::string& out_dir) {
  LoadedRun run = load_run(checkpoint_dir);
  const RunConfig& cfg = run.config;

  Tensor windows;
  std::vector<int> labels;
  bool has_labels = false;
  if (!overrides.data_path.empty()) {
    RawSeries series = load_series(overrides.data_path, overrides.labels_path);
    WindowedDataset wd = make_windows(series, cfg.data.window);
    windows = run.normalizer ? run.normalizer->transform(wd.windows) : wd.windows;
    labels = wd.labels;
    has_labels = wd.has_labels;
  } else if (cfg.data.kind == "two_moons") {
    DatasetBundle bundle = build_dataset(cfg);
    windows = bundle.train_rows;
  } else {
    DatasetBundle bundle = build_dataset(cfg);
    windows = bundle.eval_rows;
    labels = bundle.eval_labels;
    has_labels = bundle.has_labels;
  }

  const SolverSection solver_section =
      overrides.solver ? *overrides.solver : cfg.eval_solver;
  const TraceSection trace_section = overrides.trace ? *overrides.trace : cfg.trace;
  SolverConfig solver = solver_section.to_solver();
  TraceEstimator est = trace_section.to_estimator(cfg.seed ^ 0xec0deULL);

  ScoreRunResult out;
  out.solver_tag = solver.tag();
  ScoreStrategy strategy = run.strategy_or_default(overrides.strategy);
  out.strategy = to_string(strategy);
  out.point_adjust = overrides.point_adjust.value_or(cfg.score.point_adjust);

  ScoreResult scored = score_windows(run.theta_field(), run.lambda_field(), *run.prior,
                                     windows, solver, est, strategy);
  out.scores = std::move(scored.scores);
  out.nfe = scored.nfe;
  out.failed_windows = scored.failed_windows;
  out.labels = labels;
  out.has_labels = has_labels;

  json metrics;
  metrics["n_windows"] = out.scores.size();
  metrics["failed_windows"] = out.failed_windows;
  metrics["solver_tag"] = out.solver_tag;
  metrics["solver"] = {{"method", solver_section.method},
                       {"steps", solver_section.steps},
                       {"atol", solver_section.atol},
                       {"rtol", solver_section.rtol}};
  metrics["trace"] = {{"kind", trace_section.kind},
                      {"probes", trace_section.probes},
                      {"dist", trace_section.dist}};
  metrics["nfe_total"] = out.nfe;
  metrics["nfe_per_window"] =
      out.scores.empty() ? 0.0
                         : static_cast<double>(out.nfe) / static_cast<double>(out.scores.size());
  metrics["strategy"] = out.strategy;
  metrics["point_adjust"] = out.point_adjust;
  metrics["labels_present"] = out.has_labels;

  if (out.has_labels) {
    if (!out.point_adjust) {
      out.sweep = sweep_threshold(out.scores, out.labels);
    } else {
      // Sweep with segment adjustment applied at every candidate threshold.
      std::vector<double> distinct = out.scores;
      std::sort(distinct.begin(), distinct.end(), std::greater<>());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      out.sweep.f1 = -1.0;
      const long positives =
          std::count(out.labels.begin(), out.labels.end(), 1);
      for (double threshold : distinct) {
        std::vector<int> preds(out.scores.size(), 0);
        for (std::size_t i = 0; i < out.scores.size(); ++i)
          preds[i] = out.scores[i] >= threshold ? 1 : 0;
        preds = point_adjust(preds, out.labels);
        long tp = 0, fp = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
          if (preds[i] == 1 && out.labels[i] == 1) ++tp;
          if (preds[i] == 1 && out.labels[i] == 0) ++fp;
        }
        const double precision =
            tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double f1 =
            precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        if (f1 > out.sweep.f1 + 1e-12 ||
            (std::abs(f1 - out.sweep.f1) <= 1e-12 && precision > out.sweep.precision))
          out.sweep = {threshold, precision, recall, f1};
      }
    }
    out.auc = auc_score(out.scores, out.labels);
    metrics["threshold"] = out.sweep.threshold;
    metrics["precision"] = out.sweep.precision;
    metrics["recall"] = out.sweep.recall;
    metrics["f1"] = out.sweep.f1;
    metrics["auc"] = out.auc;
  } else {
    metrics["note"] = "labels absent: scores emitted, metrics omitted";
  }
  metrics["scores_file"] = "scores.csv";
  out.metrics = metrics;

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream scores_csv(fs::path(out_dir) / "scores.csv");
    scores_csv << (out.has_labels ? "score,label\n" : "score\n");
    for (std::size_t i = 0; i < out.scores.size(); ++i) {
      scores_csv << format_double(out.scores[i]);
      if (out.has_labels) scores_csv << "," << out.labels[i];
      scores_csv << "\n";
    }
    std::ofstream metrics_out(fs::path(out_dir) / "metrics.json");
    metrics_out << metrics.dump(2) << "\n";
  }
  return out;
}

Tensor run_sample(const std::string& checkpoint_dir, std::size_t n, std::uint64_t seed,
                  const std::string& out_csv) {
  LoadedRun run = load_run(checkpoint_dir);
  SolverConfig solver = run.config.eval_solver.to_solver();
  Tensor samples = push_forward_sample(*run.theta, *run.prior, n, solver, seed);
  if (!samples.empty() && run.normalizer) {
    // Back to the original data scale.
    samples = add_rowvec(mul_rowvec(samples, run.normalizer->std), run.normalizer->mean);
  }
  if (!out_csv.empty() && !samples.empty()) {
    std::vector<std::string> header;
    for (std::size_t j = 0; j < samples.shape()[1]; ++j) header.push_back("x" + std::to_string(j));
    write_matrix_csv(samples, header, out_csv);
  }
  return samples;
}

Tensor run_density_points(const std::string& checkpoint_dir, const Tensor& points,
                          const std::string& out_csv) {
  LoadedRun run = load_run(checkpoint_dir);
  SolverConfig solver = run.config.eval_solver.to_solver();
  TraceEstimator est = run.config.trace.to_estimator(run.config.seed ^ 0xde75ULL);
  ScoreStrategy strategy = run.strategy_or_default("");

  Tensor rows = run.normalizer ? run.normalizer->transform(points) : points;
  ScoreResult scored = score_windows(run.theta_field(), run.lambda_field(), *run.prior, rows,
                                     solver, est, strategy);
  // Normalization is an affine change of variables with constant volume.
  double log_det = 0.0;
  if (run.normalizer)
    for (double s : run.normalizer->std.data()) log_det += std::log(s);

  const std::size_t n = points.shape()[0];
  Tensor logp({n});
  for (std::size_t i = 0; i < n; ++i) logp[i] = -scored.scores[i] - log_det;

  if (!out_csv.empty()) {
    const std::size_t d = points.shape()[1];
    Tensor out({n, d + 2});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) out.at(i, j) = points.at(i, j);
      out.at(i, d) = logp[i];
      out.at(i, d + 1) = std::exp(logp[i]);
    }
    std::vector<std::string> header;
    for (std::size_t j = 0; j < d; ++j) header.push_back("x" + std::to_string(j));
    header.push_back("log_density");
    header.push_back("density");
    write_matrix_csv(out, header, out_csv);
  }
  return logp;
}

Tensor run_density_grid(const std::string& checkpoint_dir, const GridSpec& grid,
                        const std::string& out_csv) {
  if (grid.steps < 2) throw ConfigError("density: grid steps must be >= 2");
  LoadedRun run = load_run(checkpoint_dir);
  if (run.prior->dim() != 2)
    throw ConfigError("density: grid emission needs a 2-D model, got D=" +
                      std::to_string(run.prior->dim()));
  const std::size_t n = grid.steps * grid.steps;
  const double cell = (grid.hi - grid.lo) / static_cast<double>(grid.steps);
  Tensor points({n, 2});
  for (std::size_t i = 0; i < grid.steps; ++i) {
    for (std::size_t j = 0; j < grid.steps; ++j) {
      // Cell centers, so a Riemann sum of density*cell^2 approximates mass.
      points.at(i * grid.steps + j, 0) = grid.lo + (static_cast<double>(j) + 0.5) * cell;
      points.at(i * grid.steps + j, 1) = grid.lo + (static_cast<double>(i) + 0.5) * cell;
    }
  }
  Tensor logp = run_density_points(checkpoint_dir, points, "");
  Tensor out({n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    out.at(i, 0) = points.at(i, 0);
    out.at(i, 1) = points.at(i, 1);
    out.at(i, 2) = logp[i];
    out.at(i, 3) = std::exp(logp[i]);
  }
  if (!out_csv.empty())
    write_matrix_csv(out, {"x0", "x1", "log_density", "density"}, out_csv);
  return out;
}

void write_matrix_csv(const Tensor& rows, const std::vector<std::string>& header,
                      const std::string& path) {
  if (rows.ndim() != 2 || header.size() != rows.shape()[1])
    throw ShapeError("csv: header size " + std::to_string(header.size()) +
                     " does not match columns of " + rows.shape_str());
  std::ofstream out(path);
  if (!out) throw DataError("csv: cannot write " + path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (std::size_t i = 0; i < rows.shape()[0]; ++i) {
    for (std::size_t j = 0; j < rows.shape()[1]; ++j)
      out << (j ? "," : "") << format_double(rows.at(i, j));
    out << "\n";
  }
}

std::string default_out_root() {
  const char* env = std::getenv("DUALFLOW_OUT_ROOT");
  return env && *env ? env : "runs";
}

}  // namespace dualflow
