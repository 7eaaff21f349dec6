#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dualflow/anomaly.hpp"
#include "dualflow/checkpoint.hpp"
#include "dualflow/config.hpp"
#include "dualflow/data.hpp"
#include "dualflow/objectives.hpp"

namespace dualflow {

// Training pool plus the held-out evaluation windows for series-like data
// (empty for density datasets). Rows are normalized when the config says so.
struct DatasetBundle {
  Tensor train_rows;
  Tensor eval_rows;
  std::vector<int> eval_labels;
  bool has_labels = false;
  std::optional<Normalizer> normalizer;
};

DatasetBundle build_dataset(const RunConfig& cfg);

struct TrainRunResult {
  TrainState state;
  DatasetBundle data;
  std::string out_dir;
  std::string checkpoint_dir;
  double wall_seconds = 0.0;
};

// Trains per config and writes config.json, loss.csv, checkpoint/ and
// summary.json under out_dir.
TrainRunResult run_train(const RunConfig& cfg, const std::string& out_dir);

// Models, prior and normalization stats reconstructed from a checkpoint.
struct LoadedRun {
  RunConfig config;
  std::shared_ptr<MlpVectorField> theta;
  std::shared_ptr<MlpVectorField> lambda;
  std::shared_ptr<GaussianPrior> prior;
  std::optional<Normalizer> normalizer;
  int step = 0;

  const FlowField* theta_field() const { return theta.get(); }
  const FlowField* lambda_field() const { return lambda.get(); }
  ScoreStrategy strategy_or_default(const std::string& requested) const;
};

LoadedRun load_run(const std::string& checkpoint_dir);

Checkpoint make_checkpoint(const RunConfig& cfg, const TrainState& state,
                           const std::optional<Normalizer>& normalizer);

struct ScoreOverrides {
  std::optional<SolverSection> solver;
  std::optional<TraceSection> trace;
  std::string strategy;  // empty = config default
  std::optional<bool> point_adjust;
  std::string data_path;    // score an explicit series instead of the
  std::string labels_path;  // config's dataset
};

struct ScoreRunResult {
  std::vector<double> scores;
  std::vector<int> labels;
  bool has_labels = false;
  SweepResult sweep;
  double auc = 0.0;
  long nfe = 0;
  int failed_windows = 0;
  std::string solver_tag;  // "F" | "V"
  std::string strategy;
  bool point_adjust = false;
  nlohmann::json metrics;
};

// Scores the held-out windows (or an explicit series), writes scores.csv
// and metrics.json under out_dir when non-empty.
ScoreRunResult run_score(const std::string& checkpoint_dir, const ScoreOverrides& overrides,
                         const std::string& out_dir);

// Push-forward samples from the trained forward field, in the original
// data scale. Writes a CSV when out_csv is non-empty.
Tensor run_sample(const std::string& checkpoint_dir, std::size_t n, std::uint64_t seed,
                  const std::string& out_csv);

// log p1 at the given points (original data scale).
Tensor run_density_points(const std::string& checkpoint_dir, const Tensor& points,
                          const std::string& out_csv);

struct GridSpec {
  double lo = -3.0;
  double hi = 3.0;
  std::size_t steps = 100;
};

// 2-D grid of densities; returns {steps*steps, 4} rows (x, y, log_density,
// density) and writes them as CSV when out_csv is non-empty.
Tensor run_density_grid(const std::string& checkpoint_dir, const GridSpec& grid,
                        const std::string& out_csv);

void write_matrix_csv(const Tensor& rows, const std::vector<std::string>& header,
                      const std::string& path);

// Default output root: $DUALFLOW_OUT_ROOT or "runs".
std::string default_out_root();

}  // namespace dualflow
