#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dualflow/objectives.hpp"

namespace dualflow {

// Everything a run needs, fully serializable. Parsing rejects unknown
// keys; serializing writes every default back out.
struct DataConfig {
  std::string kind = "two_moons";  // two_moons | telemetry | series
  // two_moons
  std::size_t n = 4096;
  double noise_std = 0.08;
  // telemetry
  std::size_t timesteps = 20000;
  std::size_t channels = 5;
  double anomaly_rate = 0.05;
  double clean_frac = 0.6;
  // series files (json header or csv)
  std::string data_path;
  std::string labels_path;
  // windowing / split, used by telemetry and series kinds
  std::size_t window = 8;
  double train_frac = 0.6;
  bool normalize = true;

  bool is_series_like() const { return kind == "telemetry" || kind == "series"; }
};

struct ModelConfig {
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t time_embed = 8;
  std::string init = "zero_final";  // zero_final | random
};

struct PriorConfig {
  std::string init = "standard";  // standard | data_moments | data_offset
  double offset = 4.0;
};

struct PathConfig {
  double sigma_min = 0.01;
  double sigma = 0.1;
};

struct DfmRunConfig {
  std::string variant = "cos_pair";  // cos_pair | cos_product_ones
  double warmup_frac = 0.5;
  std::string warmup_path = "icfm";
};

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch = 256;
  int steps = 2000;
};

struct SolverSection {
  std::string method = "dopri5";  // euler | dopri5
  int steps = 4;
  double atol = 1e-1;
  double rtol = 1e-2;
  int max_steps = 100000;

  SolverConfig to_solver() const;
};

struct TraceSection {
  std::string kind = "hutchinson";  // hutchinson | exact
  int probes = 1;
  std::string dist = "rademacher";  // rademacher | gaussian

  TraceEstimator to_estimator(std::uint64_t seed = 0) const;
};

struct ScoreConfig {
  std::string strategy = "auto";  // auto | reverse_model | forward_model
  bool point_adjust = false;
};

struct RunConfig {
  std::string objective = "icfm";  // mle | fm | icfm | rectified | vptrig | dfm
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  PriorConfig prior;
  PathConfig path;
  DfmRunConfig dfm;
  OptimizerConfig optimizer;
  SolverSection train_solver{.method = "euler", .steps = 64};
  SolverSection eval_solver;
  TraceSection trace;
  ScoreConfig score;

  void validate() const;
  TrainOptions to_train_options() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace dualflow
