#pragma once

#include <string>
#include <vector>

#include "dualflow/odeint.hpp"
#include "dualflow/vfmodel.hpp"

namespace dualflow {

enum class ScoreStrategy { kReverseModel, kForwardModel };

ScoreStrategy score_strategy_from_string(const std::string& name);
std::string to_string(ScoreStrategy s);

struct ScoreResult {
  std::vector<double> scores;  // higher = more anomalous (-log p1)
  long nfe = 0;
  int failed_windows = 0;  // solver failures, scored +inf
};

// score_i = -log p1(window_i). Both strategies integrate t: 1 -> 0 and
// read the prior at the endpoint; they differ in which field they
// traverse. Solver failures are isolated by bisection and scored +inf so
// the row count stays aligned with the labels.
ScoreResult score_windows(const FlowField* field_theta, const FlowField* field_lambda,
                          const GaussianPrior& prior, const Tensor& windows,
                          const SolverConfig& cfg, const TraceEstimator& est,
                          ScoreStrategy strategy);

struct SweepResult {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Best-F1 threshold over every distinct score (predict anomalous when
// score >= threshold); F1 ties break toward higher precision.
SweepResult sweep_threshold(const std::vector<double>& scores, const std::vector<int>& labels);

// ROC area via the rank identity P(s_pos > s_neg) + P(s_pos = s_neg)/2.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

// Marks every point of a ground-truth segment detected when any point in
// the segment was flagged; predictions outside segments are unchanged.
std::vector<int> point_adjust(const std::vector<int>& predictions,
                              const std::vector<int>& labels);

}  // namespace dualflow
