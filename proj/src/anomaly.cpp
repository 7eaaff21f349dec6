#include "dualflow/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dualflow/errors.hpp"

namespace dualflow {

ScoreStrategy score_strategy_from_string(const std::string& name) {
  if (name == "reverse_model") return ScoreStrategy::kReverseModel;
  if (name == "forward_model") return ScoreStrategy::kForwardModel;
  throw ConfigError("score: unknown strategy '" + name + "'");
}

std::string to_string(ScoreStrategy s) {
  return s == ScoreStrategy::kReverseModel ? "reverse_model" : "forward_model";
}

namespace {

constexpr std::size_t kScoreChunk = 2048;

// Scores rows [lo, hi); on solver failure splits until single rows are
// isolated and scored +inf.
void score_span(const FlowField& field, const GaussianPrior& prior, const Tensor& windows,
                std::size_t lo, std::size_t hi, const SolverConfig& cfg,
                const TraceEstimator& est, std::uint64_t chunk_seed, ScoreResult& out) {
  Tensor chunk = slice_rows(windows, lo, hi);
  TraceEstimator chunk_est = est;
  chunk_est.seed = chunk_seed;
  try {
    AugmentedState end = solve_with_logdet(field, chunk, cfg, chunk_est);
    Tensor logp0 = prior.log_pdf(end.x);
    for (std::size_t i = 0; i < hi - lo; ++i)
      out.scores[lo + i] = end.delta_logp[i] - logp0[i];  // -log p1
    out.nfe += end.nfe;
  } catch (const NumericalError&) {
    if (hi - lo == 1) {
      out.scores[lo] = std::numeric_limits<double>::infinity();
      ++out.failed_windows;
      return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    score_span(field, prior, windows, lo, mid, cfg, est, chunk_seed * 2 + 1, out);
    score_span(field, prior, windows, mid, hi, cfg, est, chunk_seed * 2 + 2, out);
  }
}

}  // namespace

ScoreResult score_windows(const FlowField* field_theta, const FlowField* field_lambda,
                          const GaussianPrior& prior, const Tensor& windows,
                          const SolverConfig& cfg, const TraceEstimator& est,
                          ScoreStrategy strategy) {
  const FlowField* field =
      strategy == ScoreStrategy::kReverseModel ? field_lambda : field_theta;
  if (field == nullptr)
    throw ConfigError("score: strategy '" + to_string(strategy) +
                      "' needs the corresponding trained field");
  if (windows.ndim() != 2) throw ShapeError("score: windows must be rank 2");

  const std::size_t n = windows.shape()[0];
  ScoreResult out;
  out.scores.assign(n, 0.0);
  const SolverConfig reverse_cfg = cfg.with_direction(1.0, 0.0);
  std::size_t chunk_index = 0;
  for (std::size_t lo = 0; lo < n; lo += kScoreChunk, ++chunk_index) {
    const std::size_t hi = std::min(n, lo + kScoreChunk);
    score_span(*field, prior, windows, lo, hi, reverse_cfg, est,
               est.seed + 0x9e37 * chunk_index, out);
  }
  return out;
}

SweepResult sweep_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DataError("sweep: " + std::to_string(scores.size()) + " scores for " +
                    std::to_string(labels.size()) + " labels");
  const long positives = std::count(labels.begin(), labels.end(), 1);
  const long negatives = static_cast<long>(labels.size()) - positives;
  if (positives == 0 || negatives == 0)
    throw DataError("sweep: needs at least one positive and one negative label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  SweepResult best;
  best.f1 = -1.0;
  long tp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    // Consume the whole tie group: a threshold admits every equal score.
    const double threshold = scores[order[i]];
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == threshold) {
      tp += labels[order[j]];
      ++j;
    }
    const auto predicted = static_cast<long>(j);
    const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    if (f1 > best.f1 + 1e-12 || (std::abs(f1 - best.f1) <= 1e-12 && precision > best.precision)) {
      best = {threshold, precision, recall, f1};
    }
    i = j;
  }
  return best;
}

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DataError("auc: " + std::to_string(scores.size()) + " scores for " +
                    std::to_string(labels.size()) + " labels");
  const long positives = std::count(labels.begin(), labels.end(), 1);
  const long negatives = static_cast<long>(labels.size()) - positives;
  if (positives == 0 || negatives == 0)
    throw DataError("auc: needs at least one positive and one negative label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Rank sum of positives with average ranks over ties (Mann-Whitney U).
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    long ties_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      ties_pos += labels[order[j]];
      ++j;
    }
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    rank_sum_pos += avg_rank * static_cast<double>(ties_pos);
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(positives) *
                                      (static_cast<double>(positives) + 1.0);
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

std::vector<int> point_adjust(const std::vector<int>& predictions,
                              const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw DataError("point_adjust: " + std::to_string(predictions.size()) +
                    " predictions for " + std::to_string(labels.size()) + " labels");
  std::vector<int> adjusted = predictions;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] != 1) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool hit = false;
    while (j < labels.size() && labels[j] == 1) {
      hit = hit || predictions[j] == 1;
      ++j;
    }
    if (hit)
      for (std::size_t k = i; k < j; ++k) adjusted[k] = 1;
    i = j;
  }
  return adjusted;
}

}  // namespace dualflow
