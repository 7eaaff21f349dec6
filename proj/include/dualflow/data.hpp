#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualflow/tensor.hpp"

namespace dualflow {

// A multivariate series: values is {T, C}; labels, when present, flag
// anomalous timesteps and have length T.
struct RawSeries {
  Tensor values;
  std::vector<int> labels;
  bool has_labels = false;
  std::string entity = "synthetic";

  std::size_t timesteps() const { return values.empty() ? 0 : values.shape()[0]; }
  std::size_t channels() const { return values.empty() ? 0 : values.shape()[1]; }
};

// One window per timestep (front replication-padded), flattened row-major
// over (time, channel). window_labels[i] is the label of timestep i.
struct WindowedDataset {
  Tensor windows;  // {T, w*C}
  std::vector<int> labels;
  bool has_labels = false;
  std::size_t window = 0;
};

WindowedDataset make_windows(const RawSeries& series, std::size_t window);

// Two interleaved half-circles with Gaussian noise; moon membership is an
// independent fair coin per point.
Tensor gen_two_moons(std::size_t n, double noise_std, std::uint64_t seed);

// Sum-of-sinusoids plus AR(1) noise per channel. Anomalies are contiguous
// segments (level shifts of +4 sigma or noise bursts of x5) injected only
// after clean_frac*T, so the leading split can train anomaly-free.
RawSeries gen_telemetry(std::size_t timesteps, std::size_t channels, double anomaly_rate,
                        std::uint64_t seed, double clean_frac = 0.6);

// Header (json) + companion little-endian float64 blob; labels are one
// 0/1 per line. Also accepts .csv data files with a channel-name header.
RawSeries load_series(const std::string& data_path, const std::string& labels_path = "");
void save_series(const RawSeries& series, const std::string& data_path,
                 const std::string& labels_path = "");

// Train-statistics z-scoring, std floored at 1e-8.
struct Normalizer {
  Tensor mean;  // {D}
  Tensor std;   // {D}

  static Normalizer fit(const Tensor& train_rows);
  Tensor transform(const Tensor& rows) const;
};

}  // namespace dualflow
