#include "dualflow/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "dualflow/errors.hpp"

namespace dualflow {

namespace fs = std::filesystem;
using nlohmann::json;

WindowedDataset make_windows(const RawSeries& series, std::size_t window) {
  if (window < 1) throw ConfigError("window: size must be >= 1");
  const std::size_t t_len = series.timesteps();
  if (t_len == 0) throw DataError("window: empty series");
  const std::size_t c = series.channels();
  if (series.has_labels && series.labels.size() != t_len)
    throw DataError("window: " + std::to_string(series.labels.size()) + " labels for " +
                    std::to_string(t_len) + " timesteps");

  WindowedDataset out;
  out.window = window;
  out.windows = Tensor({t_len, window * c});
  for (std::size_t i = 0; i < t_len; ++i) {
    for (std::size_t k = 0; k < window; ++k) {
      // Timestep i-window+1+k, indices below zero replicate timestep 0.
      const std::ptrdiff_t raw =
          static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(window) + 1 +
          static_cast<std::ptrdiff_t>(k);
      const std::size_t src = raw < 0 ? 0 : static_cast<std::size_t>(raw);
      for (std::size_t ch = 0; ch < c; ++ch)
        out.windows.at(i, k * c + ch) = series.values.at(src, ch);
    }
  }
  out.has_labels = series.has_labels;
  if (series.has_labels) out.labels = series.labels;
  return out;
}

Tensor gen_two_moons(std::size_t n, double noise_std, std::uint64_t seed) {
  if (n < 1) throw ConfigError("two_moons: n must be >= 1");
  Rng rng(seed);
  Tensor out({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = rng.uniform(0.0, std::numbers::pi);
    double x, y;
    if (rng.engine()() & 1u) {
      x = std::cos(theta);
      y = std::sin(theta);
    } else {
      x = 1.0 - std::cos(theta);
      y = 0.5 - std::sin(theta);
    }
    out.at(i, 0) = x + noise_std * rng.normal();
    out.at(i, 1) = y + noise_std * rng.normal();
  }
  return out;
}

RawSeries gen_telemetry(std::size_t timesteps, std::size_t channels, double anomaly_rate,
                        std::uint64_t seed, double clean_frac) {
  if (timesteps < 16) throw ConfigError("telemetry: need T >= 16");
  if (channels < 1) throw ConfigError("telemetry: need C >= 1");
  if (anomaly_rate < 0.0 || anomaly_rate > 0.2)
    throw ConfigError("telemetry: anomaly_rate must lie in [0, 0.2]");
  if (clean_frac < 0.0 || clean_frac >= 1.0)
    throw ConfigError("telemetry: clean_frac must lie in [0, 1)");

  Rng rng(seed);
  RawSeries series;
  series.values = Tensor({timesteps, channels});
  series.labels.assign(timesteps, 0);
  series.has_labels = true;

  Tensor noise({timesteps, channels});
  for (std::size_t c = 0; c < channels; ++c) {
    double amp[3], period[3], phase[3];
    for (int j = 0; j < 3; ++j) {
      amp[j] = rng.uniform(0.5, 1.5);
      period[j] = rng.uniform(64.0, 512.0);
      phase[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const double rho = 0.9, eta = 0.3;
    double ar = 0.0;
    for (std::size_t t = 0; t < timesteps; ++t) {
      double base = 0.0;
      for (int j = 0; j < 3; ++j)
        base += amp[j] * std::sin(2.0 * std::numbers::pi * t / period[j] + phase[j]);
      ar = rho * ar + eta * rng.normal();
      noise.at(t, c) = ar;
      series.values.at(t, c) = base + ar;
    }
  }

  const auto target = static_cast<std::size_t>(std::llround(anomaly_rate * timesteps));
  if (target == 0) return series;

  const auto start = static_cast<std::size_t>(std::ceil(clean_frac * timesteps));
  if (start + target > timesteps)
    throw ConfigError("telemetry: anomaly_rate " + std::to_string(anomaly_rate) +
                      " does not fit after clean_frac " + std::to_string(clean_frac));

  // Per-channel noise scale drives the injection magnitude.
  Tensor sigma = col_std(noise);

  // Segment lengths accumulate to the exact labelled count.
  std::vector<std::size_t> lengths;
  std::size_t placed = 0;
  while (placed < target) {
    auto len = static_cast<std::size_t>(rng.randint(40, 90));
    len = std::min(len, target - placed);
    lengths.push_back(len);
    placed += len;
  }

  // One segment per evenly spaced slot, jittered inside the slot.
  const std::size_t n_seg = lengths.size();
  const std::size_t span = timesteps - start;
  const std::size_t slot = span / n_seg;
  for (std::size_t s = 0; s < n_seg; ++s) {
    const std::size_t len = std::min(lengths[s], slot > 16 ? slot - 16 : std::size_t{1});
    const std::size_t slack = slot > len + 8 ? slot - len - 8 : 0;
    const std::size_t jitter =
        slack > 0 ? static_cast<std::size_t>(rng.randint(0, static_cast<std::int64_t>(slack)))
                  : 0;
    const std::size_t seg_start = start + s * slot + jitter;
    const bool level_shift = (s % 2 == 0);
    for (std::size_t t = seg_start; t < seg_start + len && t < timesteps; ++t) {
      series.labels[t] = 1;
      for (std::size_t c = 0; c < channels; ++c) {
        if (level_shift)
          series.values.at(t, c) += 4.0 * sigma[c];
        else
          series.values.at(t, c) += 5.0 * sigma[c] * rng.normal();  // x5-scale noise burst
      }
    }
  }
  return series;
}

namespace {

void write_f64_le(std::ofstream& out, std::span<const double> values) {
  static_assert(sizeof(double) == 8);
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char raw[8];
    for (int i = 0; i < 8; ++i) raw[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(raw), 8);
  }
}

void read_f64_le(std::ifstream& in, std::span<double> values) {
  for (double& v : values) {
    unsigned char raw[8];
    in.read(reinterpret_cast<char*>(raw), 8);
    if (!in) throw DataError("series: binary blob truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
}

std::vector<int> load_labels(const std::string& path, std::size_t expect) {
  std::ifstream in(path);
  if (!in) throw DataError("labels: cannot open " + path);
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line != "0" && line != "1")
      throw DataError("labels: line '" + line + "' in " + path + " is not 0/1");
    labels.push_back(line == "1" ? 1 : 0);
  }
  if (labels.size() != expect)
    throw DataError("labels: " + std::to_string(labels.size()) + " labels in " + path +
                    " for " + std::to_string(expect) + " timesteps");
  return labels;
}

RawSeries load_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("series: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("series: " + path + " is empty");
  std::size_t channels = std::count(line.begin(), line.end(), ',') + 1;
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t got = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("series: bad number '" + cell + "' in " + path);
      }
      ++got;
    }
    if (got != channels)
      throw DataError("series: row " + std::to_string(rows + 1) + " in " + path + " has " +
                      std::to_string(got) + " cells, header has " + std::to_string(channels));
    ++rows;
  }
  if (rows == 0) throw DataError("series: " + path + " has no data rows");
  RawSeries series;
  series.values = Tensor({rows, channels}, std::move(values));
  series.entity = fs::path(path).stem().string();
  return series;
}

}  // namespace

RawSeries load_series(const std::string& data_path, const std::string& labels_path) {
  if (fs::path(data_path).extension() == ".csv") {
    RawSeries series = load_series_csv(data_path);
    if (!labels_path.empty()) {
      series.labels = load_labels(labels_path, series.timesteps());
      series.has_labels = true;
    }
    return series;
  }

  std::ifstream in(data_path);
  if (!in) throw DataError("series: cannot open " + data_path);
  json header;
  try {
    header = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("series: malformed header " + data_path + ": " + e.what());
  }
  for (const char* key : {"T", "C", "dtype", "layout", "data"}) {
    if (!header.contains(key))
      throw DataError("series: header " + data_path + " missing key '" + std::string(key) + "'");
  }
  if (header["dtype"] != "f64" || header["layout"] != "row-major")
    throw DataError("series: header " + data_path + " must declare dtype f64, layout row-major");
  const auto t_len = header["T"].get<std::size_t>();
  const auto channels = header["C"].get<std::size_t>();
  if (t_len == 0 || channels == 0) throw DataError("series: header declares empty shape");

  const fs::path bin_path = fs::path(data_path).parent_path() / header["data"].get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("series: cannot open blob " + bin_path.string());
  RawSeries series;
  series.values = Tensor({t_len, channels});
  read_f64_le(bin, series.values.data());
  bin.peek();
  if (!bin.eof())
    throw DataError("series: blob " + bin_path.string() + " longer than T*C values");
  if (header.contains("entity")) series.entity = header["entity"].get<std::string>();

  std::string lp = labels_path;
  if (lp.empty() && header.contains("labels") && !header["labels"].is_null())
    lp = (fs::path(data_path).parent_path() / header["labels"].get<std::string>()).string();
  if (!lp.empty()) {
    series.labels = load_labels(lp, t_len);
    series.has_labels = true;
  }
  return series;
}

void save_series(const RawSeries& series, const std::string& data_path,
                 const std::string& labels_path) {
  if (series.timesteps() == 0) throw DataError("series: refusing to save an empty series");
  const fs::path header_path(data_path);
  const fs::path bin_path = fs::path(header_path).replace_extension(".bin");
  std::string lp = labels_path;
  if (lp.empty() && series.has_labels)
    lp = fs::path(header_path).replace_extension(".labels").string();

  json header;
  header["T"] = series.timesteps();
  header["C"] = series.channels();
  header["dtype"] = "f64";
  header["layout"] = "row-major";
  header["entity"] = series.entity;
  header["data"] = bin_path.filename().string();
  header["labels"] = series.has_labels ? json(fs::path(lp).filename().string()) : json(nullptr);

  std::ofstream out(header_path);
  if (!out) throw DataError("series: cannot write " + header_path.string());
  out << header.dump(2) << "\n";

  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("series: cannot write " + bin_path.string());
  write_f64_le(bin, series.values.data());

  if (series.has_labels) {
    std::ofstream lout(lp);
    if (!lout) throw DataError("series: cannot write " + lp);
    for (int v : series.labels) lout << v << "\n";
  }
}

Normalizer Normalizer::fit(const Tensor& train_rows) {
  if (train_rows.ndim() != 2 || train_rows.shape()[0] == 0)
    throw DataError("normalize: train set must be a non-empty rank-2 tensor");
  Normalizer n;
  n.mean = col_mean(train_rows);
  n.std = clamp_min(col_std(train_rows), 1e-8);
  return n;
}

Tensor Normalizer::transform(const Tensor& rows) const {
  Tensor centered = add_rowvec(rows, neg(mean));
  Tensor inv(std.shape());
  for (std::size_t j = 0; j < std.size(); ++j) inv[j] = 1.0 / std[j];
  return mul_rowvec(centered, inv);
}

}  // namespace dualflow
