#include "dualflow/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "dualflow/errors.hpp"

namespace dualflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_blob(const fs::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  for (double v : t.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char raw[8];
    for (int i = 0; i < 8; ++i) raw[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(raw), 8);
  }
}

Tensor read_blob(const fs::path& path, const std::vector<std::size_t>& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  Tensor t(shape);
  for (double& v : t.data()) {
    unsigned char raw[8];
    in.read(reinterpret_cast<char*>(raw), 8);
    if (!in) throw DataError("checkpoint: blob " + path.string() + " truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
  in.peek();
  if (!in.eof()) throw DataError("checkpoint: blob " + path.string() + " longer than declared");
  return t;
}

std::string blob_name(const std::string& tensor_name) { return tensor_name + ".bin"; }

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw DataError("checkpoint: missing tensor '" + name + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = ckpt.format_version;
  manifest["step"] = ckpt.step;
  manifest["rng_state"] = ckpt.rng_state;
  manifest["config"] = to_json(ckpt.config);
  if (ckpt.normalizer) {
    manifest["normalization"] = {
        {"mean", std::vector<double>(ckpt.normalizer->mean.data().begin(),
                                     ckpt.normalizer->mean.data().end())},
        {"std", std::vector<double>(ckpt.normalizer->std.data().begin(),
                                    ckpt.normalizer->std.data().end())}};
  } else {
    manifest["normalization"] = nullptr;
  }
  json tensors = json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"file", blob_name(name)}});
    write_blob(fs::path(dir) / blob_name(name), t);
  }
  manifest["tensors"] = tensors;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw DataError("checkpoint: cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("checkpoint: cannot open " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("checkpoint: malformed manifest: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  ckpt.format_version = manifest.at("format_version").get<int>();
  if (ckpt.format_version != 1)
    throw DataError("checkpoint: unsupported format_version " +
                    std::to_string(ckpt.format_version));
  ckpt.step = manifest.at("step").get<int>();
  ckpt.rng_state = manifest.at("rng_state").get<std::string>();
  ckpt.config = run_config_from_json(manifest.at("config"));
  if (!manifest.at("normalization").is_null()) {
    Normalizer n;
    auto mean = manifest["normalization"].at("mean").get<std::vector<double>>();
    auto std_vals = manifest["normalization"].at("std").get<std::vector<double>>();
    const std::size_t mean_n = mean.size(), std_n = std_vals.size();
    n.mean = Tensor({mean_n}, std::move(mean));
    n.std = Tensor({std_n}, std::move(std_vals));
    ckpt.normalizer = std::move(n);
  }
  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto file = entry.at("file").get<std::string>();
    ckpt.tensors.emplace_back(name, read_blob(fs::path(dir) / file, shape));
  }
  return ckpt;
}

}  // namespace dualflow
