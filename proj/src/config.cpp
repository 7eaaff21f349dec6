#include "dualflow/config.hpp"

#include <fstream>
#include <set>

#include "dualflow/errors.hpp"

namespace dualflow {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::set<std::string> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
  }
}

}  // namespace

SolverConfig SolverSection::to_solver() const {
  SolverConfig cfg;
  if (method == "euler")
    cfg.method = SolverConfig::Method::kEuler;
  else if (method == "dopri5")
    cfg.method = SolverConfig::Method::kDopri5;
  else
    throw ConfigError("config: unknown solver method '" + method + "'");
  cfg.steps = steps;
  cfg.atol = atol;
  cfg.rtol = rtol;
  cfg.max_steps = max_steps;
  cfg.validate();
  return cfg;
}

TraceEstimator TraceSection::to_estimator(std::uint64_t seed) const {
  TraceEstimator est;
  if (kind == "exact")
    est.kind = TraceEstimator::Kind::kExact;
  else if (kind == "hutchinson")
    est.kind = TraceEstimator::Kind::kHutchinson;
  else
    throw ConfigError("config: unknown trace kind '" + kind + "'");
  if (probes < 1) throw ConfigError("config: trace.probes must be >= 1");
  est.probes = probes;
  if (dist == "rademacher")
    est.probe = TraceEstimator::Probe::kRademacher;
  else if (dist == "gaussian")
    est.probe = TraceEstimator::Probe::kGaussian;
  else
    throw ConfigError("config: unknown probe dist '" + dist + "'");
  est.seed = seed;
  return est;
}

void RunConfig::validate() const {
  to_train_options();  // objective / model / prior / dfm checks
  if (data.kind != "two_moons" && data.kind != "telemetry" && data.kind != "series")
    throw ConfigError("config: unknown data.kind '" + data.kind + "'");
  if (data.kind == "series" && data.data_path.empty())
    throw ConfigError("config: data.kind 'series' needs data.data_path");
  if (data.train_frac <= 0.0 || data.train_frac >= 1.0)
    throw ConfigError("config: data.train_frac must lie in (0,1)");
  if (data.window < 1) throw ConfigError("config: data.window must be >= 1");
  train_solver.to_solver();
  eval_solver.to_solver();
  trace.to_estimator();
  if (objective == "mle" && train_solver.method != "euler")
    throw ConfigError("config: training requires a fixed-step solver (train_solver.method "
                      "must be 'euler')");
  if (score.strategy != "auto" && score.strategy != "reverse_model" &&
      score.strategy != "forward_model")
    throw ConfigError("config: unknown score.strategy '" + score.strategy + "'");
}

TrainOptions RunConfig::to_train_options() const {
  TrainOptions opts;
  opts.objective = objective;
  opts.path.sigma_min = path.sigma_min;
  opts.path.sigma = path.sigma;
  opts.dfm.variant = dfm_variant_from_string(dfm.variant);
  opts.dfm.warmup_frac = dfm.warmup_frac;
  opts.dfm.warmup_path = path_kind_from_string(dfm.warmup_path);
  opts.hidden = model.hidden;
  opts.embed_dim = model.time_embed;
  if (model.init == "zero_final")
    opts.init = FieldInit::kZeroFinal;
  else if (model.init == "random")
    opts.init = FieldInit::kRandom;
  else
    throw ConfigError("config: unknown model.init '" + model.init + "'");
  opts.adam = {optimizer.lr, optimizer.beta1, optimizer.beta2, optimizer.eps};
  opts.batch = optimizer.batch;
  opts.steps = optimizer.steps;
  opts.mle_euler_steps = train_solver.steps;
  opts.trace = trace.to_estimator(seed ^ 0x5eedULL);
  opts.prior_init = prior_init_from_string(prior.init);
  opts.prior_offset = prior.offset;
  opts.seed = seed;
  opts.validate();
  return opts;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["objective"] = cfg.objective;
  j["seed"] = cfg.seed;
  j["data"] = {{"kind", cfg.data.kind},
               {"n", cfg.data.n},
               {"noise_std", cfg.data.noise_std},
               {"timesteps", cfg.data.timesteps},
               {"channels", cfg.data.channels},
               {"anomaly_rate", cfg.data.anomaly_rate},
               {"clean_frac", cfg.data.clean_frac},
               {"data_path", cfg.data.data_path},
               {"labels_path", cfg.data.labels_path},
               {"window", cfg.data.window},
               {"train_frac", cfg.data.train_frac},
               {"normalize", cfg.data.normalize}};
  j["model"] = {{"hidden", cfg.model.hidden},
                {"time_embed", cfg.model.time_embed},
                {"init", cfg.model.init}};
  j["prior"] = {{"init", cfg.prior.init}, {"offset", cfg.prior.offset}};
  j["path"] = {{"sigma_min", cfg.path.sigma_min}, {"sigma", cfg.path.sigma}};
  j["dfm"] = {{"variant", cfg.dfm.variant},
              {"warmup_frac", cfg.dfm.warmup_frac},
              {"warmup_path", cfg.dfm.warmup_path}};
  j["optimizer"] = {{"lr", cfg.optimizer.lr},     {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2}, {"eps", cfg.optimizer.eps},
                    {"batch", cfg.optimizer.batch}, {"steps", cfg.optimizer.steps}};
  auto solver_json = [](const SolverSection& s) {
    return json{{"method", s.method},
                {"steps", s.steps},
                {"atol", s.atol},
                {"rtol", s.rtol},
                {"max_steps", s.max_steps}};
  };
  j["train_solver"] = solver_json(cfg.train_solver);
  j["eval_solver"] = solver_json(cfg.eval_solver);
  j["trace"] = {{"kind", cfg.trace.kind}, {"probes", cfg.trace.probes}, {"dist", cfg.trace.dist}};
  j["score"] = {{"strategy", cfg.score.strategy}, {"point_adjust", cfg.score.point_adjust}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  check_keys(j, "config",
             {"objective", "seed", "data", "model", "prior", "path", "dfm", "optimizer",
              "train_solver", "eval_solver", "trace", "score"});
  read(j, "objective", cfg.objective);
  read(j, "seed", cfg.seed);

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, "data",
               {"kind", "n", "noise_std", "timesteps", "channels", "anomaly_rate", "clean_frac",
                "data_path", "labels_path", "window", "train_frac", "normalize"});
    read(d, "kind", cfg.data.kind);
    read(d, "n", cfg.data.n);
    read(d, "noise_std", cfg.data.noise_std);
    read(d, "timesteps", cfg.data.timesteps);
    read(d, "channels", cfg.data.channels);
    read(d, "anomaly_rate", cfg.data.anomaly_rate);
    read(d, "clean_frac", cfg.data.clean_frac);
    read(d, "data_path", cfg.data.data_path);
    read(d, "labels_path", cfg.data.labels_path);
    read(d, "window", cfg.data.window);
    read(d, "train_frac", cfg.data.train_frac);
    read(d, "normalize", cfg.data.normalize);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"hidden", "time_embed", "init"});
    read(m, "hidden", cfg.model.hidden);
    read(m, "time_embed", cfg.model.time_embed);
    read(m, "init", cfg.model.init);
  }
  if (j.contains("prior")) {
    const json& p = j.at("prior");
    check_keys(p, "prior", {"init", "offset"});
    read(p, "init", cfg.prior.init);
    read(p, "offset", cfg.prior.offset);
  }
  if (j.contains("path")) {
    const json& p = j.at("path");
    check_keys(p, "path", {"sigma_min", "sigma"});
    read(p, "sigma_min", cfg.path.sigma_min);
    read(p, "sigma", cfg.path.sigma);
  }
  if (j.contains("dfm")) {
    const json& d = j.at("dfm");
    check_keys(d, "dfm", {"variant", "warmup_frac", "warmup_path"});
    read(d, "variant", cfg.dfm.variant);
    read(d, "warmup_frac", cfg.dfm.warmup_frac);
    read(d, "warmup_path", cfg.dfm.warmup_path);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    check_keys(o, "optimizer", {"lr", "beta1", "beta2", "eps", "batch", "steps"});
    read(o, "lr", cfg.optimizer.lr);
    read(o, "beta1", cfg.optimizer.beta1);
    read(o, "beta2", cfg.optimizer.beta2);
    read(o, "eps", cfg.optimizer.eps);
    read(o, "batch", cfg.optimizer.batch);
    read(o, "steps", cfg.optimizer.steps);
  }
  auto read_solver = [&](const char* key, SolverSection& s) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    check_keys(v, key, {"method", "steps", "atol", "rtol", "max_steps"});
    read(v, "method", s.method);
    read(v, "steps", s.steps);
    read(v, "atol", s.atol);
    read(v, "rtol", s.rtol);
    read(v, "max_steps", s.max_steps);
  };
  read_solver("train_solver", cfg.train_solver);
  read_solver("eval_solver", cfg.eval_solver);
  if (j.contains("trace")) {
    const json& t = j.at("trace");
    check_keys(t, "trace", {"kind", "probes", "dist"});
    read(t, "kind", cfg.trace.kind);
    read(t, "probes", cfg.trace.probes);
    read(t, "dist", cfg.trace.dist);
  }
  if (j.contains("score")) {
    const json& s = j.at("score");
    check_keys(s, "score", {"strategy", "point_adjust"});
    read(s, "strategy", cfg.score.strategy);
    read(s, "point_adjust", cfg.score.point_adjust);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config: malformed json in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot write " + path);
  out << to_json(cfg).dump(2) << "\n";
}

}  // namespace dualflow
