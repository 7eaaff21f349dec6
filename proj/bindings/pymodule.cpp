#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dualflow/anomaly.hpp"
#include "dualflow/data.hpp"
#include "dualflow/errors.hpp"
#include "dualflow/objectives.hpp"
#include "dualflow/runner.hpp"
#include "dualflow/vfmodel.hpp"

namespace py = pybind11;
using namespace dualflow;

namespace {

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const NpArray& arr) {
  std::vector<std::size_t> shape;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i)
    shape.push_back(static_cast<std::size_t>(arr.shape(i)));
  std::vector<double> values(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(values));
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (std::size_t e : t.shape()) shape.push_back(static_cast<py::ssize_t>(e));
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

ScoreOverrides overrides_from(const std::string& solver, int steps, double atol, double rtol,
                              const std::string& trace, int probes,
                              const std::string& strategy, py::object point_adjust,
                              const std::string& data_path, const std::string& labels_path) {
  ScoreOverrides o;
  if (!solver.empty()) {
    SolverSection s;
    s.method = solver;
    s.steps = steps;
    s.atol = atol;
    s.rtol = rtol;
    o.solver = s;
  }
  if (!trace.empty()) {
    TraceSection t;
    t.kind = trace;
    t.probes = probes;
    o.trace = t;
  }
  o.strategy = strategy;
  if (!point_adjust.is_none()) o.point_adjust = point_adjust.cast<bool>();
  o.data_path = data_path;
  o.labels_path = labels_path;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Continuous flow models: likelihood, flow matching and dual flow matching "
            "training, density estimation, sliding-window anomaly scoring.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def(
      "gen_two_moons",
      [](std::size_t n, double noise_std, std::uint64_t seed) {
        return to_array(gen_two_moons(n, noise_std, seed));
      },
      py::arg("n"), py::arg("noise_std") = 0.08, py::arg("seed") = 0);

  m.def(
      "gen_telemetry",
      [](std::size_t timesteps, std::size_t channels, double anomaly_rate, std::uint64_t seed,
         double clean_frac) {
        RawSeries s = gen_telemetry(timesteps, channels, anomaly_rate, seed, clean_frac);
        return py::make_tuple(to_array(s.values), py::cast(s.labels));
      },
      py::arg("timesteps"), py::arg("channels"), py::arg("anomaly_rate") = 0.05,
      py::arg("seed") = 0, py::arg("clean_frac") = 0.6);

  m.def(
      "make_windows",
      [](const NpArray& values, std::size_t window, py::object labels) {
        RawSeries s;
        s.values = to_tensor(values);
        if (!labels.is_none()) {
          s.labels = labels.cast<std::vector<int>>();
          s.has_labels = true;
        }
        WindowedDataset wd = make_windows(s, window);
        return py::make_tuple(to_array(wd.windows), py::cast(wd.labels));
      },
      py::arg("values"), py::arg("window") = 8, py::arg("labels") = py::none());

  m.def(
      "save_series",
      [](const NpArray& values, const std::string& path, py::object labels) {
        RawSeries s;
        s.values = to_tensor(values);
        if (!labels.is_none()) {
          s.labels = labels.cast<std::vector<int>>();
          s.has_labels = true;
        }
        save_series(s, path);
      },
      py::arg("values"), py::arg("path"), py::arg("labels") = py::none());

  m.def(
      "train_json",
      [](const std::string& config_json, const std::string& out_dir) {
        RunConfig cfg = run_config_from_json(nlohmann::json::parse(config_json));
        TrainRunResult r = run_train(cfg, out_dir);
        nlohmann::json summary;
        summary["checkpoint_dir"] = r.checkpoint_dir;
        summary["out_dir"] = r.out_dir;
        summary["steps"] = r.state.step;
        summary["wall_seconds"] = r.wall_seconds;
        if (!r.state.history.empty()) {
          summary["initial_loss"] = r.state.history.front().loss;
          summary["final_loss"] = r.state.history.back().loss;
          if (cfg.objective == "dfm") {
            summary["initial_dfm_loss"] = r.state.history.front().dfm_metric;
            summary["final_dfm_loss"] = r.state.history.back().dfm_metric;
          }
        }
        return summary.dump();
      },
      py::arg("config_json"), py::arg("out_dir"));

  m.def(
      "score_json",
      [](const std::string& checkpoint_dir, const std::string& out_dir,
         const std::string& solver, int steps, double atol, double rtol,
         const std::string& trace, int probes, const std::string& strategy,
         py::object point_adjust, const std::string& data_path,
         const std::string& labels_path) {
        ScoreOverrides o = overrides_from(solver, steps, atol, rtol, trace, probes, strategy,
                                          point_adjust, data_path, labels_path);
        ScoreRunResult r = run_score(checkpoint_dir, o, out_dir);
        return r.metrics.dump();
      },
      py::arg("checkpoint_dir"), py::arg("out_dir") = "", py::arg("solver") = "",
      py::arg("steps") = 4, py::arg("atol") = 1e-1, py::arg("rtol") = 1e-2,
      py::arg("trace") = "", py::arg("probes") = 1, py::arg("strategy") = "",
      py::arg("point_adjust") = py::none(), py::arg("data_path") = "",
      py::arg("labels_path") = "");

  m.def(
      "sample",
      [](const std::string& checkpoint_dir, std::size_t n, std::uint64_t seed) {
        return to_array(run_sample(checkpoint_dir, n, seed, ""));
      },
      py::arg("checkpoint_dir"), py::arg("n") = 1000, py::arg("seed") = 0);

  m.def(
      "density_points",
      [](const std::string& checkpoint_dir, const NpArray& points) {
        return to_array(run_density_points(checkpoint_dir, to_tensor(points), ""));
      },
      py::arg("checkpoint_dir"), py::arg("points"));

  m.def(
      "density_grid",
      [](const std::string& checkpoint_dir, double lo, double hi, std::size_t steps) {
        return to_array(run_density_grid(checkpoint_dir, {lo, hi, steps}, ""));
      },
      py::arg("checkpoint_dir"), py::arg("lo") = -3.0, py::arg("hi") = 3.0,
      py::arg("steps") = 100);

  m.def(
      "time_embed",
      [](double t, std::size_t dim) { return to_array(time_embed(t, dim)); }, py::arg("t"),
      py::arg("dim") = 8);

  m.def(
      "dfm_loss_value",
      [](const NpArray& v_theta, const NpArray& v_lambda, const std::string& variant) {
        return dfm_loss_value(to_tensor(v_theta), to_tensor(v_lambda),
                              dfm_variant_from_string(variant));
      },
      py::arg("v_theta"), py::arg("v_lambda"), py::arg("variant") = "cos_pair");

  m.def("auc", &auc_score, py::arg("scores"), py::arg("labels"));

  m.def(
      "sweep_threshold",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        SweepResult r = sweep_threshold(scores, labels);
        return py::dict(py::arg("threshold") = r.threshold, py::arg("precision") = r.precision,
                        py::arg("recall") = r.recall, py::arg("f1") = r.f1);
      },
      py::arg("scores"), py::arg("labels"));

  m.def("point_adjust", &point_adjust, py::arg("predictions"), py::arg("labels"));

  m.def("default_config_json", [] { return to_json(RunConfig{}).dump(); });
}
