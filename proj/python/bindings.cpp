#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "act/baselines.hpp"
#include "act/demonstrations.hpp"
#include "act/errors.hpp"
#include "act/harness.hpp"
#include "act/inference.hpp"
#include "act/model.hpp"
#include "act/training.hpp"

namespace py = pybind11;
using namespace act;

namespace {

py::array_t<float> to_array(const std::vector<float>& v, std::vector<py::ssize_t> shape) {
  py::array_t<float> a(shape);
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

sim::TaskSpec task_spec(const std::string& name) { return sim::TaskSpec::by_name(sim::task_from_string(name)); }

sim::Action to_action(const std::vector<float>& v) {
  if (v.size() != sim::kActDim) throw py::value_error("an action has 8 entries");
  sim::Action a;
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

py::dict summary_dict(const infer::Summary& s) {
  py::dict d;
  d["success"] = std::vector<double>(s.success_pct.begin(), s.success_pct.end());
  d["jerk"] = s.jerk;
  d["episodes"] = s.episodes;
  d["aborted"] = s.aborted;
  return d;
}

// JSON text is the bridge for configs: Python passes json.dumps(dict).
nlohmann::json parse(const std::string& s) { return s.empty() ? nlohmann::json::object() : nlohmann::json::parse(s); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Action chunking with transformers: simulator, training and evaluation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvariantError>(m, "InvariantError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.attr("ACT_DIM") = sim::kActDim;

  py::class_<sim::TaskSpec>(m, "TaskSpec")
      .def_static("by_name", [](const std::string& n) { return sim::TaskSpec::by_name(sim::task_from_string(n)); })
      .def_property_readonly("name", [](const sim::TaskSpec& t) { return sim::to_string(t.name); })
      .def_readonly("episode_length", &sim::TaskSpec::episode_length)
      .def_property_readonly("obs_dim", &sim::TaskSpec::obs_dim)
      .def_property_readonly("milestone_names", [](const sim::TaskSpec& t) {
        return std::vector<std::string>(t.milestone_names.begin(), t.milestone_names.end());
      });

  py::class_<sim::SimState>(m, "SimState")
      .def_readonly("tick", &sim::SimState::tick)
      .def_property_readonly("milestones", [](const sim::SimState& s) { return sim::milestones(s); })
      .def_property_readonly("joints", [](const sim::SimState& s) {
        const auto j = sim::joint_vector(s);
        return std::vector<float>(j.begin(), j.end());
      })
      .def("__eq__", [](const sim::SimState& a, const sim::SimState& b) { return a == b; });

  py::class_<sim::Observation>(m, "Observation")
      .def_readonly("tick", &sim::Observation::tick)
      .def_property_readonly("state_vector", [](const sim::Observation& o) {
        const auto v = o.state_vector();
        return to_array(v, {static_cast<py::ssize_t>(v.size())});
      });

  py::class_<sim::Simulator>(m, "Simulator")
      .def(py::init([](const std::string& task) { return sim::Simulator(task_spec(task)); }),
           py::arg("task") = "transfer_cube")
      .def_property_readonly("task", &sim::Simulator::task)
      .def("reset", &sim::Simulator::reset, py::arg("seed"))
      .def("observe", &sim::Simulator::observe)
      .def("step", [](const sim::Simulator& s, const sim::SimState& st, const std::vector<float>& a) {
        try {
          return s.step(st, to_action(a));
        } catch (const std::invalid_argument& e) {
          throw py::value_error(e.what());
        }
      });

  m.def("render", [](const sim::SimState& s, std::size_t w, std::size_t h) {
    return to_array(sim::render(s, w, h), {static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w), 3});
  }, py::arg("state"), py::arg("width") = 64, py::arg("height") = 48);

  py::class_<demo::Episode>(m, "Episode")
      .def_readonly("seed", &demo::Episode::seed)
      .def_property_readonly("length", &demo::Episode::length)
      .def_property_readonly("success", &demo::Episode::success)
      .def_readonly("milestones", &demo::Episode::milestones)
      .def_property_readonly("observations", [](const demo::Episode& e) {
        return to_array(e.observations, {static_cast<py::ssize_t>(e.length()), static_cast<py::ssize_t>(e.obs_dim)});
      })
      .def_property_readonly("actions", [](const demo::Episode& e) {
        return to_array(e.actions, {static_cast<py::ssize_t>(e.length()), static_cast<py::ssize_t>(sim::kActDim)});
      });

  py::class_<demo::Dataset>(m, "Dataset")
      .def("__len__", &demo::Dataset::size)
      .def("__getitem__", [](const demo::Dataset& d, std::size_t i) {
        if (i >= d.size()) throw py::index_error();
        return d.episodes[i];
      })
      .def_property_readonly("manifest", [](const demo::Dataset& d) { return demo::to_json(d.manifest).dump(); });

  m.def("record_episode", [](const std::string& task, const std::string& style, std::uint64_t seed) {
    return demo::record_episode(task_spec(task), demo::DemoStyle::by_name(style), seed);
  }, py::arg("task"), py::arg("style"), py::arg("seed"));
  m.def("generate_dataset", [](const std::string& task, std::size_t n, const std::string& style, std::uint64_t seed) {
    return demo::generate_dataset(task_spec(task), n, demo::DemoStyle::by_name(style), seed);
  }, py::arg("task"), py::arg("n"), py::arg("style") = "deterministic", py::arg("seed") = 0);
  m.def("write_dataset", &demo::write_dataset, py::arg("dir"), py::arg("dataset"));
  m.def("load_dataset", &demo::load_dataset, py::arg("dir"));

  m.def("kl_closed_form", [](const std::vector<float>& mean, const std::vector<float>& logvar) {
    if (mean.size() != logvar.size()) throw py::value_error("mean and logvar differ in length");
    return kl_closed_form(mean, logvar);
  }, py::arg("mean"), py::arg("logvar"));
  m.def("ensemble_combine", [](const std::vector<std::vector<float>>& bucket, double m) {
    std::vector<sim::Action> b;
    for (const auto& a : bucket) b.push_back(to_action(a));
    const auto out = infer::ensemble_combine(b, m);
    return std::vector<float>(out.begin(), out.end());
  }, py::arg("bucket"), py::arg("m"));
  m.def("jerk_statistic", [](const std::vector<float>& actions) { return infer::jerk_statistic(actions); });

  py::class_<Policy, std::shared_ptr<Policy>>(m, "Policy")
      .def_property_readonly("chunk_size", &Policy::chunk_size)
      .def_property_readonly("method", &Policy::method)
      .def("predict", [](const Policy& p, const std::vector<sim::Observation>& obs) {
        const auto out = p.predict(obs);
        return to_array(out, {static_cast<py::ssize_t>(obs.size()), static_cast<py::ssize_t>(p.chunk_size()),
                              static_cast<py::ssize_t>(sim::kActDim)});
      });

  // Trains a policy; `config` is a JSON object in the CLI config layout.
  m.def("train_policy", [](const demo::Dataset& ds, const std::string& config) {
    auto cfg = harness::cell_config_from_json(parse(config));
    py::gil_scoped_release release;
    auto tp = harness::train_policy(ds, cfg);
    return std::make_pair(tp.policy, tp.report.to_csv());
  }, py::arg("dataset"), py::arg("config") = "");
  m.def("load_act_policy", [](const std::filesystem::path& ckpt) -> std::shared_ptr<Policy> {
    auto l = load_act(ckpt);
    return std::make_shared<ActPolicy>(l.model, l.norm);
  }, py::arg("ckpt"));
  m.def("evaluate", [](const Policy& p, const std::string& task, std::size_t episodes, const std::string& mode,
                       double m, std::uint64_t seed) {
    infer::RolloutConfig rc;
    rc.mode = infer::mode_from_string(mode);
    rc.m = m;
    rc.seed = seed;
    std::vector<infer::EpisodeResult> res;
    {
      py::gil_scoped_release release;
      res = infer::evaluate(p, task_spec(task), rc, episodes);
    }
    auto d = summary_dict(infer::summarize(res));
    d["csv"] = infer::results_csv(res);
    return d;
  }, py::arg("policy"), py::arg("task") = "transfer_cube", py::arg("episodes") = 10, py::arg("mode") = "ensembled",
        py::arg("m") = 0.1, py::arg("seed") = 0);
}
