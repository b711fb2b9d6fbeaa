// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lrdm/pipeline.hpp"

namespace py = pybind11;
using namespace lrdm;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
std::string dump(const nlohmann::json& j) { return j.dump(); }

BranchId branch_of(const std::string& s) {
  if (s == "end") return BranchId::End;
  if (s == "trans") return BranchId::Trans;
  throw Error(ErrorCode::ConfigInvalid, "branch must be 'end' or 'trans', got '" + s + "'");
}

TowerWeights weights_from(const std::filesystem::path& ckpt, const std::string& branch, double alpha) {
  // Stack checkpoints fold a branch (or an LRDM mix); merged baselines are towers.
  try {
    const AdapterStack s = load_checkpoint(ckpt);
    if (alpha >= 0.0) return lrdm_merge(s, alpha).view(BranchId::End);
    return s.view(branch_of(branch));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::CorruptTensor && e.code() != ErrorCode::MissingArtifact) throw;
  }
  return load_tower_checkpoint(ckpt);
}

}  // namespace

PYBIND11_MODULE(_lrdm, m) {
  m.doc() = "Decoupled endpoint/transition adapters for composed retrieval";

  static py::exception<Error> exc(m, "LrdmError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = exc;
      py::object inst = err(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(exc.ptr(), inst.ptr());
    }
  });

  py::class_<ExperimentConfig>(m, "Config")
      .def(py::init<>())
      .def("set", [](ExperimentConfig& c, const std::string& k, const std::string& v) { apply_override(c, k, v); })
      .def("validate", &ExperimentConfig::validate)
      .def("canonical", [](const ExperimentConfig& c) { return canonical_config(c); })
      .def("hash", [](const ExperimentConfig& c) { return config_hash(c); })
      .def("to_ini", [](const ExperimentConfig& c) { return config_to_ini(c); })
      .def("derived_seed", &ExperimentConfig::derived_seed, py::arg("label"), py::arg("index") = 0)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("output_dir", &ExperimentConfig::output_dir);

  m.def("load_config", py::overload_cast<const std::filesystem::path&, const std::vector<std::string>&>(&load_config),
        py::arg("path"), py::arg("overrides") = std::vector<std::string>{});

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init<ExperimentConfig, std::filesystem::path>(), py::arg("config"), py::arg("output_dir"))
      .def_property_readonly("dir", &Pipeline::dir)
      .def_property_readonly("hash", &Pipeline::hash)
      .def("gen", &Pipeline::gen, py::call_guard<py::gil_scoped_release>())
      .def("pretrain", &Pipeline::pretrain, py::call_guard<py::gil_scoped_release>())
      .def("train", &Pipeline::train, py::call_guard<py::gil_scoped_release>())
      .def("probe", &Pipeline::probe, py::call_guard<py::gil_scoped_release>())
      .def("sweep", &Pipeline::sweep, py::call_guard<py::gil_scoped_release>())
      .def("merge", &Pipeline::merge, py::call_guard<py::gil_scoped_release>())
      .def("eval", &Pipeline::eval, py::call_guard<py::gil_scoped_release>())
      .def("_ablate", [](Pipeline& p) {
        AblationResult r;
        {
          py::gil_scoped_release release;
          r = p.ablate();
        }
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& s : r.summary)
          rows.push_back({{"mode", mode_name(s.mode)}, {"label", mode_label(s.mode)}, {"r_at_1_mean", s.r_at_1_mean},
                          {"r_at_1_std", s.r_at_1_std}, {"shortcut_gap_mean", s.shortcut_gap_mean},
                          {"map_at_10_mean", s.map_at_10_mean}});
        return dump(rows);
      })
      .def("_report", [](const Pipeline& p) { return dump(p.report()); })
      .def("_run_all", [](Pipeline& p) {
        nlohmann::json j;
        {
          py::gil_scoped_release release;
          j = p.run_all();
        }
        return dump(j);
      });

  m.def("_build_report", [](const std::filesystem::path& dir) { return dump(build_report(dir)); });

  m.def("_evaluate",
        [](const std::filesystem::path& bench, const std::filesystem::path& ckpt, const std::string& branch,
           double alpha, std::size_t max_queries) {
          const RetrievalBenchmark b = load_benchmark(bench);
          return dump(metrics_to_json(evaluate(b, weights_from(ckpt, branch, alpha), max_queries)));
        },
        py::arg("benchmark"), py::arg("checkpoint"), py::arg("branch") = "end", py::arg("alpha") = -1.0,
        py::arg("max_queries") = 0);

  m.def("merge_checkpoint",
        [](const std::filesystem::path& in, double alpha, const std::filesystem::path& out) {
          save_checkpoint(lrdm_merge(load_checkpoint(in), alpha), out, checkpoint_config_hash(in));
        },
        py::arg("checkpoint"), py::arg("alpha"), py::arg("out"));

  // Small numeric building blocks.
  m.def("ties_merge", py::overload_cast<const std::vector<Vector>&, double, const std::vector<double>&>(&ties_merge),
        py::arg("vectors"), py::arg("density"), py::arg("weights") = std::vector<double>{});
  m.def("dare",
        [](const Vector& v, double drop_p, std::uint64_t seed) {
          Rng rng(seed);
          return dare(v, drop_p, rng);
        },
        py::arg("vector"), py::arg("drop_p"), py::arg("seed"));
  m.def("average_precision_at_k", &average_precision_at_k, py::arg("ranking"), py::arg("relevant"), py::arg("k"));
  m.def("recall_at_k", &recall_at_k, py::arg("rankings"), py::arg("relevant"), py::arg("k"));
  m.def("map_at_k", &map_at_k, py::arg("rankings"), py::arg("relevant"), py::arg("k"));
  m.def(
      "endpoint_loss",
      [](const std::vector<Vector>& q, const std::vector<Vector>& t, double log_tau) {
        const EndpointLoss l = endpoint_loss(q, t, log_tau);
        return py::make_tuple(l.loss, l.grad_queries, l.grad_targets, l.grad_log_tau);
      },
      py::arg("queries"), py::arg("targets"), py::arg("log_tau"));
  m.def("sha256_hex", &sha256_hex);
}
