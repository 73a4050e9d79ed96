#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ncopt/checkpoint.hpp"
#include "ncopt/dataset.hpp"
#include "ncopt/evaluation.hpp"
#include "ncopt/model.hpp"
#include "ncopt/oracles.hpp"
#include "ncopt/svg.hpp"
#include "ncopt/training.hpp"

namespace py = pybind11;
using namespace ncopt;
using nlohmann::json;

namespace {

// Accepts either a JSON string or any json.dumps-able python object.
json as_json(const py::object& obj) {
  if (py::isinstance<py::str>(obj)) return json::parse(obj.cast<std::string>());
  const py::object dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(obj).cast<std::string>());
}

SearchConfig make_search_config(const std::string& strategy, int width,
                                const std::string& selection, uint64_t seed) {
  SearchConfig cfg;
  cfg.strategy = search_strategy_from_string(strategy);
  cfg.width = cfg.strategy == SearchStrategy::Greedy ? 1 : width;
  cfg.selection = beam_selection_from_string(selection);
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

EvalOptions make_eval_options(const std::string& strategy, int width,
                              const std::string& selection, uint64_t seed, int threads,
                              bool band) {
  EvalOptions opts;
  opts.search = make_search_config(strategy, width, selection, seed);
  opts.seed = seed;
  opts.threads = threads;
  opts.percentile_band = band;
  return opts;
}

py::dict epoch_dict(const EpochStats& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["samples_seen"] = e.samples_seen;
  d["wall_time_sec"] = e.wall_time_sec;
  d["train_loss"] = e.train_loss;
  d["eval_gap"] = e.eval_gap;
  d["baseline_updated"] = e.baseline_updated;
  d["checkpoint_path"] = e.checkpoint_path;
  return d;
}

std::vector<std::pair<double, double>> coords_of(const TspInstance& inst) {
  std::vector<std::pair<double, double>> out;
  out.reserve(inst.xs.size());
  for (size_t i = 0; i < inst.xs.size(); ++i) out.emplace_back(inst.xs[i], inst.ys[i]);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CPU workbench for neural combinatorial optimization on 2D Euclidean TSP";
  m.attr("__version__") = kVersion;

  py::class_<TspInstance>(m, "Instance")
      .def(py::init([](const std::vector<std::pair<double, double>>& coords,
                       const std::string& id) {
             TspInstance inst;
             inst.id = id;
             for (const auto& [x, y] : coords) {
               inst.xs.push_back(x);
               inst.ys.push_back(y);
             }
             inst.validate();
             return inst;
           }),
           py::arg("coords"), py::arg("id") = "")
      .def_property_readonly("n", &TspInstance::n)
      .def_property_readonly("coords", &coords_of)
      .def_readonly("id", &TspInstance::id)
      .def("__len__", &TspInstance::n)
      .def("__repr__", [](const TspInstance& inst) {
        return "Instance(n=" + std::to_string(inst.n()) +
               (inst.id.empty() ? std::string() : ", id='" + inst.id + "'") + ")";
      });

  m.def(
      "sample_instances",
      [](int count, int n, uint64_t seed) {
        Rng rng(seed);
        return sample_instances(count, n, rng);
      },
      py::arg("count"), py::arg("n"), py::arg("seed") = 0,
      "Uniform instances on the unit square; deterministic in (count, n, seed).");

  m.def("tour_length", &tour_length, py::arg("instance"), py::arg("tour"));

  py::class_<ReferenceSolution>(m, "Solution")
      .def_readonly("tour", &ReferenceSolution::tour)
      .def_readonly("length", &ReferenceSolution::length)
      .def_property_readonly(
          "quality", [](const ReferenceSolution& s) { return std::string(to_string(s.quality)); })
      .def("__repr__", [](const ReferenceSolution& s) {
        return "Solution(length=" + std::to_string(s.length) + ", quality='" +
               to_string(s.quality) + "')";
      });

  m.def("brute_force", &brute_force, py::arg("instance"),
        py::call_guard<py::gil_scoped_release>(),
        "Exhaustive optimum over all (n-1)!/2 distinct tours; n <= 10.");
  m.def("held_karp", &held_karp, py::arg("instance"),
        py::call_guard<py::gil_scoped_release>(),
        "Exact bitmask dynamic program; n <= 20.");
  m.def("reference_tour", &reference_tour, py::arg("instance"),
        py::call_guard<py::gil_scoped_release>(),
        "Exact at n <= 20, furthest insertion refined by 2-opt beyond.");
  m.def(
      "insertion",
      [](const TspInstance& inst, const std::string& rule, uint64_t seed) {
        Rng rng(seed);
        return insertion(inst, insertion_rule_from_string(rule), rng);
      },
      py::arg("instance"), py::arg("rule") = "furthest", py::arg("seed") = 0);
  m.def(
      "two_opt",
      [](const TspInstance& inst, const Tour& start, int max_passes) {
        return two_opt(inst, start, max_passes);
      },
      py::arg("instance"), py::arg("start"), py::arg("max_passes") = 50,
      py::call_guard<py::gil_scoped_release>(),
      "First-improvement 2-opt refinement of a starting tour.");

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def(py::init([](std::vector<TspInstance> instances, std::vector<Tour> tours) {
             Dataset ds;
             ds.instances = std::move(instances);
             ds.tours = std::move(tours);
             ds.validate();
             return ds;
           }),
           py::arg("instances"), py::arg("tours") = std::vector<Tour>{})
      .def_readwrite("instances", &Dataset::instances)
      .def_readwrite("tours", &Dataset::tours)
      .def_property_readonly("labeled", &Dataset::labeled)
      .def("__len__", &Dataset::size)
      .def("__repr__", [](const Dataset& ds) {
        return "Dataset(" + std::to_string(ds.size()) + " instances" +
               (ds.labeled() ? ", labeled" : "") + ")";
      });

  m.def("read_dataset", &read_dataset, py::arg("path"),
        py::call_guard<py::gil_scoped_release>());
  m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("path"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<SearchResult>(m, "SearchResult")
      .def_readonly("tour", &SearchResult::tour)
      .def_readonly("length", &SearchResult::length)
      .def_readonly("log_prob", &SearchResult::log_prob)
      .def_readonly("step_probs", &SearchResult::step_probs)
      .def_readonly("fallback_count", &SearchResult::fallback_count)
      .def("__repr__", [](const SearchResult& r) {
        return "SearchResult(length=" + std::to_string(r.length) + ")";
      });

  py::class_<Model>(m, "Model")
      .def(py::init([](const py::object& config, uint64_t seed) {
             return Model(ModelConfig::from_json(as_json(config)), seed);
           }),
           py::arg("config"), py::arg("seed"),
           "config is a JSON string or dict; absent keys keep their defaults.")
      .def_static("load", &Model::load, py::arg("path"),
                  py::call_guard<py::gil_scoped_release>())
      .def("save", &Model::save, py::arg("path"), py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("config_json",
                             [](const Model& m_) { return m_.config().to_json().dump(); })
      .def_property_readonly("num_trainable", &Model::num_trainable)
      .def(
          "node_embeddings",
          [](const Model& m_, const TspInstance& inst) {
            Tensor<float> h = [&] {
              py::gil_scoped_release rel;
              return m_.node_embeddings(inst);
            }();
            std::vector<std::vector<float>> rows(h.rows, std::vector<float>(h.cols));
            for (int64_t i = 0; i < h.rows; ++i)
              for (int64_t j = 0; j < h.cols; ++j) rows[i][j] = h.at(i, j);
            return rows;
          },
          py::arg("instance"), "Inference-mode encoder output, one row per node.")
      .def(
          "heatmap",
          [](const Model& m_, const TspInstance& inst) {
            Heatmap hm = [&] {
              py::gil_scoped_release rel;
              return m_.heatmap(inst);
            }();
            std::vector<std::tuple<int, int, double>> edges;
            edges.reserve(hm.prob.size());
            for (int e = 0; e < hm.graph.num_edges(); ++e)
              edges.emplace_back(hm.graph.edge_src[e], hm.graph.edge_tgt[e], hm.prob[e]);
            return edges;
          },
          py::arg("instance"),
          "Directed sparse edges as (src, tgt, prob); absent edges have probability 0.")
      .def(
          "search",
          [](const Model& m_, const TspInstance& inst, const std::string& strategy, int width,
             const std::string& selection, uint64_t seed) {
            const SearchConfig cfg = make_search_config(strategy, width, selection, seed);
            py::gil_scoped_release rel;
            auto policy = m_.make_policy(inst);
            return run_search(*policy, inst, cfg);
          },
          py::arg("instance"), py::arg("strategy") = "greedy", py::arg("width") = 1,
          py::arg("selection") = "highest-probability", py::arg("seed") = 0)
      .def(
          "score_tour",
          [](const Model& m_, const TspInstance& inst, const Tour& tour) {
            py::gil_scoped_release rel;
            auto policy = m_.make_policy(inst);
            return score_tour(*policy, inst, tour);
          },
          py::arg("instance"), py::arg("tour"),
          "Sum of scored step log-probabilities under teacher forcing.")
      .def("__repr__", [](const Model& m_) {
        return "Model(" + to_string(m_.config().variant) + "/" +
               to_string(m_.config().decoder) + ", " +
               std::to_string(m_.num_trainable()) + " trainable)";
      });

  m.def(
      "train",
      [](Model& model, const py::object& config, const Dataset& data,
         const std::map<int, Dataset>& eval_sets, const std::string& out_dir) {
        TrainConfig tc = train_config_from_json(as_json(config));
        tc.out_dir = out_dir;
        const TrainResult result = [&] {
          py::gil_scoped_release rel;
          return train(model, tc, data, eval_sets);
        }();
        py::list epochs;
        for (const EpochStats& e : result.epochs) epochs.append(epoch_dict(e));
        return epochs;
      },
      py::arg("model"), py::arg("config"), py::arg("data") = Dataset{},
      py::arg("eval_sets") = std::map<int, Dataset>{}, py::arg("out_dir") = "",
      "Trains in place and returns per-epoch stats; config mirrors the config-file "
      "'train' section. out_dir empty: no checkpoint or log files.");

  m.def(
      "evaluate_json",
      [](const std::string& checkpoint, const std::vector<int>& sizes, int per_size,
         const std::string& strategy, int width, const std::string& selection, uint64_t seed,
         int threads, bool band) {
        const EvalOptions opts = make_eval_options(strategy, width, selection, seed, threads, band);
        py::gil_scoped_release rel;
        return evaluate(checkpoint, sizes, per_size, opts).to_json();
      },
      py::arg("checkpoint"), py::arg("sizes"), py::arg("per_size"),
      py::arg("strategy") = "greedy", py::arg("width") = 1,
      py::arg("selection") = "highest-probability", py::arg("seed") = 0, py::arg("threads") = 1,
      py::arg("band") = false,
      "Self-contained protocol run against freshly sampled instances; returns report JSON.");

  m.def(
      "evaluate_dataset_json",
      [](const Model& model, const std::string& label, const Dataset& ds,
         const std::string& strategy, int width, const std::string& selection, uint64_t seed,
         int threads, bool band) {
        const EvalOptions opts = make_eval_options(strategy, width, selection, seed, threads, band);
        py::gil_scoped_release rel;
        return evaluate_on(model, label, group_by_size(ds), opts).to_json();
      },
      py::arg("model"), py::arg("label"), py::arg("dataset"), py::arg("strategy") = "greedy",
      py::arg("width") = 1, py::arg("selection") = "highest-probability", py::arg("seed") = 0,
      py::arg("threads") = 1, py::arg("band") = false,
      "Evaluates against a labeled dataset's reference tours; returns report JSON.");

  m.def("checkpoint_id", &checkpoint_id, py::arg("path"),
        "Short stable identifier: basename plus a hash of the bytes.");

  m.def(
      "instance_svg",
      [](const TspInstance& inst, const std::optional<Tour>& reference,
         const std::optional<Tour>& predicted, const std::string& title) {
        VizOptions opts;
        opts.reference = reference ? &*reference : nullptr;
        opts.predicted = predicted ? &*predicted : nullptr;
        opts.title = title;
        return instance_svg(inst, opts);
      },
      py::arg("instance"), py::arg("reference") = py::none(), py::arg("predicted") = py::none(),
      py::arg("title") = "");
}
