// cfdir._core: the numerical engine for Python. Structured values cross the
// boundary as JSON text in the same document formats the CLI writes; the
// cfdir package turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cfdir/error.hpp"
#include "cfdir/experiment.hpp"
#include "cfdir/io.hpp"
#include "cfdir/losses.hpp"
#include "cfdir/model.hpp"

namespace py = pybind11;
using namespace cfdir;

namespace {

using Point = std::pair<double, double>;

std::vector<LabeledExample> examples(const std::vector<Point>& points, const std::vector<int>& labels) {
  if (points.size() != labels.size())
    throw Error(ErrorKind::Input, "points and labels differ in length", "labels");
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error(ErrorKind::Input, "labels must be 0 or 1", "labels");
    out.push_back({Vec2(points[i].first, points[i].second), labels[i]});
  }
  return out;
}

py::tuple loss_tuple(const LossValue& v) { return py::make_tuple(v.value, v.gradient.flatten()); }

struct PyError {
  static void translate(const Error& e) {
    std::string msg = std::string(to_string(e.kind())) + " error";
    if (!e.field().empty()) msg += " (" + e.field() + ")";
    msg += ": " + std::string(e.what());
    PyErr_SetString(PyExc_ValueError, msg.c_str());
  }
};

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Counterfactual-direction training engine";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyError::translate(e);
    }
  });

  py::class_<ModelParams>(m, "Model")
      .def(py::init([](const std::string& config_json) {
             return init_params(model_config_from_json(parse_json(config_json)));
           }),
           py::arg("config_json") = "{}")
      .def_static("from_text", [](const std::string& text) { return parse_params(text); })
      .def("to_text", &serialize_params)
      .def_property_readonly("parameter_count", &ModelParams::parameter_count)
      .def("flat", &ModelParams::flatten)
      .def("set_flat", [](ModelParams& p, const std::vector<double>& v) { p.assign_flat(v); })
      .def("forward", [](const ModelParams& p, double x, double y) { return forward(p, Vec2(x, y)); })
      .def("input_gradient",
           [](const ModelParams& p, double x, double y) {
             const Vec2 g = input_gradient(p, Vec2(x, y));
             return Point(g.x(), g.y());
           })
      .def("directional_derivative",
           [](const ModelParams& p, double x, double y, double dx, double dy) {
             return directional_derivative(p, Vec2(x, y), Direction::from_vector(Vec2(dx, dy)));
           })
      .def("param_gradient",
           [](const ModelParams& p, double x, double y) { return param_gradient_of(p, ForwardAt{Vec2(x, y)}).flatten(); })
      .def("directional_param_gradient", [](const ModelParams& p, double x, double y, double dx, double dy) {
        return param_gradient_of(p, DirectionalAt{Vec2(x, y), Direction::from_vector(Vec2(dx, dy))}).flatten();
      });

  m.def("direction_term", &direction_term, py::arg("label"), py::arg("directional"), py::arg("c") = 20.0);

  m.def(
      "bce_loss",
      [](const ModelParams& p, const std::vector<Point>& points, const std::vector<int>& labels) {
        return loss_tuple(bce_loss(p, examples(points, labels)));
      },
      py::arg("model"), py::arg("points"), py::arg("labels"));

  // annotations: (example_index, dx, dy) triples
  m.def(
      "direction_loss",
      [](const ModelParams& p, const std::vector<Point>& points, const std::vector<int>& labels,
         const std::vector<std::tuple<std::size_t, double, double>>& annotations, double c) {
        const auto train = examples(points, labels);
        std::vector<DirectionAnnotation> ann;
        for (const auto& [idx, dx, dy] : annotations) {
          if (idx >= train.size()) throw Error(ErrorKind::Index, "example_index out of range", "annotations");
          ann.push_back({idx, Direction::from_vector(Vec2(dx, dy)), ann.size() + 1, 0});
        }
        return loss_tuple(direction_loss(p, train, ann, LossConfig{c, 1.0}));
      },
      py::arg("model"), py::arg("points"), py::arg("labels"), py::arg("annotations"), py::arg("c") = 20.0);

  m.def("default_config", [] { return dump(to_json(SessionConfig{})); });

  m.def("generate_dataset", [](const std::string& spec_json) {
    const DatasetSpec spec = dataset_spec_from_json(parse_json(spec_json));
    spec.validate();
    return dump(dataset_document(generate(spec)));
  });

  // Returns (record document, metrics document, params text).
  m.def(
      "run_training",
      [](const std::string& config_json, const std::string& script_text, const std::string& name,
         const std::string& created) {
        const SessionConfig cfg = session_config_from_json(parse_json(config_json));
        const AnnotationScript script = script_text.empty() ? AnnotationScript{} : parse_annotation_script(script_text);
        py::gil_scoped_release release;
        const TrainingRun run = run_training(cfg, script, name, created);
        return std::make_tuple(dump(experiment_document(run.record)), dump(metrics_document(run.state.history)),
                               serialize_params(run.state.params));
      },
      py::arg("config_json"), py::arg("script_text") = "", py::arg("name") = "python",
      py::arg("created") = "1970-01-01T00:00:00Z");

  // Returns (comparison document, table text).
  m.def(
      "compare",
      [](const std::string& config_json, const std::string& script_text, std::size_t n_seeds, std::size_t threads) {
        const SessionConfig cfg = session_config_from_json(parse_json(config_json));
        const AnnotationScript script = script_text.empty() ? AnnotationScript{} : parse_annotation_script(script_text);
        py::gil_scoped_release release;
        const ComparisonResult r = run_comparison(cfg, script, n_seeds, threads);
        return std::make_pair(comparison_document(r, cfg), format_comparison_table(r));
      },
      py::arg("config_json"), py::arg("script_text") = "", py::arg("n_seeds") = 20, py::arg("threads") = 0);
}
