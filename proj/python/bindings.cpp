#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "tubeil/commands.hpp"
#include "tubeil/dataset.hpp"
#include "tubeil/lqr.hpp"
#include "tubeil/pipeline.hpp"

namespace py = pybind11;
using namespace tubeil;

namespace {

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["episodes"] = r.episodes;
  d["success_rate"] = r.success_rate;
  d["expert_gap"] = r.expert_gap;
  d["pos_mse"] = r.pos_mse;
  d["vel_mse"] = r.vel_mse;
  d["softened_steps"] = r.softened_steps;
  return d;
}

py::dict box_dict(const IntervalBox& b) {
  py::dict d;
  d["lower"] = Vec(b.lower());
  d["upper"] = Vec(b.upper());
  return d;
}

py::array_t<float> block(const std::vector<float>& v, int rows, int cols) {
  py::array_t<float> a({rows, cols});
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

// Owns the setup so that evaluation can hand out references to it.
struct PySetup {
  std::shared_ptr<const Setup> s;
};

}  // namespace

PYBIND11_MODULE(_tubeil, m) {
  m.doc() = "Robust tube MPC expert and tube-guided imitation learning";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("config_json", [](const std::string& text) { return config_to_json(parse_config(text)); },
        py::arg("json_text") = "{}", "Fully resolved config as JSON text.");
  m.def("config_hash", [](const std::string& text) { return parse_config(text).hash(); },
        py::arg("json_text") = "{}");
  m.def("solve_dare", [](const Mat& a, const Mat& b, const Mat& q, const Mat& r) { return solve_dare(a, b, q, r); },
        py::arg("a"), py::arg("b"), py::arg("q"), py::arg("r"));
  m.def(
      "load_dataset",
      [](const std::string& dir, const std::string& expected_hash) {
        const Dataset d = load_dataset(dir, expected_hash);
        const int n = d.size();
        py::dict out;
        out["images"] = block(d.images, n, d.image_size);
        out["other"] = block(d.other, n, d.n_other);
        out["ref"] = block(d.ref, n, d.n_ref);
        out["u"] = block(d.u, n, d.n_action);
        out["x"] = block(d.x, n, d.n_state);
        return out;
      },
      py::arg("dir"), py::arg("expected_hash") = "");
  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "tubeil");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        py::gil_scoped_release release;
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs the command-line tool in process and returns its exit code.");

  py::class_<PySetup>(m, "Setup")
      .def(py::init([](const std::string& text) {
             py::gil_scoped_release release;
             return PySetup{std::make_shared<const Setup>(make_setup(parse_config(text)))};
           }),
           py::arg("json_text") = "{}")
      .def_property_readonly("config_hash", [](const PySetup& p) { return p.s->cfg.hash(); })
      .def_property_readonly("steps", [](const PySetup& p) { return p.s->steps(); })
      .def_property_readonly("lqr_gain", [](const PySetup& p) { return p.s->lqr.k; })
      .def_property_readonly("observer_gain", [](const PySetup& p) { return p.s->observer_gain; })
      .def_property_readonly("tube", [](const PySetup& p) { return box_dict(p.s->tube.z); })
      .def_property_readonly("state_tight", [](const PySetup& p) { return box_dict(p.s->tube.x_tight); })
      .def_property_readonly("input_tight", [](const PySetup& p) { return box_dict(p.s->tube.u_tight); })
      .def(
          "render",
          [](const PySetup& p, const Vec& x) {
            if (x.size() != kNx) throw ShapeMismatch("render: state must have 8 entries");
            const Image img = render(p.s->rig.camera_pose(x), p.s->rig.intr, p.s->rig.scene);
            return block(img.pixels, img.height, img.width);
          },
          py::arg("state"), "Camera image of the given state, rows x columns in [0, 1].")
      .def(
          "evaluate",
          [](const PySetup& p, const std::string& env, int episodes, std::uint64_t seed, const std::string& checkpoint) {
            const EnvConfig e = make_env(env, p.s->cfg.wind);
            std::unique_ptr<PolicyNet> net;
            if (!checkpoint.empty()) net = std::make_unique<PolicyNet>(load_checkpoint(checkpoint, p.s->cfg.hash()));
            EvalReport r;
            {
              py::gil_scoped_release release;
              r = evaluate(*p.s, e, net.get(), episodes, seed);
            }
            return report_dict(r);
          },
          py::arg("env") = "noise", py::arg("episodes") = 5, py::arg("seed") = 0, py::arg("checkpoint") = "",
          "Expert (no checkpoint) or learner evaluation.");
}
