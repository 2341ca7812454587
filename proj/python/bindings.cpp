#include <cstring>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <torch/torch.h>

#include "compvid/cli.hpp"
#include "compvid/datagen.hpp"
#include "compvid/decoder.hpp"
#include "compvid/errors.hpp"
#include "compvid/evalkit.hpp"
#include "compvid/latent.hpp"
#include "compvid/training.hpp"

namespace py = pybind11;
using namespace compvid;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const F64Array& a) {
  std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

py::array_t<double> to_array(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat64).contiguous();
  py::array_t<double> out(std::vector<py::ssize_t>(c.sizes().begin(), c.sizes().end()));
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), sizeof(double) * c.numel());
  return out;
}

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

py::array_t<std::uint8_t> frames_array(const VideoSequence& s) {
  py::array_t<std::uint8_t> out({s.num_frames, s.height, s.width, 3});
  std::memcpy(out.mutable_data(), s.frames.data(), s.frames.size());
  return out;
}

py::array_t<float> centers_array(const VideoSequence& s) {
  py::array_t<float> out({s.num_frames, s.num_entities, 2});
  std::memcpy(out.mutable_data(), s.centers.data(), s.centers.size() * sizeof(float));
  return out;
}

py::dict result_dict(const BestOfKResult& r) {
  py::dict d;
  d["k"] = r.k;
  d["horizon"] = r.horizon;
  d["loc_best"] = to_array(r.loc_best);
  d["loc_mean"] = to_array(r.loc_mean);
  d["loc_sigma"] = to_array(r.loc_sigma);
  d["frame_best"] = to_array(r.frame_best);
  d["frame_mean"] = to_array(r.frame_mean);
  d["top5_mean"] = to_array(r.top5_mean);
  d["loc_mean_latent"] = to_array(r.loc_mean_latent);
  d["best_loc_index"] = r.best_loc_index;
  d["final_center_sigma"] = r.final_center_sigma;
  d["sample_centers"] = to_array(r.sample_centers);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Entity-factorized stochastic video prediction";
  torch::set_num_threads(1);

  auto base = py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<IncompatibleEntityCount>(m, "IncompatibleEntityCount", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<VideoSequence>(m, "VideoSequence")
      .def_readonly("num_frames", &VideoSequence::num_frames)
      .def_readonly("height", &VideoSequence::height)
      .def_readonly("width", &VideoSequence::width)
      .def_readonly("num_entities", &VideoSequence::num_entities)
      .def_readonly("meta", &VideoSequence::meta)
      .def_property_readonly("horizon", &VideoSequence::horizon)
      .def_property_readonly("frames", &frames_array, "uint8 [T+1, H, W, 3]")
      .def_property_readonly("centers", &centers_array, "float32 [T+1, N, 2] in [0, 1]")
      .def("__eq__", [](const VideoSequence& a, const VideoSequence& b) { return a == b; });

  m.def(
      "generate_sequence",
      [](std::uint64_t seed, int n_blocks, int horizon, int canvas, double p_unstable, double p_ambiguous) {
        GeneratorParams g;
        g.horizon = horizon;
        g.canvas = canvas;
        g.p_unstable = p_unstable;
        g.p_ambiguous = p_ambiguous;
        return generate_sequence(seed, n_blocks, g);
      },
      py::arg("seed"), py::arg("n_blocks") = 3, py::arg("horizon") = 16, py::arg("canvas") = 64,
      py::arg("p_unstable") = 0.7, py::arg("p_ambiguous") = 0.5);
  m.def("write_sequence", &write_sequence, py::arg("sequence"), py::arg("path"));
  m.def("load_sequence", &load_sequence, py::arg("path"));

  m.def(
      "compose",
      [](const F64Array& bg, const F64Array& feats, const F64Array& masks) {
        return to_array(compose(to_tensor(bg), to_tensor(feats), to_tensor(masks)));
      },
      py::arg("background"), py::arg("features"), py::arg("masks"),
      "bg [B,C,H,W], features [B,N,C,H,W], masks [B,N,1,H,W] -> [B,C,H,W]");
  m.def(
      "warp_to_frame",
      [](const F64Array& patches, const F64Array& centers, double extent, int height, int width) {
        return to_array(warp_to_frame(to_tensor(patches), to_tensor(centers), extent, height, width));
      },
      py::arg("patches"), py::arg("centers"), py::arg("extent"), py::arg("height"), py::arg("width"));
  m.def(
      "kl_to_standard",
      [](const F64Array& mean, const F64Array& log_sigma) {
        return to_array(kl_to_standard({to_tensor(mean), to_tensor(log_sigma)}));
      },
      py::arg("mean"), py::arg("log_sigma"));
  m.def(
      "location_error",
      [](const F64Array& pred, const F64Array& gt) { return to_array(location_error(to_tensor(pred), to_tensor(gt))); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "frame_error",
      [](const F64Array& pred, const F64Array& gt, const std::string& metric) {
        return to_array(frame_error(to_tensor(pred), to_tensor(gt), metric));
      },
      py::arg("pred"), py::arg("gt"), py::arg("metric") = "l1");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("step", &Checkpoint::step)
      .def_property_readonly("config", [](const Checkpoint& c) { return c.config.to_key_values(); })
      .def(
          "best_of_k",
          [](Checkpoint& c, const VideoSequence& seq, std::int64_t k, std::uint64_t seed, std::int64_t horizon,
             bool frames) {
            NoiseStream noise(seed);
            BestOfKOptions o;
            o.horizon = horizon;
            o.frames = frames;
            BestOfKResult r;
            {
              py::gil_scoped_release release;
              r = best_of_k(c.model, seq, k, noise, o);
            }
            return result_dict(r);
          },
          py::arg("sequence"), py::arg("k") = 100, py::arg("seed") = 0, py::arg("horizon") = 0,
          py::arg("frames") = true);
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return run_cli(args);
      },
      py::arg("args"), "Runs a compvid subcommand and returns its exit code.");
}
