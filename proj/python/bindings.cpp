#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "stv/ablation.hpp"
#include "stv/error.hpp"
#include "stv/io.hpp"
#include "stv/metrics.hpp"
#include "stv/streaming.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

stv::Tensor to_tensor(const Array& a) {
  stv::Shape dims(a.shape(), a.shape() + a.ndim());
  std::vector<double> data(a.data(), a.data() + a.size());
  return stv::Tensor(std::move(dims), std::move(data));
}

Array to_array(const stv::Tensor& t) {
  std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

constexpr std::uint64_t kModelSeed = 2024;

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Streaming long-video generation toolkit (toy scale)";

  static py::exception<stv::FormatError> format_error(m, "FormatError", PyExc_ValueError);
  static py::exception<stv::DomainError> domain_error(m, "DomainError", PyExc_ValueError);
  static py::exception<stv::ShapeError> shape_error(m, "ShapeError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const stv::FormatError& e) {
      py::set_error(format_error, e.what());
    } catch (const stv::DomainError& e) {
      py::set_error(domain_error, e.what());
    } catch (const stv::ShapeError& e) {
      py::set_error(shape_error, e.what());
    }
  });

  py::class_<stv::Schedule>(m, "Schedule")
      .def_readonly("T", &stv::Schedule::T)
      .def_readonly("beta", &stv::Schedule::beta)
      .def_readonly("alpha_bar", &stv::Schedule::alpha_bar)
      .def("alpha_bar_at", &stv::Schedule::alpha_bar_at, "t"_a);
  m.def("make_schedule", &stv::make_schedule, "T"_a = 1000, "beta0"_a = 0.0085, "betaT"_a = 0.0120);

  m.def(
      "forward_diffuse",
      [](const Array& x0, int t, const Array& eps, const stv::Schedule& s) {
        return to_array(stv::forward_diffuse(to_tensor(x0), t, to_tensor(eps), s));
      },
      "x0"_a, "t"_a, "eps"_a, "schedule"_a);
  m.def("ddim_timesteps", &stv::ddim_timesteps, "t_start"_a, "steps"_a);
  m.def(
      "cfg_epsilon",
      [](const Array& e_null, const Array& e_text, const Array& e_full, double omega_text, double omega_anchor) {
        return to_array(stv::cfg_epsilon(to_tensor(e_null), to_tensor(e_text), to_tensor(e_full), {omega_text, omega_anchor}));
      },
      "e_null"_a, "e_text"_a, "e_full"_a, "omega_text"_a = 7.5, "omega_anchor"_a = 7.5);
  m.def(
      "sample_gaussian_oracle",
      [](const Array& mu, double sigma2, std::uint64_t seed, int steps, double eta) {
        const stv::Schedule s = stv::make_schedule();
        const stv::Tensor m0 = to_tensor(mu);
        const stv::OraclePredictor oracle({m0, sigma2}, s);
        stv::RngStream rng(seed);
        const stv::Tensor x_T = stv::gaussian(rng, m0.dims());
        return to_array(stv::ddim_sample(x_T, s.T, oracle, s, {steps, eta}, rng));
      },
      "mu"_a, "sigma2"_a, "seed"_a, "steps"_a = 50, "eta"_a = 1.0,
      "DDIM sample from pure noise with the closed-form denoiser for N(mu, sigma2).");

  py::class_<stv::GenerationResult>(m, "GenerationResult")
      .def_property_readonly("video", [](const stv::GenerationResult& r) { return to_array(r.video); })
      .def_readonly("chunks", &stv::GenerationResult::chunks);
  m.def(
      "generate",
      [](const std::string& prompt, std::size_t frames, std::uint64_t seed, int steps, bool cam, bool apm) {
        stv::UNetConfig uc;
        stv::StreamingModel model = stv::make_streaming_model(uc, kModelSeed, cam, apm);
        model.sampler.steps = steps;
        stv::GenerationPlan plan;
        plan.total_frames = frames;
        plan.prompt = prompt;
        plan.seed = seed;
        py::gil_scoped_release release;
        return stv::generate_video(plan, model);
      },
      "prompt"_a, "frames"_a, "seed"_a = 0, "steps"_a = 50, "cam"_a = true, "apm"_a = true);

  m.def(
      "split_into_chunks", [](std::size_t total, std::size_t F_enh, std::size_t O) { return stv::split_into_chunks(total, F_enh, O).starts; },
      "total"_a, "F_enh"_a = 24, "O"_a = 8);
  m.def(
      "randomized_blend",
      [](const Array& xL, const Array& xR, std::size_t O, std::size_t f_thr) {
        return to_array(stv::randomized_blend(to_tensor(xL), to_tensor(xR), O, f_thr));
      },
      "xL"_a, "xR"_a, "O"_a, "f_thr"_a);
  m.def(
      "refine",
      [](const Array& video, const std::string& mode, std::uint64_t seed, int tprime, int steps) {
        const stv::Tensor v = to_tensor(video);
        if (v.rank() != 4) throw stv::ShapeError("refine: expected an F x h x w x c video");
        const stv::Schedule s = stv::make_schedule();
        stv::VideoPriorConfig pc;
        pc.height = v.dim(1);
        pc.width = v.dim(2);
        pc.channels = v.dim(3);
        const stv::VideoPriorPredictor denoiser(pc, s);
        stv::RefineOptions opt;
        opt.t_prime = tprime;
        opt.sampler.steps = steps;
        const stv::BlendMode bm = stv::parse_blend_mode(mode);
        stv::Tensor out;
        {
          py::gil_scoped_release release;
          out = stv::refine_video(v, bm, denoiser, s, opt, stv::RngStream(seed));
        }
        return to_array(out);
      },
      "video"_a, "mode"_a = "randomized", "seed"_a = 0, "tprime"_a = 600, "steps"_a = 50);
  m.def(
      "toy_video", [](std::size_t frames, std::size_t h, std::size_t w, std::size_t c) { return to_array(stv::toy_video(frames, h, w, c)); },
      "frames"_a, "h"_a = 16, "w"_a = 16, "c"_a = 1);

  m.def("ofs", [](const Array& v) { return stv::ofs(to_tensor(v)); }, "video"_a);
  m.def("warp_error", [](const Array& v) { return stv::warp_error(to_tensor(v)); }, "video"_a);
  m.def("mawe", [](const Array& v) { return stv::mawe(to_tensor(v)); }, "video"_a);
  m.def("scuts", [](const Array& v) { return stv::scuts(to_tensor(v)); }, "video"_a);
  m.def("flow_std", [](const Array& v) { return stv::flow_std_smoothness(to_tensor(v)); }, "video"_a);
  m.def("reid_score", &stv::reid_score, "detections"_a);
  m.def(
      "optical_flow",
      [](const Array& a, const Array& b) {
        const stv::FlowField f = stv::optical_flow(to_tensor(a), to_tensor(b));
        return py::make_tuple(to_array(f.u), to_array(f.v));
      },
      "a"_a, "b"_a);

  m.def("read_container", [](const std::filesystem::path& p) { return to_array(stv::read_container(p)); }, "path"_a);
  m.def(
      "write_container", [](const std::filesystem::path& p, const Array& a) { stv::write_container(p, to_tensor(a)); }, "path"_a,
      "array"_a);
  m.def(
      "xt_slice",
      [](const Array& v, std::size_t row) {
        const stv::GrayImage img = stv::xt_slice(to_tensor(v), row);
        py::array_t<std::uint8_t> out({img.height, img.width});
        std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
        return out;
      },
      "video"_a, "row"_a);
}
