#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "embforge/codec.hpp"
#include "embforge/config.hpp"
#include "embforge/errors.hpp"
#include "embforge/fixture.hpp"
#include "embforge/geom3d.hpp"
#include "embforge/pipeline.hpp"
#include "embforge/sequence.hpp"
#include "embforge/vocab.hpp"

namespace py = pybind11;
using namespace embforge;

namespace {

using Ranges = std::vector<std::pair<double, double>>;

WorkspaceBounds to_bounds(const std::optional<Ranges>& ranges) {
  if (!ranges) return WorkspaceBounds::unit();
  if (ranges->size() != 3) throw InvalidInput("bounds must be three (lo, hi) pairs");
  std::array<AxisRange, 3> r;
  for (int a = 0; a < 3; ++a) r[a] = {(*ranges)[a].first, (*ranges)[a].second};
  return WorkspaceBounds::uniform(r);
}

std::vector<tokens::TokenId> token_ids(const std::string& text) {
  std::vector<tokens::TokenId> ids;
  for (const auto& piece : tokens::lex(text)) {
    if (const auto* id = std::get_if<tokens::TokenId>(&piece)) ids.push_back(*id);
    else if (std::get<std::string>(piece).find_first_not_of(" \t\r\n") != std::string::npos)
      throw InvalidInput("unexpected text among tokens: " + std::get<std::string>(piece));
  }
  return ids;
}

std::string render_ids(const std::vector<tokens::TokenId>& ids) {
  std::string out;
  for (auto id : ids) out += tokens::Vocab::instance().text(id);
  return out;
}

ActionStep to_step(const std::vector<double>& v) {
  if (v.size() != 7) throw InvalidInput("an action step has 7 values");
  if (v[6] != 0 && v[6] != 1) throw InvalidInput("gripper must be 0 or 1");
  return {Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]), static_cast<int>(v[6])};
}

Aabb3 to_box(const std::array<double, 3>& lo, const std::array<double, 3>& hi) {
  return {Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2])};
}

/// Non-finite or non-positive entries are treated as missing depth.
DepthMap to_depth(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw InvalidInput("depth must be a 2-D array");
  DepthMap d(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  const double* p = a.data();
  for (std::size_t i = 0; i < d.pixel_count(); ++i)
    if (std::isfinite(p[i]) && p[i] > 0) {
      d.values[i] = p[i];
      d.valid[i] = 1;
    }
  return d;
}

CameraModel to_camera(double fx, double fy, double cx, double cy, int width, int height,
                      const std::optional<py::array_t<double, py::array::c_style | py::array::forcecast>>& pose) {
  CameraModel cam{fx, fy, cx, cy, width, height, {}};
  if (pose) {
    const auto& m = *pose;
    if (m.ndim() != 2 || m.shape(1) != 4 || (m.shape(0) != 3 && m.shape(0) != 4))
      throw InvalidInput("pose must be 3x4 or 4x4");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.pose.rotation(r, c) = m.at(r, c);
      cam.pose.translation[r] = m.at(r, 3);
    }
  }
  return cam;
}

py::object from_json(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

Config to_config(const std::optional<py::dict>& options) {
  Config cfg;
  if (options) {
    const nlohmann::json j = to_json(*options);
    for (const auto& [k, v] : j.items()) cfg.set(k, v);
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_embforge, m) {
  m.doc() = "3D embodied instruction-tuning dataset construction";

  // Kept alive by the module attributes below for the life of the process.
  static PyObject* parse_error = PyErr_NewException("embforge.ParseError", PyExc_ValueError, nullptr);
  static PyObject* load_error = PyErr_NewException("embforge.EpisodeLoadError", PyExc_ValueError, nullptr);
  m.attr("ParseError") = py::handle(parse_error);
  m.attr("EpisodeLoadError") = py::handle(load_error);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      py::object err = py::handle(parse_error)(e.what());
      err.attr("index") = e.index();
      PyErr_SetObject(parse_error, err.ptr());
    } catch (const EpisodeLoadError& e) {
      py::object err = py::handle(load_error)(e.what());
      err.attr("field") = e.field();
      PyErr_SetObject(load_error, err.ptr());
    } catch (const AlignmentUnreliable& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    } catch (const IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    }
  });

  m.def("vocab_size", [] { return tokens::Vocab::instance().size(); });
  m.def("vocab_json", [] { return tokens::Vocab::instance().to_json(); });

  m.def("quantize", [](double x, double lo, double hi) { return tokens::quantize(x, lo, hi).bin; }, py::arg("x"),
        py::arg("lo"), py::arg("hi"));
  m.def("dequantize", &tokens::dequantize, py::arg("bin"), py::arg("lo"), py::arg("hi"));

  m.def(
      "encode_actions",
      [](const std::vector<std::vector<double>>& steps, const std::optional<Ranges>& bounds) {
        std::vector<ActionStep> s;
        for (const auto& v : steps) s.push_back(to_step(v));
        return render_ids(tokens::encode_action_seq(s, to_bounds(bounds)).tokens);
      },
      py::arg("steps"), py::arg("bounds") = py::none(),
      "Action steps [x, y, z, roll, pitch, yaw, gripper] to one token string.");
  m.def(
      "decode_actions",
      [](const std::string& text, const std::optional<Ranges>& bounds) {
        std::vector<std::vector<double>> out;
        for (const auto& s : tokens::decode_action_seq(token_ids(text), to_bounds(bounds)))
          out.push_back({s.position.x(), s.position.y(), s.position.z(), s.rotation.x(), s.rotation.y(),
                         s.rotation.z(), double(s.gripper)});
        return out;
      },
      py::arg("tokens"), py::arg("bounds") = py::none());
  m.def(
      "encode_box",
      [](const std::array<double, 3>& lo, const std::array<double, 3>& hi, const std::optional<Ranges>& bounds) {
        return render_ids(tokens::encode_bbox(to_box(lo, hi), to_bounds(bounds)).tokens);
      },
      py::arg("min"), py::arg("max"), py::arg("bounds") = py::none());
  m.def(
      "decode_box",
      [](const std::string& text, const std::optional<Ranges>& bounds) {
        const auto d = tokens::decode_bbox(token_ids(text), to_bounds(bounds));
        return py::make_tuple(std::array<double, 3>{d.box.min.x(), d.box.min.y(), d.box.min.z()},
                              std::array<double, 3>{d.box.max.x(), d.box.max.y(), d.box.max.z()});
      },
      py::arg("tokens"), py::arg("bounds") = py::none());
  m.def(
      "canonicalize", [](const std::string& text) { return tokens::render(tokens::parse(text)); }, py::arg("text"),
      "Parses an interleaved sequence and renders it back; raises ParseError.");

  m.def(
      "iou3d",
      [](const std::array<double, 3>& amin, const std::array<double, 3>& amax, const std::array<double, 3>& bmin,
         const std::array<double, 3>& bmax) { return geom3d::iou3d(to_box(amin, amax), to_box(bmin, bmax)); },
      py::arg("a_min"), py::arg("a_max"), py::arg("b_min"), py::arg("b_max"));

  m.def(
      "unproject",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& depth, double fx, double fy, double cx,
         double cy, const std::optional<py::array_t<double, py::array::c_style | py::array::forcecast>>& pose) {
        const DepthMap d = to_depth(depth);
        const PointCloud pc = geom3d::unproject(d, to_camera(fx, fy, cx, cy, d.width, d.height, pose));
        py::array_t<double> out({static_cast<py::ssize_t>(pc.size()), py::ssize_t{3}});
        auto w = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < pc.size(); ++i)
          for (int a = 0; a < 3; ++a) w(i, a) = pc.points[i][a];
        return out;
      },
      py::arg("depth"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("pose") = py::none(),
      "World points (N x 3) of every valid pixel in row-major order.");

  m.def(
      "align_depth_scales",
      [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& depths,
         const py::array_t<bool, py::array::c_style | py::array::forcecast>& background) {
        std::vector<DepthMap> maps;
        for (const auto& d : depths) maps.push_back(to_depth(d));
        if (background.ndim() != 2) throw InvalidInput("background must be a 2-D array");
        geom3d::BackgroundMask bg{static_cast<int>(background.shape(1)), static_cast<int>(background.shape(0)), {}};
        const bool* p = background.data();
        bg.is_background.assign(p, p + background.size());
        return geom3d::align_depth_scales(std::span<const DepthMap>(maps), bg).coefficients;
      },
      py::arg("depths"), py::arg("background"));

  m.def(
      "load_episode",
      [](const std::filesystem::path& manifest) {
        const Episode e = pipeline::load_episode(manifest);
        py::dict d;
        d["id"] = e.id;
        d["dataset"] = e.dataset;
        d["instruction"] = e.instruction;
        d["frames"] = e.frames.size();
        d["actions"] = e.actions.size();
        std::size_t dets = 0;
        for (const auto& f : e.detections) dets += f.size();
        d["detections"] = dets;
        d["qa"] = e.qa.size();
        return d;
      },
      py::arg("manifest"), "Loads and validates a manifest; returns a summary dict.");

  m.def(
      "annotate",
      [](const std::vector<std::filesystem::path>& manifests, const std::filesystem::path& out_dir,
         const std::optional<py::dict>& options) {
        const Config cfg = to_config(options);
        pipeline::DatasetReport report;
        {
          py::gil_scoped_release release;
          report = pipeline::run(manifests, cfg, out_dir);
        }
        return from_json(report.to_json());
      },
      py::arg("manifests"), py::arg("out_dir"), py::arg("options") = py::none(),
      "Annotates episodes and exports a dataset. `options` uses the flat dotted config keys.");

  m.def(
      "validate",
      [](const std::filesystem::path& dir) { return from_json(pipeline::validate_dataset(dir).to_json()); },
      py::arg("dir"));

  m.def(
      "stats",
      [](const std::filesystem::path& dir) {
        const auto s = pipeline::stats(dir);
        nlohmann::ordered_json j;
        j["by_task"] = s.by_task;
        j["by_dataset"] = s.by_dataset;
        j["total"] = s.total;
        return from_json(j);
      },
      py::arg("dir"));

  m.def(
      "make_fixture",
      [](const std::filesystem::path& out_dir, std::size_t episodes, std::size_t frames, int width, int height,
         std::uint64_t seed) {
        return fixture::write_fixture(out_dir, {episodes, frames, width, height, seed});
      },
      py::arg("out_dir"), py::arg("episodes") = 10, py::arg("frames") = 10, py::arg("width") = 160,
      py::arg("height") = 120, py::arg("seed") = 7, "Writes synthetic cuboid episodes; returns manifest paths.");
}
