#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "roadflood/bench.hpp"
#include "roadflood/error.hpp"
#include "roadflood/metrics.hpp"
#include "roadflood/model_opt.hpp"
#include "roadflood/pipeline.hpp"
#include "roadflood/roadnet.hpp"
#include "roadflood/water_index.hpp"

namespace py = pybind11;
using namespace roadflood;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::span<const float> view(const FloatArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "roadflood native core";

  py::register_exception<Error>(m, "RoadfloodError", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "ndwi",
      [](const FloatArray& green, const FloatArray& nir) {
        if (green.size() != nir.size()) throw InvalidArgument("green and nir sizes differ");
        const auto out = water::ndwi(view(green), view(nir));
        py::array_t<float> arr(std::vector<py::ssize_t>(green.shape(), green.shape() + green.ndim()));
        std::copy(out.begin(), out.end(), arr.mutable_data());
        return arr;
      },
      py::arg("green"), py::arg("nir"));

  m.def(
      "threshold_mask",
      [](const FloatArray& grid, float threshold) {
        if (grid.ndim() != 2) throw InvalidArgument("expected a 2-D grid");
        const int h = static_cast<int>(grid.shape(0));
        const int w = static_cast<int>(grid.shape(1));
        // Only the values go back to Python, so any valid grid will do.
        const GeoTransform unit_grid{0.0, 0.0, 1.0, 1.0, 32643};
        const auto mask = water::threshold_mask(view(grid), w, h, unit_grid, threshold);
        py::array_t<std::uint8_t> arr({h, w});
        std::copy(mask.values().begin(), mask.values().end(), arr.mutable_data());
        return arr;
      },
      py::arg("ndwi"), py::arg("threshold") = water::kDefaultThreshold);

  m.def(
      "dice",
      [](const FloatArray& p, const FloatArray& g, double smooth) { return segnet::dice_coeff<float>(view(p), view(g), smooth); },
      py::arg("probs"), py::arg("targets"), py::arg("smooth") = segnet::kDefaultSmooth);
  m.def(
      "jaccard",
      [](const FloatArray& p, const FloatArray& g, double smooth) {
        return segnet::jaccard_coeff<float>(view(p), view(g), smooth);
      },
      py::arg("probs"), py::arg("targets"), py::arg("smooth") = segnet::kDefaultSmooth);

  m.def(
      "sparsity_at",
      [](std::int64_t step, double initial, double final_, std::int64_t begin, std::int64_t end, double power) {
        opt::PruneSchedule s{initial, final_, begin, end, power};
        s.validate();
        return opt::sparsity_at(step, s);
      },
      py::arg("step"), py::arg("initial_sparsity") = 0.2, py::arg("final_sparsity") = 0.8, py::arg("begin_step") = 0,
      py::arg("end_step") = 5000, py::arg("power") = 3.0);

  m.def(
      "quantize",
      [](const FloatArray& w) {
        const auto q = opt::quantize_tensor("tensor", {static_cast<int>(w.size())}, view(w));
        py::array_t<std::int8_t> arr(static_cast<py::ssize_t>(q.values.size()));
        std::copy(q.values.begin(), q.values.end(), arr.mutable_data());
        return py::make_tuple(q.scale, arr);
      },
      py::arg("weights"), "Symmetric int8 quantization; returns (scale, values).");

  m.def(
      "bench_report",
      [](std::vector<double> runs, int batch, double gsd, int chip_size) {
        return json_to_py(bench::to_json(bench::make_bench_report(std::move(runs), batch, gsd, chip_size)));
      },
      py::arg("runs"), py::arg("batch_size") = 8, py::arg("gsd_m") = 4.75, py::arg("chip_size") = 256);

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& config, std::optional<std::filesystem::path> out_dir,
         std::optional<std::uint64_t> seed) {
        auto cfg = pipeline::load_pipeline_config(config);
        if (out_dir) cfg.out_dir = *out_dir;
        if (seed) cfg.seed = seed;
        nlohmann::json report;
        {
          py::gil_scoped_release release;
          report = pipeline::run_pipeline(cfg).report;
        }
        return json_to_py(report);
      },
      py::arg("config"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none());

  m.def(
      "load_mask",
      [](const std::filesystem::path& path) {
        const auto mask = load_mask(path);
        py::array_t<std::uint8_t> arr({mask.height(), mask.width()});
        std::copy(mask.values().begin(), mask.values().end(), arr.mutable_data());
        auto geo = geotransform_to_json(mask.geo());
        geo["epsg"] = mask.geo().epsg;
        return py::make_tuple(arr, json_to_py(geo));
      },
      py::arg("path"));

  m.def(
      "intersect",
      [](const std::filesystem::path& mask_path, const std::filesystem::path& roads_path,
         std::optional<double> spacing, std::optional<double> min_run, const std::string& timestamp) {
        roads::IntersectOptions opts;
        opts.sample_spacing_m = spacing;
        opts.min_run_m = min_run;
        opts.timestamp = timestamp;
        const auto mask = load_mask(mask_path);
        const auto segs = roads::intersect(mask, roads::load_roads(roads_path), opts);
        return json_to_py(roads::flooded_to_geojson(segs, mask.geo().epsg));
      },
      py::arg("mask"), py::arg("roads"), py::arg("sample_spacing_m") = py::none(), py::arg("min_run_m") = py::none(),
      py::arg("timestamp") = "");
}
