// roadflood command-line entry point.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "roadflood/bench.hpp"
#include "roadflood/detail/io.hpp"
#include "roadflood/error.hpp"
#include "roadflood/model_opt.hpp"
#include "roadflood/pipeline.hpp"
#include "roadflood/render.hpp"
#include "roadflood/roadnet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roadflood;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string config;
  std::string out;
};

// Usage problems found after parsing (missing files and the like).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const Globals& g) {
  if (g.config.empty()) return json::object();
  if (!fs::exists(g.config)) throw UsageError("config file not found: " + g.config);
  return detail::read_json(g.config);
}

void emit(const json& report, const std::string& out) {
  if (out.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    detail::write_json(out, report);
  }
}

std::string require_out(const Globals& g, const std::string& what) {
  if (g.out.empty()) throw UsageError("--out is required (" + what + ")");
  return g.out;
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw UsageError(flag + " is required");
  if (!fs::exists(path) && !fs::exists(path + ".json")) throw UsageError(flag + ": not found: " + path);
}

segnet::TrainConfig train_cfg_from(const json& cfg, const Globals& g) {
  auto tc = cfg.contains("train") ? segnet::train_config_from_json(cfg["train"]) : segnet::TrainConfig{};
  if (g.seed) tc.seed = *g.seed;
  tc.threads = g.threads;
  return tc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"roadflood: flooded-road mapping from simulated multispectral imagery"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed overriding every stage seed");
  app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "Stage config JSON");
  app.add_option("--out", g.out, "Output path (file or directory depending on the command)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene (reflectance, radiance, truth, roads)");

  // simulate
  std::string sim_input;
  auto* simulate = app.add_subcommand("simulate", "Resample, misalign, blur, calibrate, and tile a radiance raster");
  simulate->add_option("--input", sim_input, "Radiance raster bundle")->required();

  // chip
  std::string chip_tiles;
  int chip_size = water::kChipSize;
  float chip_threshold = water::kDefaultThreshold;
  auto* chip = app.add_subcommand("chip", "Label tiles by NDWI threshold and cut chips");
  chip->add_option("--tiles", chip_tiles, "Tile index.json")->required();
  chip->add_option("--chip-size", chip_size)->check(CLI::PositiveNumber);
  chip->add_option("--threshold", chip_threshold);

  // train
  std::string train_manifest;
  auto* train = app.add_subcommand("train", "Train the segmentation network on a chip manifest");
  train->add_option("--manifest", train_manifest, "Chip manifest.json")->required();

  // prune
  std::string prune_model, prune_manifest;
  auto* prune = app.add_subcommand("prune", "Magnitude-prune with fine-tuning along a sparsity schedule");
  prune->add_option("--model", prune_model)->required();
  prune->add_option("--manifest", prune_manifest)->required();

  // quantize
  std::string quant_model;
  auto* quantize = app.add_subcommand("quantize", "Post-training int8 quantization");
  quantize->add_option("--model", quant_model)->required();

  // infer
  std::string infer_tiles, infer_model, infer_baseline;
  int infer_chip = water::kChipSize;
  float infer_threshold = water::kDefaultThreshold;
  auto* infer = app.add_subcommand("infer", "Water mask from tiles via a model or the NDWI baseline");
  infer->add_option("--tiles", infer_tiles, "Tile index.json")->required();
  auto* model_opt = infer->add_option("--model", infer_model);
  infer->add_option("--baseline", infer_baseline)->check(CLI::IsMember({"ndwi-threshold"}))->excludes(model_opt);
  infer->add_option("--chip-size", infer_chip)->check(CLI::PositiveNumber);
  infer->add_option("--threshold", infer_threshold);

  // intersect
  std::string isect_mask, isect_roads, isect_timestamp, isect_id_key = "id";
  std::optional<double> isect_spacing, isect_min_run, isect_mpu;
  auto* intersect = app.add_subcommand("intersect", "Flooded road segments from a water mask and a road network");
  intersect->add_option("--mask", isect_mask)->required();
  intersect->add_option("--roads", isect_roads, "GeoJSON FeatureCollection")->required();
  intersect->add_option("--spacing", isect_spacing, "Sample spacing in meters");
  intersect->add_option("--min-run", isect_min_run, "Minimum flooded run in meters");
  intersect->add_option("--timestamp", isect_timestamp);
  intersect->add_option("--meters-per-unit", isect_mpu, "Needed for EPSG:4326 input");
  intersect->add_option("--id-key", isect_id_key);

  // bench
  std::string bench_model, bench_manifest;
  bench::BenchOptions bench_opts;
  auto* benchc = app.add_subcommand("bench", "Time batched inference");
  benchc->add_option("--model", bench_model)->required();
  benchc->add_option("--manifest", bench_manifest)->required();
  benchc->add_option("--batch", bench_opts.batch)->check(CLI::PositiveNumber);
  benchc->add_option("--runs", bench_opts.runs)->check(CLI::PositiveNumber);
  benchc->add_option("--warmup", bench_opts.warmup)->check(CLI::NonNegativeNumber);
  benchc->add_option("--gsd", bench_opts.gsd_m)->check(CLI::PositiveNumber);

  // report-size
  std::string size_model;
  auto* report_size = app.add_subcommand("report-size", "Byte counts of a model under each encoding");
  report_size->add_option("--model", size_model)->required();

  // render
  std::string render_image, render_mask, render_roads, render_flooded;
  auto* renderc = app.add_subcommand("render", "PNG overlay of image, mask, and roads");
  renderc->add_option("--image", render_image);
  renderc->add_option("--mask", render_mask);
  renderc->add_option("--roads", render_roads);
  renderc->add_option("--flooded", render_flooded);

  // run
  auto* run = app.add_subcommand("run", "Full pipeline from a config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) {
      auto spec = g.config.empty() ? pipeline::demo_scene() : water::scene_spec_from_json(load_config(g));
      if (g.seed) spec.seed = *g.seed;
      const fs::path out = require_out(g, "scene directory");
      const auto scene = pipeline::stage_synth(spec, out);
      emit(json{{"width", scene.image.width()}, {"height", scene.image.height()},
                {"truth_water_pixels", scene.truth.count()}},
           "");
    } else if (*simulate) {
      require_file(sim_input, "--input");
      auto cfg = sim::sim_config_from_json(load_config(g));
      if (g.seed) cfg.seed = *g.seed;
      const auto set = pipeline::stage_simulate(load_raster(sim_input), cfg, require_out(g, "output directory"));
      emit(json{{"width", set.width}, {"height", set.height}, {"tiles", set.tiles.size()}}, "");
    } else if (*chip) {
      require_file(chip_tiles, "--tiles");
      const auto chips = pipeline::stage_chip(pipeline::load_tiles(chip_tiles), chip_size, chip_threshold,
                                              require_out(g, "chip directory"));
      emit(json{{"chips", chips.size()}}, "");
    } else if (*train) {
      require_file(train_manifest, "--manifest");
      const auto cfg = load_config(g);
      const auto model_cfg = cfg.contains("model") ? segnet::model_config_from_json(cfg["model"]) : segnet::ModelConfig{};
      const auto tc = train_cfg_from(cfg, g);
      const auto out = require_out(g, "model file");
      auto result = segnet::train(fs::path(train_manifest), model_cfg, tc);
      opt::save_model(model_cfg, result.params, out);
      emit(segnet::to_json(result.report), "");
    } else if (*prune) {
      require_file(prune_model, "--model");
      require_file(prune_manifest, "--manifest");
      const auto cfg = load_config(g);
      const auto sched = cfg.contains("schedule") ? opt::prune_schedule_from_json(cfg["schedule"]) : opt::PruneSchedule{};
      const int epochs = cfg.value("epochs", 2);
      const auto stored = opt::load_model(prune_model);
      const auto data = segnet::dataset_from_chips(water::load_chips(prune_manifest));
      auto result = opt::prune_finetune(stored.params(), data, stored.config, sched, epochs, train_cfg_from(cfg, g));
      opt::save_model(stored.config, result.params, require_out(g, "model file"), opt::Encoding::kSparse);
      json report = segnet::to_json(result.report);
      report["size"] = opt::to_json(opt::size_report(stored.config, result.params));
      emit(report, "");
    } else if (*quantize) {
      require_file(quant_model, "--model");
      const auto stored = opt::load_model(quant_model);
      const auto q = opt::quantize_params(stored.params());
      opt::save_model(opt::make_stored(stored.config, q), require_out(g, "model file"));
      json scales = json::object();
      for (const auto& t : q) scales[t.name] = t.scale;
      emit(json{{"tensors", q.size()}, {"scales", scales}}, "");
    } else if (*infer) {
      require_file(infer_tiles, "--tiles");
      if (infer_model.empty() && infer_baseline.empty()) throw UsageError("infer needs --model or --baseline");
      const auto set = pipeline::load_tiles(infer_tiles);
      std::optional<opt::StoredModel> stored;
      std::optional<segnet::ModelParams> params;
      if (!infer_model.empty()) {
        stored = opt::load_model(infer_model);
        params = stored->params();
      }
      std::vector<Mask> masks;
      for (const auto& t : set.tiles) {
        masks.push_back(params ? pipeline::infer_tile_model(t.raster, *params, stored->config, infer_chip, g.threads)
                               : pipeline::infer_tile_ndwi(t.raster, infer_threshold));
      }
      const auto mask = pipeline::mosaic_masks(set, masks);
      save_mask(mask, require_out(g, "mask bundle"));
      emit(json{{"water_pixels", mask.count()},
                {"water_area_ha", water::area_hectares(mask, mask.geo().pixel_size_x)}},
           "");
    } else if (*intersect) {
      require_file(isect_mask, "--mask");
      require_file(isect_roads, "--roads");
      const auto mask = load_mask(isect_mask);
      const auto net = roads::load_roads(isect_roads, {isect_id_key});
      roads::IntersectOptions opts;
      opts.sample_spacing_m = isect_spacing;
      opts.min_run_m = isect_min_run;
      opts.meters_per_unit = isect_mpu;
      opts.timestamp = isect_timestamp;
      opts.threads = g.threads;
      const auto segs = roads::intersect(mask, net, opts);
      const auto fc = roads::flooded_to_geojson(segs, mask.geo().epsg);
      if (g.out.empty()) {
        emit(fc, "");
      } else {
        detail::write_json(g.out, fc);
        emit(json{{"segments", segs.size()}}, "");
      }
    } else if (*benchc) {
      require_file(bench_model, "--model");
      require_file(bench_manifest, "--manifest");
      const auto stored = opt::load_model(bench_model);
      const auto data = segnet::dataset_from_chips(water::load_chips(bench_manifest));
      bench_opts.threads = g.threads;
      emit(bench::to_json(bench::bench_infer(stored.params(), stored.config, data, bench_opts)), g.out);
    } else if (*report_size) {
      require_file(size_model, "--model");
      const auto stored = opt::load_model(size_model);
      json report = opt::to_json(opt::size_report(stored.config, stored.params()));
      report["file_bytes_on_disk"] = fs::file_size(size_model);
      emit(report, g.out);
    } else if (*renderc) {
      std::optional<Raster> image;
      std::optional<Mask> mask;
      std::optional<roads::RoadNetwork> net;
      std::vector<roads::FloodedSegment> flooded;
      if (!render_image.empty()) image = load_raster(render_image);
      if (!render_mask.empty()) mask = load_mask(render_mask);
      if (!render_roads.empty()) net = roads::load_roads(render_roads);
      if (!render_flooded.empty()) {
        // Flooded GeoJSON is drawn as plain polylines.
        for (const auto& f : roads::load_roads(render_flooded).features) {
          for (const auto& line : f.polylines) flooded.push_back({f.road_id, 0, {}, {}, 0, 0, 0, {}, line});
        }
      }
      render::Layers layers;
      layers.image = image ? &*image : nullptr;
      layers.mask = mask ? &*mask : nullptr;
      layers.roads = net ? &*net : nullptr;
      layers.flooded = flooded;
      if (!layers.image && !layers.mask) throw UsageError("render needs --image or --mask");
      render::render_png(layers, require_out(g, "PNG file"));
    } else if (*run) {
      if (g.config.empty()) throw UsageError("run needs --config");
      if (!fs::exists(g.config)) throw UsageError("config file not found: " + g.config);
      auto cfg = pipeline::load_pipeline_config(g.config);
      if (!g.out.empty()) cfg.out_dir = g.out;
      if (g.seed) cfg.seed = g.seed;
      if (app.count("--threads")) cfg.threads = g.threads;
      const auto result = pipeline::run_pipeline(cfg);
      emit(result.report["stages"], "");
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const StageError& e) {
    std::cerr << "stage '" << e.stage() << "' failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
