#include "roadflood/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "roadflood/detail/io.hpp"
#include "roadflood/error.hpp"
#include "roadflood/model_opt.hpp"
#include "roadflood/render.hpp"

namespace roadflood::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string infer_mode_name(InferMode m) {
  switch (m) {
    case InferMode::kNdwiThreshold:
      return "ndwi-threshold";
    case InferMode::kModel:
      return "model";
    case InferMode::kTrain:
      return "train";
  }
  return "ndwi-threshold";
}

InferMode infer_mode_from_name(const std::string& name) {
  if (name == "ndwi-threshold") return InferMode::kNdwiThreshold;
  if (name == "model") return InferMode::kModel;
  if (name == "train") return InferMode::kTrain;
  throw InvalidArgument("unknown inference mode '" + name + "' (expected ndwi-threshold, model, or train)");
}

water::SceneSpec demo_scene() {
  water::SceneSpec s;
  s.width = 256;
  s.height = 256;
  s.gsd = 10.0;
  // River, top to bottom.
  s.water_polygons.push_back({{95, 0}, {110, 60}, {100, 120}, {115, 180}, {105, 256},
                              {140, 256}, {150, 180}, {135, 120}, {145, 60}, {130, 0}});
  // Lake.
  s.water_polygons.push_back({{170, 30}, {230, 35}, {235, 90}, {180, 95}});
  s.roads.push_back({{0, 128.3}, {256, 128.3}});
  s.roads.push_back({{20, 230}, {200, 60}, {250, 60}});
  s.roads.push_back({{10, 240}, {90, 250}});
  return s;
}

PipelineConfig::PipelineConfig() {
  sim.solar = sim::default_solar_rgbn();
  sim.tile_size = 512;
}

void PipelineConfig::validate() const {
  scene.validate();
  sim.validate();
  if (chip_size <= 0) throw InvalidArgument("chip_size must be positive");
  if (sim.tile_size % chip_size != 0) throw InvalidArgument("tile_size must be a multiple of chip_size");
  if (mode == InferMode::kModel && model_path.empty()) throw InvalidArgument("model inference needs a model path");
  if (mode == InferMode::kTrain) {
    model.validate();
    train.validate();
    if (chip_size % model.divisor() != 0) throw InvalidArgument("chip_size must be divisible by 2^levels");
  }
  if (threads < 1) throw InvalidArgument("threads must be at least 1");
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return (path.is_relative() && !base_dir.empty()) ? base_dir / path : path;
  };
  try {
    if (j.contains("scene")) c.scene = water::scene_spec_from_json(j["scene"]);
    if (j.contains("simulate")) {
      auto sj = j["simulate"];
      if (!sj.contains("tile_size")) sj["tile_size"] = c.sim.tile_size;
      c.sim = sim::sim_config_from_json(sj);
    }
    c.chip_size = j.value("chip_size", c.chip_size);
    c.ndwi_threshold = j.value("ndwi_threshold", c.ndwi_threshold);
    if (j.contains("inference")) {
      const auto& inf = j["inference"];
      c.mode = infer_mode_from_name(inf.value("mode", infer_mode_name(c.mode)));
      if (inf.contains("model")) c.model_path = resolve(inf["model"].get<std::string>());
    }
    if (j.contains("model")) c.model = segnet::model_config_from_json(j["model"]);
    if (j.contains("train")) c.train = segnet::train_config_from_json(j["train"]);
    if (j.contains("roads")) {
      const auto& r = j["roads"];
      if (r.contains("path")) c.roads_path = resolve(r["path"].get<std::string>());
      c.roads_id_key = r.value("id_key", c.roads_id_key);
    }
    if (j.contains("intersect")) {
      const auto& i = j["intersect"];
      if (i.contains("sample_spacing_m")) c.sample_spacing_m = i["sample_spacing_m"].get<double>();
      if (i.contains("min_run_m")) c.min_run_m = i["min_run_m"].get<double>();
      c.timestamp = i.value("timestamp", c.timestamp);
    }
    if (j.contains("out_dir")) c.out_dir = resolve(j["out_dir"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    c.threads = j.value("threads", c.threads);
    c.render = j.value("render", c.render);
  } catch (const json::exception& e) {
    throw FormatError(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return pipeline_config_from_json(detail::read_json(path), path.parent_path());
}

json to_json(const PipelineConfig& c) {
  json j{{"scene", water::to_json(c.scene)},
         {"simulate", sim::to_json(c.sim)},
         {"chip_size", c.chip_size},
         {"ndwi_threshold", c.ndwi_threshold},
         {"inference", {{"mode", infer_mode_name(c.mode)}}},
         {"model", segnet::to_json(c.model)},
         {"train", segnet::to_json(c.train)},
         {"roads", {{"id_key", c.roads_id_key}}},
         {"intersect", {{"timestamp", c.timestamp}}},
         {"out_dir", c.out_dir.string()},
         {"threads", c.threads},
         {"render", c.render}};
  if (!c.model_path.empty()) j["inference"]["model"] = c.model_path.string();
  if (c.roads_path) j["roads"]["path"] = c.roads_path->string();
  if (c.sample_spacing_m) j["intersect"]["sample_spacing_m"] = *c.sample_spacing_m;
  if (c.min_run_m) j["intersect"]["min_run_m"] = *c.min_run_m;
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

// ---------------------------------------------------------------------------

water::Scene stage_synth(const water::SceneSpec& spec, const fs::path& dir) {
  auto scene = water::generate_scene(spec);
  const auto radiance = sim::reflectance_to_radiance(scene.image, sim::default_solar_rgbn());
  save_raster(scene.image, dir / "reflectance");
  save_raster(radiance, dir / "radiance");
  save_mask(scene.truth, dir / "truth");
  detail::write_json(dir / "roads.geojson", roads::roads_to_geojson(roads::roads_from_pixels(spec.roads, spec.geo())));
  detail::write_json(dir / "spec.json", water::to_json(spec));
  return scene;
}

void save_tiles(const TileSet& set, const fs::path& dir) {
  json tiles = json::array();
  for (const auto& t : set.tiles) {
    save_raster(t.raster, dir / t.index.id());
    json e = sim::to_json(t.index);
    e["path"] = t.index.id();
    tiles.push_back(e);
  }
  detail::write_json(dir / "index.json", json{{"width", set.width}, {"height", set.height}, {"tiles", tiles}});
}

TileSet load_tiles(const fs::path& index_path) {
  const auto j = detail::read_json(index_path);
  TileSet set;
  try {
    set.width = j.at("width").get<int>();
    set.height = j.at("height").get<int>();
    for (const auto& e : j.at("tiles")) {
      auto index = sim::tile_index_from_json(e);
      set.tiles.push_back({load_raster(index_path.parent_path() / e.at("path").get<std::string>()), index});
    }
  } catch (const json::exception& e) {
    throw FormatError(index_path.string() + ": " + e.what());
  }
  if (set.tiles.empty()) throw FormatError(index_path.string() + ": no tiles");
  return set;
}

TileSet stage_simulate(const Raster& radiance, const sim::SimConfig& cfg, const fs::path& dir) {
  auto result = sim::simulate(radiance, cfg);
  TileSet set;
  set.tiles = std::move(result.tiles);
  for (const auto& t : set.tiles) {
    set.width = std::max(set.width, t.index.col_offset + t.index.valid_width);
    set.height = std::max(set.height, t.index.row_offset + t.index.valid_height);
  }
  save_tiles(set, dir / "tiles");
  detail::write_json(dir / "misalignment.json", sim::to_json(result.misalignment));
  return set;
}

Mask infer_tile_ndwi(const Raster& tile, float threshold) {
  return water::threshold_mask(water::ndwi(tile), tile.width(), tile.height(), tile.geo(), threshold);
}

std::vector<water::LabeledChip> stage_chip(const TileSet& set, int chip_size, float threshold, const fs::path& dir) {
  std::vector<water::LabeledChip> chips;
  for (const auto& t : set.tiles) {
    const auto label = infer_tile_ndwi(t.raster, threshold);
    water::ChipOptions opts;
    opts.chip_size = chip_size;
    opts.valid_width = t.index.valid_width;
    opts.valid_height = t.index.valid_height;
    auto part = water::extract_chips(t.raster, label, t.index.id(), opts);
    std::move(part.begin(), part.end(), std::back_inserter(chips));
  }
  const auto entries = water::save_chips(chips, dir, "chip");
  water::write_manifest(dir / "manifest.json", entries);
  return chips;
}

Mask infer_tile_model(const Raster& tile, const segnet::ModelParams& params, const segnet::ModelConfig& cfg,
                      int chip_size, int threads) {
  if (tile.width() % chip_size != 0 || tile.height() % chip_size != 0) {
    throw InvalidArgument("tile dimensions must be multiples of the chip size");
  }
  if (chip_size % cfg.divisor() != 0) throw InvalidArgument("chip size must be divisible by 2^levels");
  water::ChipOptions opts;
  opts.chip_size = chip_size;
  const auto chips = water::extract_chips(tile, Mask::zeros(tile.width(), tile.height(), tile.geo()), "tile", opts);
  const auto data = segnet::dataset_from_chips(chips);
  const auto probs = segnet::predict(params, cfg, data, segnet::all_indices(data), 8, threads);

  auto mask = Mask::zeros(tile.width(), tile.height(), tile.geo());
  const std::size_t per = static_cast<std::size_t>(chip_size) * static_cast<std::size_t>(chip_size);
  for (std::size_t k = 0; k < chips.size(); ++k) {
    const auto& src = chips[k].source;
    for (int r = 0; r < chip_size; ++r) {
      for (int c = 0; c < chip_size; ++c) {
        const float p = probs[k * per + static_cast<std::size_t>(r) * chip_size + c];
        mask.set(src.col_offset + c, src.row_offset + r, p >= 0.5f);
      }
    }
  }
  return mask;
}

Mask mosaic_masks(const TileSet& set, std::span<const Mask> masks) {
  if (set.tiles.empty() || masks.size() != set.tiles.size()) throw InvalidArgument("one mask per tile required");
  const auto& first = set.tiles.front();
  const auto geo = first.raster.geo().shifted(-first.index.col_offset, -first.index.row_offset);
  auto out = Mask::zeros(set.width, set.height, geo);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& idx = set.tiles[i].index;
    for (int r = 0; r < idx.valid_height && idx.row_offset + r < set.height; ++r) {
      for (int c = 0; c < idx.valid_width && idx.col_offset + c < set.width; ++c) {
        out.set(idx.col_offset + c, idx.row_offset + r, masks[i].at(c, r) != 0);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <typename F>
auto run_stage(const std::string& name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string rel(const fs::path& p, const fs::path& base) { return p.lexically_relative(base).generic_string(); }

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& input) {
  PipelineConfig cfg = input;
  if (cfg.seed) {
    cfg.scene.seed = *cfg.seed;
    cfg.sim.seed = *cfg.seed;
    cfg.train.seed = *cfg.seed;
  }
  cfg.train.threads = cfg.threads;
  run_stage("config", [&] { cfg.validate(); });
  const fs::path out = cfg.out_dir;
  PipelineResult result{Mask::zeros(1, 1, cfg.scene.geo()), {}, {}, {}, {}, {}};
  json stages = json::object();

  const auto scene = run_stage("synth", [&] { return stage_synth(cfg.scene, out / "scene"); });
  stages["synth"] = {{"width", scene.image.width()}, {"height", scene.image.height()},
                     {"truth_water_pixels", scene.truth.count()}};

  const auto tiles = run_stage("simulate", [&] {
    return stage_simulate(load_raster(out / "scene" / "radiance"), cfg.sim, out);
  });
  stages["simulate"] = {{"width", tiles.width}, {"height", tiles.height}, {"tiles", tiles.tiles.size()}};

  const auto chips = run_stage("chip", [&] {
    return stage_chip(load_tiles(out / "tiles" / "index.json"), cfg.chip_size, cfg.ndwi_threshold, out / "chips");
  });
  stages["chip"] = {{"chips", chips.size()}, {"chip_size", cfg.chip_size}};

  std::optional<segnet::ModelParams> params;
  segnet::ModelConfig model_cfg = cfg.model;
  if (cfg.mode == InferMode::kTrain) {
    run_stage("train", [&] {
      auto trained = segnet::train(out / "chips" / "manifest.json", cfg.model, cfg.train);
      const auto model_path = out / "model" / "model.rfpm";
      opt::save_model(cfg.model, trained.params, model_path);
      detail::write_json(out / "model" / "train_report.json", segnet::to_json(trained.report));
      params = std::move(trained.params);
      result.model_path = model_path;
      const auto& last = trained.report.epochs.back();
      stages["train"] = {{"epochs", trained.report.epochs.size()},
                         {"steps", trained.report.steps},
                         {"train_dice", last.train.dice},
                         {"model", rel(model_path, out)}};
    });
  } else if (cfg.mode == InferMode::kModel) {
    run_stage("load-model", [&] {
      const auto stored = opt::load_model(cfg.model_path);
      model_cfg = stored.config;
      params = stored.params();
      segnet::check_params(*params, model_cfg);
    });
  }

  result.mask = run_stage("infer", [&] {
    const auto set = load_tiles(out / "tiles" / "index.json");
    std::vector<Mask> masks;
    for (const auto& t : set.tiles) {
      masks.push_back(params ? infer_tile_model(t.raster, *params, model_cfg, cfg.chip_size, cfg.threads)
                             : infer_tile_ndwi(t.raster, cfg.ndwi_threshold));
    }
    auto mask = mosaic_masks(set, masks);
    result.mask_path = out / "mask" / "water_mask";
    save_mask(mask, result.mask_path);
    return mask;
  });
  stages["infer"] = {{"mode", infer_mode_name(cfg.mode)},
                     {"water_pixels", result.mask.count()},
                     {"water_area_ha", water::area_hectares(result.mask, cfg.sim.target_gsd)}};

  result.segments = run_stage("intersect", [&] {
    const auto net = cfg.roads_path ? roads::load_roads(*cfg.roads_path, {cfg.roads_id_key})
                                    : roads::load_roads(out / "scene" / "roads.geojson");
    roads::IntersectOptions opts;
    opts.sample_spacing_m = cfg.sample_spacing_m;
    opts.min_run_m = cfg.min_run_m;
    opts.timestamp = cfg.timestamp.empty() ? cfg.scene.acquired : cfg.timestamp;
    opts.threads = cfg.threads;
    auto segs = roads::intersect(load_mask(out / "mask" / "water_mask"), net, opts);
    result.flooded_path = out / "flooded_roads.geojson";
    roads::write_flooded_geojson(segs, result.mask.geo().epsg, result.flooded_path);
    return segs;
  });
  double flooded_m = 0.0;
  for (const auto& s : result.segments) flooded_m += s.length_m;
  stages["intersect"] = {{"segments", result.segments.size()}, {"flooded_length_m", flooded_m}};

  if (cfg.render) {
    run_stage("render", [&] {
      const auto image = sim::mosaic(tiles.tiles, tiles.width, tiles.height);
      const auto net = roads::load_roads(out / "scene" / "roads.geojson");
      render::Layers layers;
      layers.image = &image;
      layers.mask = &result.mask;
      layers.roads = &net;
      layers.flooded = result.segments;
      render::render_png(layers, out / "render" / "overlay.png");
    });
  }

  result.report = json{{"stages", stages},
                       {"outputs",
                        {{"mask", rel(result.mask_path, out)}, {"flooded", rel(result.flooded_path, out)}}},
                       {"config", to_json(cfg)}};
  result.report["config"].erase("out_dir");
  run_stage("report", [&] { detail::write_json(out / "pipeline_report.json", result.report); });
  return result;
}

}  // namespace roadflood::pipeline
