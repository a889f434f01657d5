#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadflood/raster.hpp"
#include "roadflood/roadnet.hpp"
#include "roadflood/segnet.hpp"
#include "roadflood/sensor_sim.hpp"
#include "roadflood/train.hpp"
#include "roadflood/water_index.hpp"

namespace roadflood::pipeline {

enum class InferMode { kNdwiThreshold, kModel, kTrain };

std::string infer_mode_name(InferMode m);
InferMode infer_mode_from_name(const std::string& name);

/// A 256x256 scene at 10 m with a meandering river, a lake, and three roads.
water::SceneSpec demo_scene();

struct PipelineConfig {
  water::SceneSpec scene = demo_scene();
  sim::SimConfig sim;
  int chip_size = water::kChipSize;
  float ndwi_threshold = water::kDefaultThreshold;
  InferMode mode = InferMode::kNdwiThreshold;
  std::filesystem::path model_path;  // kModel
  segnet::ModelConfig model;         // kTrain
  segnet::TrainConfig train;         // kTrain
  std::optional<std::filesystem::path> roads_path;  // scene roads when empty
  std::string roads_id_key = "id";
  std::optional<double> sample_spacing_m;
  std::optional<double> min_run_m;
  std::string timestamp;  // scene acquisition time when empty
  std::filesystem::path out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool render = false;

  PipelineConfig();
  void validate() const;
};

/// Relative paths in the JSON resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Stages. Each reads and writes plain files so it can run on its own.

struct TileSet {
  int width = 0;   // full scene extent
  int height = 0;
  std::vector<sim::Tile> tiles;
};

/// Writes scene/{reflectance,radiance,truth} bundles, scene/roads.geojson,
/// and scene/spec.json.
water::Scene stage_synth(const water::SceneSpec& spec, const std::filesystem::path& dir);

/// Writes tiles/<id> bundles, tiles/index.json, and misalignment.json.
TileSet stage_simulate(const Raster& radiance, const sim::SimConfig& cfg, const std::filesystem::path& dir);

void save_tiles(const TileSet& set, const std::filesystem::path& dir);
TileSet load_tiles(const std::filesystem::path& index_path);

/// NDWI-threshold labels, chips/<prefix> bundles and chips/manifest.json.
std::vector<water::LabeledChip> stage_chip(const TileSet& set, int chip_size, float threshold,
                                           const std::filesystem::path& dir);

Mask infer_tile_ndwi(const Raster& tile, float threshold);
/// Runs the model over every chip-size window of the (padded) tile.
Mask infer_tile_model(const Raster& tile, const segnet::ModelParams& params, const segnet::ModelConfig& cfg,
                      int chip_size, int threads = 1);

/// Stitches per-tile masks into the full-scene grid.
Mask mosaic_masks(const TileSet& set, std::span<const Mask> masks);

struct PipelineResult {
  Mask mask;
  std::vector<roads::FloodedSegment> segments;
  std::filesystem::path flooded_path;
  std::filesystem::path mask_path;
  std::optional<std::filesystem::path> model_path;
  nlohmann::json report;
};

/// synth -> simulate -> chip -> [train] -> infer -> intersect -> outputs.
/// Any failure is rethrown as StageError naming the stage.
PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace roadflood::pipeline
