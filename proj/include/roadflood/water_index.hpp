#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadflood/raster.hpp"

namespace roadflood::water {

inline constexpr float kDefaultThreshold = 0.01f;
inline constexpr int kChipSize = 256;

/// (GREEN - NIR) / (GREEN + NIR), 0 where the denominator is 0, clamped to [-1, 1].
std::vector<float> ndwi(std::span<const float> green, std::span<const float> nir);
std::vector<float> ndwi(const Raster& r);

/// 1 where ndwi > threshold (strict), else 0.
Mask threshold_mask(std::span<const float> ndwi_grid, int width, int height, const GeoTransform& geo,
                    float threshold = kDefaultThreshold);

struct ChipSource {
  std::string tile_id;
  int col_offset = 0;
  int row_offset = 0;
};

/// Four-band model input (RED, GREEN, BLUE, NDWI) with its label grid.
struct LabeledChip {
  Raster image;
  Mask label;
  ChipSource source;
};

struct ChipOptions {
  int chip_size = kChipSize;
  // Restrict the chip grid to the top-left valid region of a padded tile.
  std::optional<int> valid_width;
  std::optional<int> valid_height;
};

/// Builds the 4-channel model input for an arbitrary window of an R,G,B,NIR raster.
Raster model_input(const Raster& rgbn);

std::vector<LabeledChip> extract_chips(const Raster& tile, const Mask& mask, const std::string& tile_id,
                                       const ChipOptions& opts = {});

struct BandLevels {
  double red = 0.0;
  double green = 0.0;
  double blue = 0.0;
  double nir = 0.0;
};

/// Synthetic scene description. Polygons and road polylines are in pixel
/// coordinates (col, row) of the generated raster.
struct SceneSpec {
  int width = 512;
  int height = 512;
  double gsd = 10.0;
  double origin_x = 770000.0;
  double origin_y = 1440000.0;
  int epsg = 32643;
  std::vector<std::vector<PixelPoint>> water_polygons;
  std::vector<std::vector<PixelPoint>> roads;
  BandLevels water_levels{0.12, 0.30, 0.28, 0.05};
  BandLevels land_levels{0.25, 0.20, 0.15, 0.40};
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::string acquired = "2022-09-05T05:30:00Z";

  void validate() const;
  GeoTransform geo() const;
};

struct Scene {
  Raster image;  // RED, GREEN, BLUE, NIR reflectance
  Mask truth;
};

Scene generate_scene(const SceneSpec& spec);

/// Even-odd containment test.
bool point_in_polygon(std::span<const PixelPoint> polygon, double col, double row);

double area_hectares(std::size_t wet_pixels, double gsd);
double area_hectares(const Mask& mask, double gsd);

struct ChipManifestEntry {
  std::string chip;
  std::string label;
  std::string source_tile;
  int col_offset = 0;
  int row_offset = 0;
};

/// Writes chips as bundles under `dir` and returns the manifest entries
/// (paths relative to `dir`).
std::vector<ChipManifestEntry> save_chips(std::span<const LabeledChip> chips, const std::filesystem::path& dir,
                                          const std::string& prefix = "chip");
void write_manifest(const std::filesystem::path& path, std::span<const ChipManifestEntry> entries);
std::vector<ChipManifestEntry> read_manifest(const std::filesystem::path& path);
/// Loads every chip in a manifest; relative paths resolve against the manifest directory.
std::vector<LabeledChip> load_chips(const std::filesystem::path& manifest_path);

nlohmann::json to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

}  // namespace roadflood::water
