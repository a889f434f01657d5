#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadflood/raster.hpp"

namespace roadflood::roads {

using Polyline = std::vector<WorldPoint>;

struct RoadFeature {
  std::string road_id;
  std::vector<Polyline> polylines;
  nlohmann::json properties = nlohmann::json::object();
};

struct RoadNetwork {
  std::vector<RoadFeature> features;
  int epsg = 4326;
};

struct LoadOptions {
  std::string id_key = "id";
};

/// Reads a GeoJSON FeatureCollection of LineString / MultiLineString
/// features. The CRS comes from an "epsg" member (or a legacy "crs" name
/// like "EPSG:32643"); without one, 4326 is assumed.
RoadNetwork load_roads(const std::filesystem::path& path, const LoadOptions& opts = {});
RoadNetwork roads_from_json(const nlohmann::json& fc, const LoadOptions& opts = {});

struct FloodedSegment {
  std::string road_id;
  std::size_t polyline = 0;  // index within the feature
  WorldPoint start;
  WorldPoint end;
  double start_arc_m = 0.0;
  double length_m = 0.0;
  std::size_t sample_count = 0;
  std::string timestamp;
  /// Wet sample positions, first to last.
  std::vector<WorldPoint> vertices;
};

struct IntersectOptions {
  /// Defaults to half the mask pixel size.
  std::optional<double> sample_spacing_m;
  /// Defaults to three sample spacings.
  std::optional<double> min_run_m;
  std::string timestamp;
  /// Required for geographic (EPSG:4326) inputs; 1 for projected meters.
  std::optional<double> meters_per_unit;
  int threads = 1;
};

struct Sample {
  WorldPoint point;
  double arc_m = 0.0;
};

/// Points every `spacing_m` along the arc, plus the final vertex.
std::vector<Sample> sample_polyline(const Polyline& line, double spacing_m, double meters_per_unit = 1.0);

/// Mask value of the pixel containing the point; outside the raster is dry.
bool is_wet(const Mask& mask, const WorldPoint& p);

std::vector<FloodedSegment> intersect(const Mask& mask, const RoadNetwork& roads, const IntersectOptions& opts = {});

nlohmann::json flooded_to_geojson(std::span<const FloodedSegment> segments, int epsg);
void write_flooded_geojson(std::span<const FloodedSegment> segments, int epsg, const std::filesystem::path& path);

/// Pixel-space polylines (as in a synthetic scene) to a network in the
/// grid's CRS, ids "road-<index>".
RoadNetwork roads_from_pixels(std::span<const std::vector<PixelPoint>> lines, const GeoTransform& geo);
nlohmann::json roads_to_geojson(const RoadNetwork& net);

}  // namespace roadflood::roads
