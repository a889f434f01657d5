#include "roadflood/water_index.hpp"

#include <algorithm>
#include <cmath>

#include "roadflood/detail/io.hpp"
#include "roadflood/error.hpp"
#include "roadflood/rng.hpp"

namespace roadflood::water {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<float> ndwi(std::span<const float> green, std::span<const float> nir) {
  if (green.size() != nir.size()) throw InvalidArgument("ndwi: GREEN and NIR grids differ in size");
  std::vector<float> out(green.size());
  for (std::size_t i = 0; i < green.size(); ++i) {
    const double g = green[i];
    const double n = nir[i];
    const double den = g + n;
    const double v = den == 0.0 ? 0.0 : (g - n) / den;
    out[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

std::vector<float> ndwi(const Raster& r) { return ndwi(r.band(band::kGreen), r.band(band::kNir)); }

Mask threshold_mask(std::span<const float> ndwi_grid, int width, int height, const GeoTransform& geo,
                    float threshold) {
  if (ndwi_grid.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw InvalidArgument("threshold_mask: grid size does not match dimensions");
  }
  std::vector<std::uint8_t> values(ndwi_grid.size());
  std::transform(ndwi_grid.begin(), ndwi_grid.end(), values.begin(),
                 [threshold](float v) { return static_cast<std::uint8_t>(v > threshold ? 1 : 0); });
  return Mask(width, height, std::move(values), geo);
}

Raster model_input(const Raster& rgbn) {
  const auto red = rgbn.band(band::kRed);
  const auto green = rgbn.band(band::kGreen);
  const auto blue = rgbn.band(band::kBlue);
  const auto index = ndwi(green, rgbn.band(band::kNir));
  std::vector<float> data;
  data.reserve(rgbn.pixel_count() * 4);
  data.insert(data.end(), red.begin(), red.end());
  data.insert(data.end(), green.begin(), green.end());
  data.insert(data.end(), blue.begin(), blue.end());
  data.insert(data.end(), index.begin(), index.end());
  return Raster(rgbn.width(), rgbn.height(),
                {std::string(band::kRed), std::string(band::kGreen), std::string(band::kBlue),
                 std::string(band::kNdwi)},
                std::move(data), rgbn.geo());
}

namespace {

Raster crop(const Raster& r, int col, int row, int w, int h, std::span<const std::string> labels) {
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(w) * h * labels.size());
  for (const auto& label : labels) {
    auto src = r.band(label);
    for (int y = 0; y < h; ++y) {
      const float* s = src.data() + static_cast<std::size_t>(row + y) * r.width() + col;
      data.insert(data.end(), s, s + w);
    }
  }
  return Raster(w, h, {labels.begin(), labels.end()}, std::move(data), r.geo().shifted(col, row));
}

Mask crop(const Mask& m, int col, int row, int w, int h) {
  std::vector<std::uint8_t> values;
  values.reserve(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const auto* s = m.values().data() + static_cast<std::size_t>(row + y) * m.width() + col;
    values.insert(values.end(), s, s + w);
  }
  return Mask(w, h, std::move(values), m.geo().shifted(col, row));
}

}  // namespace

std::vector<LabeledChip> extract_chips(const Raster& tile, const Mask& mask, const std::string& tile_id,
                                       const ChipOptions& opts) {
  for (auto label : {band::kRed, band::kGreen, band::kBlue, band::kNir}) tile.require_band(label);
  if (mask.width() != tile.width() || mask.height() != tile.height()) {
    throw InvalidArgument("extract_chips: mask and tile dimensions differ");
  }
  if (opts.chip_size <= 0) throw InvalidArgument("chip size must be positive");
  const int w = std::min(tile.width(), opts.valid_width.value_or(tile.width()));
  const int h = std::min(tile.height(), opts.valid_height.value_or(tile.height()));
  const int cs = opts.chip_size;
  const std::vector<std::string> rgbn{std::string(band::kRed), std::string(band::kGreen),
                                      std::string(band::kBlue), std::string(band::kNir)};

  std::vector<LabeledChip> chips;
  for (int row = 0; row + cs <= h; row += cs) {
    for (int col = 0; col + cs <= w; col += cs) {
      chips.push_back({model_input(crop(tile, col, row, cs, cs, rgbn)), crop(mask, col, row, cs, cs),
                       ChipSource{tile_id, col, row}});
    }
  }
  return chips;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

void SceneSpec::validate() const {
  if (width <= 0 || height <= 0) throw InvalidArgument("scene dimensions must be positive");
  if (!(gsd > 0.0)) throw InvalidArgument("scene gsd must be positive");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be non-negative");
  for (const auto& poly : water_polygons) {
    if (poly.size() < 3) throw InvalidArgument("water polygon needs at least 3 vertices");
  }
  for (const auto& road : roads) {
    if (road.size() < 2) throw InvalidArgument("road polyline needs at least 2 vertices");
  }
  geo().validate();
}

GeoTransform SceneSpec::geo() const { return GeoTransform{origin_x, origin_y, gsd, gsd, epsg}; }

bool point_in_polygon(std::span<const PixelPoint> polygon, double col, double row) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = polygon[i];
    const auto& b = polygon[j];
    if ((a.row > row) != (b.row > row)) {
      const double x = (b.col - a.col) * (row - a.row) / (b.row - a.row) + a.col;
      if (col < x) inside = !inside;
    }
  }
  return inside;
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const int w = spec.width;
  const int h = spec.height;
  std::vector<std::uint8_t> truth(static_cast<std::size_t>(w) * h, 0);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      for (const auto& poly : spec.water_polygons) {
        if (point_in_polygon(poly, col + 0.5, row + 0.5)) {
          truth[static_cast<std::size_t>(row) * w + col] = 1;
          break;
        }
      }
    }
  }

  Rng rng(spec.seed);
  const double water[4] = {spec.water_levels.red, spec.water_levels.green, spec.water_levels.blue,
                           spec.water_levels.nir};
  const double land[4] = {spec.land_levels.red, spec.land_levels.green, spec.land_levels.blue,
                          spec.land_levels.nir};
  std::vector<float> data(truth.size() * 4);
  for (int b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      double v = truth[i] ? water[b] : land[b];
      if (spec.noise_sigma > 0.0) v += rng.normal(0.0, spec.noise_sigma);
      data[static_cast<std::size_t>(b) * truth.size() + i] = static_cast<float>(v);
    }
  }
  const auto geo = spec.geo();
  return Scene{Raster(w, h,
                      {std::string(band::kRed), std::string(band::kGreen), std::string(band::kBlue),
                       std::string(band::kNir)},
                      std::move(data), geo),
               Mask(w, h, std::move(truth), geo)};
}

double area_hectares(std::size_t wet_pixels, double gsd) {
  if (!(gsd > 0.0)) throw InvalidArgument("gsd must be positive");
  return static_cast<double>(wet_pixels) * gsd * gsd / 10000.0;
}

double area_hectares(const Mask& mask, double gsd) { return area_hectares(mask.count(), gsd); }

// ---------------------------------------------------------------------------
// Chip manifests

std::vector<ChipManifestEntry> save_chips(std::span<const LabeledChip> chips, const fs::path& dir,
                                          const std::string& prefix) {
  std::vector<ChipManifestEntry> entries;
  for (std::size_t i = 0; i < chips.size(); ++i) {
    const auto& c = chips[i];
    const std::string stem = prefix + "_" + c.source.tile_id + "_" + std::to_string(c.source.col_offset) + "_" +
                             std::to_string(c.source.row_offset);
    save_raster(c.image, dir / stem);
    save_mask(c.label, dir / (stem + "_label"));
    entries.push_back({stem, stem + "_label", c.source.tile_id, c.source.col_offset, c.source.row_offset});
  }
  return entries;
}

void write_manifest(const fs::path& path, std::span<const ChipManifestEntry> entries) {
  json chips = json::array();
  for (const auto& e : entries) {
    chips.push_back({{"chip", e.chip},
                     {"label", e.label},
                     {"source_tile", e.source_tile},
                     {"col_offset", e.col_offset},
                     {"row_offset", e.row_offset}});
  }
  detail::write_json(path, json{{"chips", chips}});
}

std::vector<ChipManifestEntry> read_manifest(const fs::path& path) {
  const json j = detail::read_json(path);
  std::vector<ChipManifestEntry> entries;
  try {
    for (const auto& c : j.at("chips")) {
      entries.push_back({c.at("chip").get<std::string>(), c.at("label").get<std::string>(),
                         c.value("source_tile", std::string()), c.value("col_offset", 0), c.value("row_offset", 0)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return entries;
}

std::vector<LabeledChip> load_chips(const fs::path& manifest_path) {
  const auto base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  std::vector<LabeledChip> chips;
  for (const auto& e : read_manifest(manifest_path)) {
    auto image = load_raster(resolve(e.chip));
    auto label = load_mask(resolve(e.label));
    if (image.width() != label.width() || image.height() != label.height()) {
      throw FormatError("chip " + e.chip + " and label " + e.label + " differ in size");
    }
    chips.push_back({std::move(image), std::move(label), ChipSource{e.source_tile, e.col_offset, e.row_offset}});
  }
  return chips;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json points_to_json(const std::vector<std::vector<PixelPoint>>& lines) {
  json out = json::array();
  for (const auto& line : lines) {
    json pts = json::array();
    for (const auto& p : line) pts.push_back({p.col, p.row});
    out.push_back(pts);
  }
  return out;
}

std::vector<std::vector<PixelPoint>> points_from_json(const json& j) {
  std::vector<std::vector<PixelPoint>> out;
  for (const auto& line : j) {
    std::vector<PixelPoint> pts;
    for (const auto& p : line) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    out.push_back(std::move(pts));
  }
  return out;
}

json levels_to_json(const BandLevels& l) {
  return json{{"RED", l.red}, {"GREEN", l.green}, {"BLUE", l.blue}, {"NIR", l.nir}};
}

BandLevels levels_from_json(const json& j, BandLevels l) {
  l.red = j.value("RED", l.red);
  l.green = j.value("GREEN", l.green);
  l.blue = j.value("BLUE", l.blue);
  l.nir = j.value("NIR", l.nir);
  return l;
}

}  // namespace

json to_json(const SceneSpec& s) {
  return json{{"width", s.width},
              {"height", s.height},
              {"gsd", s.gsd},
              {"origin_x", s.origin_x},
              {"origin_y", s.origin_y},
              {"epsg", s.epsg},
              {"water_polygons", points_to_json(s.water_polygons)},
              {"roads", points_to_json(s.roads)},
              {"water_levels", levels_to_json(s.water_levels)},
              {"land_levels", levels_to_json(s.land_levels)},
              {"noise_sigma", s.noise_sigma},
              {"seed", s.seed},
              {"acquired", s.acquired}};
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  try {
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.gsd = j.value("gsd", s.gsd);
    s.origin_x = j.value("origin_x", s.origin_x);
    s.origin_y = j.value("origin_y", s.origin_y);
    s.epsg = j.value("epsg", s.epsg);
    if (j.contains("water_polygons")) s.water_polygons = points_from_json(j["water_polygons"]);
    if (j.contains("roads")) s.roads = points_from_json(j["roads"]);
    if (j.contains("water_levels")) s.water_levels = levels_from_json(j["water_levels"], s.water_levels);
    if (j.contains("land_levels")) s.land_levels = levels_from_json(j["land_levels"], s.land_levels);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
    s.acquired = j.value("acquired", s.acquired);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scene spec: ") + e.what());
  }
  return s;
}

}  // namespace roadflood::water
