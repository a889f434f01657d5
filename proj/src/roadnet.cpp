#include "roadflood/roadnet.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "roadflood/detail/io.hpp"
#include "roadflood/error.hpp"

namespace roadflood::roads {

using nlohmann::json;

namespace {

constexpr int kGeographicEpsg = 4326;

std::string feature_tag(std::size_t index) { return "feature " + std::to_string(index); }

int parse_crs_name(const std::string& name) {
  // "EPSG:32643" or "urn:ogc:def:crs:EPSG::32643"
  const auto pos = name.find_last_not_of("0123456789");
  if (pos == std::string::npos || pos + 1 == name.size() || name.find("EPSG") == std::string::npos) {
    throw FormatError("unrecognized crs name '" + name + "'");
  }
  return std::stoi(name.substr(pos + 1));
}

int read_epsg(const json& fc) {
  if (fc.contains("epsg")) {
    const auto& e = fc.at("epsg");
    if (!e.is_number_integer()) throw FormatError("\"epsg\" must be an integer");
    return e.get<int>();
  }
  if (fc.contains("crs")) {
    const auto& crs = fc.at("crs");
    if (crs.contains("properties") && crs.at("properties").contains("name")) {
      return parse_crs_name(crs.at("properties").at("name").get<std::string>());
    }
    throw FormatError("unsupported crs member");
  }
  return kGeographicEpsg;
}

Polyline read_line(const json& coords, std::size_t feature) {
  if (!coords.is_array()) throw FormatError(feature_tag(feature) + ": coordinates must be an array");
  Polyline line;
  for (const auto& pos : coords) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
      throw FormatError(feature_tag(feature) + ": malformed position");
    }
    const double x = pos[0].get<double>();
    const double y = pos[1].get<double>();
    if (!std::isfinite(x) || !std::isfinite(y)) throw FormatError(feature_tag(feature) + ": non-finite coordinate");
    line.push_back({x, y});
  }
  if (line.size() < 2) throw FormatError(feature_tag(feature) + ": a line needs at least 2 vertices");
  return line;
}

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

double meters_per_unit(int epsg, const IntersectOptions& opts) {
  if (opts.meters_per_unit) {
    if (!(*opts.meters_per_unit > 0.0) || !std::isfinite(*opts.meters_per_unit)) {
      throw InvalidArgument("meters_per_unit must be positive");
    }
    return *opts.meters_per_unit;
  }
  if (epsg == kGeographicEpsg) {
    throw InvalidArgument("geographic coordinates (EPSG:4326) need an explicit meters_per_unit");
  }
  return 1.0;
}

struct Run {
  std::size_t first = 0;
  std::size_t last = 0;
};

std::vector<FloodedSegment> intersect_feature(const Mask& mask, const RoadFeature& f, double spacing_m,
                                              double min_run_m, double mpu, const std::string& timestamp) {
  std::vector<FloodedSegment> out;
  for (std::size_t li = 0; li < f.polylines.size(); ++li) {
    const auto samples = sample_polyline(f.polylines[li], spacing_m, mpu);
    std::vector<Run> runs;
    std::optional<std::size_t> open;
    for (std::size_t i = 0; i <= samples.size(); ++i) {
      const bool wet = i < samples.size() && is_wet(mask, samples[i].point);
      if (wet && !open) open = i;
      if (!wet && open) {
        runs.push_back({*open, i - 1});
        open.reset();
      }
    }
    for (const auto& r : runs) {
      const double length = samples[r.last].arc_m - samples[r.first].arc_m;
      if (r.last == r.first || length + 1e-9 < min_run_m) continue;
      FloodedSegment s;
      s.road_id = f.road_id;
      s.polyline = li;
      s.start = samples[r.first].point;
      s.end = samples[r.last].point;
      s.start_arc_m = samples[r.first].arc_m;
      s.length_m = length;
      s.sample_count = r.last - r.first + 1;
      s.timestamp = timestamp;
      for (std::size_t i = r.first; i <= r.last; ++i) s.vertices.push_back(samples[i].point);
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace

RoadNetwork roads_from_json(const json& fc, const LoadOptions& opts) {
  if (!fc.is_object() || fc.value("type", "") != "FeatureCollection") {
    throw FormatError("expected a GeoJSON FeatureCollection");
  }
  RoadNetwork net;
  net.epsg = read_epsg(fc);
  const auto& features = fc.at("features");
  if (!features.is_array()) throw FormatError("\"features\" must be an array");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& feat = features[i];
    if (!feat.contains("geometry") || feat.at("geometry").is_null()) {
      throw FormatError(feature_tag(i) + ": missing geometry");
    }
    const auto& geom = feat.at("geometry");
    const std::string type = geom.value("type", "");
    if (!geom.contains("coordinates")) throw FormatError(feature_tag(i) + ": missing coordinates");
    RoadFeature rf;
    if (type == "LineString") {
      rf.polylines.push_back(read_line(geom.at("coordinates"), i));
    } else if (type == "MultiLineString") {
      for (const auto& part : geom.at("coordinates")) rf.polylines.push_back(read_line(part, i));
      if (rf.polylines.empty()) throw FormatError(feature_tag(i) + ": empty MultiLineString");
    } else {
      throw FormatError(feature_tag(i) + ": unsupported geometry type '" + type + "'");
    }
    if (feat.contains("properties") && feat.at("properties").is_object()) rf.properties = feat.at("properties");
    if (rf.properties.contains(opts.id_key) && !rf.properties.at(opts.id_key).is_null()) {
      rf.road_id = id_string(rf.properties.at(opts.id_key));
    } else {
      rf.road_id = std::to_string(i);
    }
    net.features.push_back(std::move(rf));
  }
  return net;
}

RoadNetwork load_roads(const std::filesystem::path& path, const LoadOptions& opts) {
  try {
    return roads_from_json(detail::read_json(path), opts);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<Sample> sample_polyline(const Polyline& line, double spacing_m, double mpu) {
  if (!(spacing_m > 0.0)) throw InvalidArgument("sample spacing must be positive");
  if (line.size() < 2) throw InvalidArgument("a line needs at least 2 vertices");
  std::vector<double> cum(line.size(), 0.0);
  for (std::size_t i = 1; i < line.size(); ++i) {
    cum[i] = cum[i - 1] + std::hypot(line[i].x - line[i - 1].x, line[i].y - line[i - 1].y) * mpu;
  }
  const double total = cum.back();
  std::vector<Sample> out;
  std::size_t seg = 0;
  auto point_at = [&](double arc) {
    while (seg + 2 < line.size() && cum[seg + 1] < arc) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0.0 ? std::clamp((arc - cum[seg]) / len, 0.0, 1.0) : 0.0;
    return WorldPoint{line[seg].x + t * (line[seg + 1].x - line[seg].x),
                      line[seg].y + t * (line[seg + 1].y - line[seg].y)};
  };
  for (std::size_t k = 0;; ++k) {
    const double arc = static_cast<double>(k) * spacing_m;
    if (arc > total - 1e-9 * std::max(1.0, total)) break;
    out.push_back({point_at(arc), arc});
  }
  out.push_back({line.back(), total});
  return out;
}

bool is_wet(const Mask& mask, const WorldPoint& p) {
  const auto px = world_to_pixel(mask.geo(), p.x, p.y);
  const double c = std::floor(px.col);
  const double r = std::floor(px.row);
  if (c < 0.0 || r < 0.0 || c >= mask.width() || r >= mask.height()) return false;
  return mask.at(static_cast<int>(c), static_cast<int>(r)) != 0;
}

std::vector<FloodedSegment> intersect(const Mask& mask, const RoadNetwork& roads, const IntersectOptions& opts) {
  mask.geo().validate();
  if (mask.geo().epsg != roads.epsg) {
    throw InvalidArgument("CRS mismatch: mask EPSG:" + std::to_string(mask.geo().epsg) + ", roads EPSG:" +
                          std::to_string(roads.epsg));
  }
  const double mpu = meters_per_unit(roads.epsg, opts);
  const double gsd_m = mask.geo().pixel_size_x * mpu;
  if (!(gsd_m > 0.0)) throw InvalidArgument("mask GSD must be positive");
  const double spacing = opts.sample_spacing_m.value_or(gsd_m / 2.0);
  if (!(spacing > 0.0)) throw InvalidArgument("sample spacing must be positive");
  const double min_run = opts.min_run_m.value_or(3.0 * spacing);
  if (!(min_run >= 0.0)) throw InvalidArgument("min_run_m must be non-negative");

  const std::size_t n = roads.features.size();
  std::vector<std::vector<FloodedSegment>> per_feature(n);
  const auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < n; i += step) {
      per_feature[i] = intersect_feature(mask, roads.features[i], spacing, min_run, mpu, opts.timestamp);
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, opts.threads));
  if (threads == 1 || n < 2) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(work, t, std::min(threads, n));
  }

  std::vector<FloodedSegment> out;
  for (auto& v : per_feature) std::move(v.begin(), v.end(), std::back_inserter(out));
  std::stable_sort(out.begin(), out.end(), [](const FloodedSegment& a, const FloodedSegment& b) {
    if (a.road_id != b.road_id) return a.road_id < b.road_id;
    if (a.polyline != b.polyline) return a.polyline < b.polyline;
    return a.start_arc_m < b.start_arc_m;
  });
  return out;
}

json flooded_to_geojson(std::span<const FloodedSegment> segments, int epsg) {
  json features = json::array();
  for (const auto& s : segments) {
    json coords = json::array();
    for (const auto& v : s.vertices) coords.push_back({v.x, v.y});
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                        {"properties",
                         {{"road_id", s.road_id},
                          {"length_m", s.length_m},
                          {"timestamp", s.timestamp},
                          {"sample_count", s.sample_count}}}});
  }
  return json{{"type", "FeatureCollection"}, {"epsg", epsg}, {"features", features}};
}

void write_flooded_geojson(std::span<const FloodedSegment> segments, int epsg, const std::filesystem::path& path) {
  detail::write_json(path, flooded_to_geojson(segments, epsg));
}

RoadNetwork roads_from_pixels(std::span<const std::vector<PixelPoint>> lines, const GeoTransform& geo) {
  RoadNetwork net;
  net.epsg = geo.epsg;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    RoadFeature f;
    f.road_id = "road-" + std::to_string(i);
    Polyline line;
    for (const auto& p : lines[i]) line.push_back(pixel_to_world(geo, p.col, p.row));
    if (line.size() < 2) throw InvalidArgument("road " + std::to_string(i) + " needs at least 2 vertices");
    f.polylines.push_back(std::move(line));
    f.properties = json{{"id", f.road_id}};
    net.features.push_back(std::move(f));
  }
  return net;
}

json roads_to_geojson(const RoadNetwork& net) {
  json features = json::array();
  for (const auto& f : net.features) {
    json geom;
    auto line_coords = [](const Polyline& l) {
      json c = json::array();
      for (const auto& v : l) c.push_back({v.x, v.y});
      return c;
    };
    if (f.polylines.size() == 1) {
      geom = {{"type", "LineString"}, {"coordinates", line_coords(f.polylines[0])}};
    } else {
      json parts = json::array();
      for (const auto& l : f.polylines) parts.push_back(line_coords(l));
      geom = {{"type", "MultiLineString"}, {"coordinates", parts}};
    }
    json props = f.properties.is_object() ? f.properties : json::object();
    if (!props.contains("id")) props["id"] = f.road_id;
    features.push_back({{"type", "Feature"}, {"geometry", geom}, {"properties", props}});
  }
  return json{{"type", "FeatureCollection"}, {"epsg", net.epsg}, {"features", features}};
}

}  // namespace roadflood::roads
