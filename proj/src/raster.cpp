#include "roadflood/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "roadflood/detail/io.hpp"
#include "roadflood/error.hpp"

namespace roadflood {

namespace fs = std::filesystem;
using nlohmann::json;

void GeoTransform::validate() const {
  if (!(pixel_size_x > 0.0) || !(pixel_size_y > 0.0)) {
    throw InvalidArgument("geotransform pixel sizes must be positive");
  }
  if (epsg <= 0) throw InvalidArgument("geotransform epsg must be positive");
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
    throw InvalidArgument("geotransform origin must be finite");
  }
}

GeoTransform GeoTransform::shifted(double col, double row) const {
  GeoTransform g = *this;
  const auto corner = pixel_to_world(*this, col, row);
  g.origin_x = corner.x;
  g.origin_y = corner.y;
  return g;
}

WorldPoint pixel_to_world(const GeoTransform& geo, double col, double row) {
  return {geo.origin_x + col * geo.pixel_size_x, geo.origin_y - row * geo.pixel_size_y};
}

PixelPoint world_to_pixel(const GeoTransform& geo, double x, double y) {
  return {(x - geo.origin_x) / geo.pixel_size_x, (geo.origin_y - y) / geo.pixel_size_y};
}

// ---------------------------------------------------------------------------
// Raster

Raster::Raster(int width, int height, std::vector<std::string> bands, std::vector<float> data,
               GeoTransform geo, std::optional<float> nodata)
    : width_(width),
      height_(height),
      bands_(std::move(bands)),
      data_(std::move(data)),
      geo_(geo),
      nodata_(nodata) {
  if (width_ <= 0 || height_ <= 0) throw InvalidArgument("raster dimensions must be positive");
  if (bands_.empty()) throw InvalidArgument("raster needs at least one band");
  std::set<std::string> seen;
  for (const auto& b : bands_) {
    if (b.empty()) throw InvalidArgument("empty band label");
    if (!seen.insert(b).second) throw InvalidArgument("duplicate band label " + b);
  }
  if (data_.size() != pixel_count() * bands_.size()) {
    throw InvalidArgument("raster payload has " + std::to_string(data_.size()) + " values, expected " +
                          std::to_string(pixel_count() * bands_.size()));
  }
  geo_.validate();
}

Raster Raster::zeros(int width, int height, std::vector<std::string> bands, GeoTransform geo) {
  if (width <= 0 || height <= 0) throw InvalidArgument("raster dimensions must be positive");
  const std::size_t n = static_cast<std::size_t>(width) * height * bands.size();
  return Raster(width, height, std::move(bands), std::vector<float>(n, 0.0f), geo);
}

std::optional<std::size_t> Raster::band_index(std::string_view label) const {
  for (std::size_t i = 0; i < bands_.size(); ++i) {
    if (bands_[i] == label) return i;
  }
  return std::nullopt;
}

std::size_t Raster::require_band(std::string_view label) const {
  if (auto i = band_index(label)) return *i;
  throw InvalidArgument("raster has no band " + std::string(label));
}

std::span<const float> Raster::band(std::size_t index) const {
  if (index >= bands_.size()) throw InvalidArgument("band index out of range");
  return std::span<const float>(data_).subspan(index * pixel_count(), pixel_count());
}

std::span<float> Raster::band(std::size_t index) {
  if (index >= bands_.size()) throw InvalidArgument("band index out of range");
  return std::span<float>(data_).subspan(index * pixel_count(), pixel_count());
}

void Raster::set_geo(const GeoTransform& geo) {
  geo.validate();
  geo_ = geo;
}

bool Raster::operator==(const Raster& other) const {
  if (width_ != other.width_ || height_ != other.height_ || bands_ != other.bands_ ||
      !(geo_ == other.geo_) || nodata_.has_value() != other.nodata_.has_value()) {
    return false;
  }
  if (nodata_ && std::memcmp(&*nodata_, &*other.nodata_, sizeof(float)) != 0) return false;
  return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------
// Mask

Mask::Mask(int width, int height, std::vector<std::uint8_t> values, GeoTransform geo)
    : width_(width), height_(height), values_(std::move(values)), geo_(geo) {
  if (width_ <= 0 || height_ <= 0) throw InvalidArgument("mask dimensions must be positive");
  if (values_.size() != pixel_count()) {
    throw InvalidArgument("mask payload has " + std::to_string(values_.size()) + " values, expected " +
                          std::to_string(pixel_count()));
  }
  if (std::any_of(values_.begin(), values_.end(), [](std::uint8_t v) { return v > 1; })) {
    throw InvalidArgument("mask values must be 0 or 1");
  }
  geo_.validate();
}

Mask Mask::zeros(int width, int height, GeoTransform geo) {
  if (width <= 0 || height <= 0) throw InvalidArgument("mask dimensions must be positive");
  return Mask(width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0), geo);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

// ---------------------------------------------------------------------------
// Bundle I/O

namespace {

fs::path bundle_base(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".json" || ext == ".bin") {
    fs::path base = path;
    base.replace_extension();
    return base;
  }
  return path;
}

fs::path with_suffix(const fs::path& base, const char* suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

json bundle_header(int width, int height, const std::vector<std::string>& bands, const char* dtype,
                   const GeoTransform& geo) {
  json j;
  j["width"] = width;
  j["height"] = height;
  j["bands"] = bands;
  j["dtype"] = dtype;
  j["geotransform"] = geotransform_to_json(geo);
  j["epsg"] = geo.epsg;
  return j;
}

struct BundleHeader {
  int width;
  int height;
  std::vector<std::string> bands;
  std::string dtype;
  GeoTransform geo;
  std::optional<float> nodata;
};

BundleHeader parse_header(const fs::path& json_path) {
  const json j = detail::read_json(json_path);
  try {
    BundleHeader h;
    h.width = j.at("width").get<int>();
    h.height = j.at("height").get<int>();
    h.bands = j.at("bands").get<std::vector<std::string>>();
    h.dtype = j.at("dtype").get<std::string>();
    h.geo = geotransform_from_json(j.at("geotransform"), j.at("epsg").get<int>());
    if (j.contains("nodata") && !j["nodata"].is_null()) h.nodata = j["nodata"].get<float>();
    if (h.width <= 0 || h.height <= 0) {
      throw FormatError(json_path.string() + ": non-positive dimensions");
    }
    if (h.dtype != "f32" && h.dtype != "u8") {
      throw FormatError(json_path.string() + ": unknown dtype '" + h.dtype + "'");
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
}

}  // namespace

fs::path bundle_json_path(const fs::path& path) { return with_suffix(bundle_base(path), ".json"); }
fs::path bundle_bin_path(const fs::path& path) { return with_suffix(bundle_base(path), ".bin"); }

json geotransform_to_json(const GeoTransform& geo) {
  return json{{"origin_x", geo.origin_x},
              {"origin_y", geo.origin_y},
              {"pixel_size_x", geo.pixel_size_x},
              {"pixel_size_y", geo.pixel_size_y}};
}

GeoTransform geotransform_from_json(const json& j, int epsg) {
  GeoTransform g;
  g.origin_x = j.at("origin_x").get<double>();
  g.origin_y = j.at("origin_y").get<double>();
  g.pixel_size_x = j.at("pixel_size_x").get<double>();
  g.pixel_size_y = j.at("pixel_size_y").get<double>();
  g.epsg = epsg;
  return g;
}

void save_raster(const Raster& raster, const fs::path& path) {
  json header = bundle_header(raster.width(), raster.height(), raster.bands(), "f32", raster.geo());
  if (raster.nodata()) header["nodata"] = *raster.nodata();

  std::vector<std::uint8_t> payload;
  payload.reserve(raster.data().size() * sizeof(float));
  for (float v : raster.data()) detail::put_le(payload, v);

  detail::write_file(bundle_bin_path(path), payload);
  detail::write_json(bundle_json_path(path), header);
}

Raster load_raster(const fs::path& path) {
  const auto h = parse_header(bundle_json_path(path));
  if (h.dtype != "f32") throw FormatError("raster bundle must have dtype f32, got " + h.dtype);
  const auto bytes = detail::read_file(bundle_bin_path(path));
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * h.bands.size();
  if (bytes.size() != n * sizeof(float)) {
    throw FormatError(bundle_bin_path(path).string() + ": payload is " + std::to_string(bytes.size()) +
                      " bytes, metadata declares " + std::to_string(n * sizeof(float)));
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = detail::get_le<float>(bytes.data() + i * sizeof(float));
  try {
    return Raster(h.width, h.height, h.bands, std::move(data), h.geo, h.nodata);
  } catch (const InvalidArgument& e) {
    throw FormatError(bundle_json_path(path).string() + ": " + e.what());
  }
}

void save_mask(const Mask& mask, const fs::path& path) {
  const json header = bundle_header(mask.width(), mask.height(), {"MASK"}, "u8", mask.geo());
  detail::write_file(bundle_bin_path(path), mask.values());
  detail::write_json(bundle_json_path(path), header);
}

Mask load_mask(const fs::path& path) {
  const auto h = parse_header(bundle_json_path(path));
  if (h.dtype != "u8") throw FormatError("mask bundle must have dtype u8, got " + h.dtype);
  if (h.bands.size() != 1) throw FormatError("mask bundle must have exactly one band");
  auto bytes = detail::read_file(bundle_bin_path(path));
  if (bytes.size() != static_cast<std::size_t>(h.width) * h.height) {
    throw FormatError(bundle_bin_path(path).string() + ": payload length does not match metadata");
  }
  try {
    return Mask(h.width, h.height, std::move(bytes), h.geo);
  } catch (const InvalidArgument& e) {
    throw FormatError(bundle_json_path(path).string() + ": " + e.what());
  }
}

}  // namespace roadflood
