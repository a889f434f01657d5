#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace roadflood {

namespace band {
inline constexpr std::string_view kRed = "RED";
inline constexpr std::string_view kGreen = "GREEN";
inline constexpr std::string_view kBlue = "BLUE";
inline constexpr std::string_view kNir = "NIR";
inline constexpr std::string_view kNdwi = "NDWI";
}  // namespace band

/// North-up affine georeferencing. The origin is the top-left corner of
/// pixel (0,0); pixel centers sit at (col + 0.5, row + 0.5). Northing
/// decreases with row.
struct GeoTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_size_x = 1.0;
  double pixel_size_y = 1.0;
  int epsg = 0;

  void validate() const;

  /// Same grid with the origin moved to pixel (col, row).
  GeoTransform shifted(double col, double row) const;

  bool operator==(const GeoTransform&) const = default;
};

struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
};

struct PixelPoint {
  double col = 0.0;
  double row = 0.0;
};

WorldPoint pixel_to_world(const GeoTransform& geo, double col, double row);
PixelPoint world_to_pixel(const GeoTransform& geo, double x, double y);

/// Multi-band float32 grid, band-sequential and row-major within a band.
class Raster {
 public:
  Raster(int width, int height, std::vector<std::string> bands, std::vector<float> data,
         GeoTransform geo, std::optional<float> nodata = std::nullopt);

  static Raster zeros(int width, int height, std::vector<std::string> bands, GeoTransform geo);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  std::size_t band_count() const noexcept { return bands_.size(); }
  const std::vector<std::string>& bands() const noexcept { return bands_; }
  const GeoTransform& geo() const noexcept { return geo_; }
  const std::optional<float>& nodata() const noexcept { return nodata_; }

  std::optional<std::size_t> band_index(std::string_view label) const;
  /// Throws InvalidArgument when the label is absent.
  std::size_t require_band(std::string_view label) const;

  std::span<const float> band(std::size_t index) const;
  std::span<float> band(std::size_t index);
  std::span<const float> band(std::string_view label) const { return band(require_band(label)); }
  std::span<float> band(std::string_view label) { return band(require_band(label)); }

  float at(std::size_t b, int col, int row) const {
    return data_[b * pixel_count() + static_cast<std::size_t>(row) * width_ + col];
  }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  void set_geo(const GeoTransform& geo);

  bool operator==(const Raster& other) const;

 private:
  int width_;
  int height_;
  std::vector<std::string> bands_;
  std::vector<float> data_;
  GeoTransform geo_;
  std::optional<float> nodata_;
};

/// Binary label grid with the same georeferencing conventions as Raster.
class Mask {
 public:
  Mask(int width, int height, std::vector<std::uint8_t> values, GeoTransform geo);

  static Mask zeros(int width, int height, GeoTransform geo);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  const GeoTransform& geo() const noexcept { return geo_; }

  std::uint8_t at(int col, int row) const {
    return values_[static_cast<std::size_t>(row) * width_ + col];
  }
  void set(int col, int row, bool wet) {
    values_[static_cast<std::size_t>(row) * width_ + col] = wet ? 1 : 0;
  }

  std::span<const std::uint8_t> values() const noexcept { return values_; }
  std::size_t count() const;

  bool operator==(const Mask&) const = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> values_;
  GeoTransform geo_;
};

// Raster bundles: `<base>.json` metadata plus `<base>.bin` payload. The
// path argument may name the base, the .json, or the .bin file.
void save_raster(const Raster& raster, const std::filesystem::path& path);
Raster load_raster(const std::filesystem::path& path);
void save_mask(const Mask& mask, const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);

std::filesystem::path bundle_json_path(const std::filesystem::path& path);
std::filesystem::path bundle_bin_path(const std::filesystem::path& path);

nlohmann::json geotransform_to_json(const GeoTransform& geo);
GeoTransform geotransform_from_json(const nlohmann::json& j, int epsg);

}  // namespace roadflood
