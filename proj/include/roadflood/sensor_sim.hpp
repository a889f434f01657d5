#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "roadflood/raster.hpp"

// Onboard-imagery simulator: bicubic resampling to the target GSD,
// per-band pushbroom misalignment, PSF blur, radiance to TOA reflectance,
// and tiling into fixed-size grids.
namespace roadflood::sim {

struct GaussianPsf {
  double sigma_px = 1.0;
  int radius_px = 3;
};

/// Explicit odd-sized square kernel, row-major. Normalized before use.
struct KernelPsf {
  int side = 1;
  std::vector<double> weights{1.0};
};

using PsfSpec = std::variant<GaussianPsf, KernelPsf>;

/// Normalized square kernel ready for convolution.
struct Kernel2D {
  int side = 1;
  std::vector<double> weights{1.0};
  int radius() const { return side / 2; }
};

Kernel2D make_kernel(const PsfSpec& psf);

struct SolarGeometry {
  std::vector<double> esun_per_band;  // W m^-2 um^-1, one per raster band in band order
  double sun_zenith_deg = 30.0;
  double earth_sun_dist_au = 1.0;

  void validate() const;
};

struct SimConfig {
  double source_gsd = 10.0;
  double target_gsd = 4.75;
  std::string reference_band = "GREEN";
  double misalign_sigma = 4.75;  // meters
  PsfSpec psf = GaussianPsf{};
  SolarGeometry solar;
  int tile_size = 4096;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Default solar inputs for a RED, GREEN, BLUE, NIR stack (Sentinel-2A
/// B4, B3, B2, B8 irradiances), sun zenith 30 deg, 1 AU.
SolarGeometry default_solar_rgbn();

/// Shift applied to one band. dx moves content toward +col, dy toward +row,
/// both in meters.
struct BandShift {
  std::string band;
  double dx_m = 0.0;
  double dy_m = 0.0;
};

struct MisalignmentReport {
  std::vector<BandShift> shifts;
  std::string reference_band;
  double rmse_m = 0.0;
};

struct TileIndex {
  int tile_col = 0;
  int tile_row = 0;
  int col_offset = 0;
  int row_offset = 0;
  int valid_width = 0;
  int valid_height = 0;
  bool padded = false;

  std::string id() const;
};

struct Tile {
  Raster raster;
  TileIndex index;
};

struct SimResult {
  std::vector<Tile> tiles;
  MisalignmentReport misalignment;
};

/// Keys cubic convolution weight, a = -0.5.
double cubic_weight(double x);

Raster resample_bicubic(const Raster& r, double target_gsd);

/// Draws one half-normal magnitude and uniform direction per non-reference
/// band, in band order.
std::vector<BandShift> draw_shifts(const Raster& r, const SimConfig& cfg);

/// Applies explicit shifts with the bicubic kernel. Bands not listed are
/// left untouched.
Raster shift_bands(const Raster& r, std::span<const BandShift> shifts);

std::pair<Raster, MisalignmentReport> misalign_bands(const Raster& r, const SimConfig& cfg);

double shift_rmse(std::span<const BandShift> shifts, const std::string& reference_band);

Raster apply_psf(const Raster& r, const PsfSpec& psf);

Raster radiance_to_reflectance(const Raster& r, const SolarGeometry& solar);
/// Exact inverse of radiance_to_reflectance; used to synthesize at-sensor
/// radiance from a reflectance scene.
Raster reflectance_to_radiance(const Raster& r, const SolarGeometry& solar);

std::vector<Tile> tile(const Raster& r, int tile_size);

/// Reassembles the valid extents of a tile set into a width x height raster.
Raster mosaic(std::span<const Tile> tiles, int width, int height);

SimResult simulate(const Raster& r, const SimConfig& cfg);

nlohmann::json to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MisalignmentReport& report);
nlohmann::json to_json(const TileIndex& index);
TileIndex tile_index_from_json(const nlohmann::json& j);

}  // namespace roadflood::sim
