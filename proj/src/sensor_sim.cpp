#include "roadflood/sensor_sim.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "roadflood/error.hpp"
#include "roadflood/rng.hpp"

namespace roadflood::sim {

using nlohmann::json;

namespace {

constexpr double kCubicA = -0.5;

/// Four-tap interpolation stencil along one axis.
struct AxisTaps {
  std::vector<std::array<int, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

// `source_coord(j)` gives the continuous source index (pixel-center units)
// sampled by output index j. Source indices are clamped to [0, n).
template <typename Fn>
AxisTaps cubic_taps(int out_n, int src_n, Fn source_coord) {
  AxisTaps taps;
  taps.index.resize(out_n);
  taps.weight.resize(out_n);
  for (int j = 0; j < out_n; ++j) {
    const double u = source_coord(j);
    const double base = std::floor(u);
    const double t = u - base;
    const int x0 = static_cast<int>(base);
    for (int k = 0; k < 4; ++k) {
      taps.index[j][k] = std::clamp(x0 - 1 + k, 0, src_n - 1);
      taps.weight[j][k] = cubic_weight(t - (k - 1));
    }
  }
  return taps;
}

/// Reflect-101 index (edge pixel not repeated).
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Generic separable pass over one band: horizontal taps on every source
// row, then vertical taps. Accumulates in double so partition-of-unity
// kernels reproduce constants exactly after rounding to float.
template <std::size_t K>
std::vector<float> separable(std::span<const float> src, int w, int h,
                             const std::vector<std::array<int, K>>& col_idx,
                             const std::vector<std::array<double, K>>& col_w,
                             const std::vector<std::array<int, K>>& row_idx,
                             const std::vector<std::array<double, K>>& row_w) {
  const int out_w = static_cast<int>(col_idx.size());
  const int out_h = static_cast<int>(row_idx.size());
  std::vector<double> tmp(static_cast<std::size_t>(h) * out_w);
  for (int y = 0; y < h; ++y) {
    const float* row = src.data() + static_cast<std::size_t>(y) * w;
    double* dst = tmp.data() + static_cast<std::size_t>(y) * out_w;
    for (int j = 0; j < out_w; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) acc += col_w[j][k] * row[col_idx[j][k]];
      dst[j] = acc;
    }
  }
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w);
  std::vector<double> acc(out_w);
  for (int i = 0; i < out_h; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double wk = row_w[i][k];
      const double* srow = tmp.data() + static_cast<std::size_t>(row_idx[i][k]) * out_w;
      for (int j = 0; j < out_w; ++j) acc[j] += wk * srow[j];
    }
    float* dst = out.data() + static_cast<std::size_t>(i) * out_w;
    for (int j = 0; j < out_w; ++j) dst[j] = static_cast<float>(acc[j]);
  }
  return out;
}

std::vector<float> shift_plane(std::span<const float> src, int w, int h, double sx, double sy) {
  const auto cols = cubic_taps(w, w, [&](int j) { return j - sx; });
  const auto rows = cubic_taps(h, h, [&](int i) { return i - sy; });
  return separable<4>(src, w, h, cols.index, cols.weight, rows.index, rows.weight);
}

std::vector<double> gaussian_1d(const GaussianPsf& g) {
  if (!(g.sigma_px > 0.0)) throw InvalidArgument("gaussian PSF sigma must be positive");
  if (g.radius_px < 0) throw InvalidArgument("gaussian PSF radius must be non-negative");
  std::vector<double> k(2 * g.radius_px + 1);
  double sum = 0.0;
  for (int i = -g.radius_px; i <= g.radius_px; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (g.sigma_px * g.sigma_px));
    k[i + g.radius_px] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

std::vector<float> convolve_direct(std::span<const float> src, int w, int h, const Kernel2D& k) {
  const int r = k.radius();
  std::vector<float> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int ky = 0; ky < k.side; ++ky) {
        const int sy = reflect_index(y - (ky - r), h);
        for (int kx = 0; kx < k.side; ++kx) {
          const int sx = reflect_index(x - (kx - r), w);
          acc += k.weights[static_cast<std::size_t>(ky) * k.side + kx] *
                 src[static_cast<std::size_t>(sy) * w + sx];
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  }
  return out;
}

// Separable convolution with a symmetric 1-D kernel, reflect-101 padding.
std::vector<float> convolve_separable(std::span<const float> src, int w, int h,
                                      const std::vector<double>& k1) {
  const int r = static_cast<int>(k1.size() / 2);
  const int side = static_cast<int>(k1.size());
  std::vector<double> tmp(src.size());
  for (int y = 0; y < h; ++y) {
    const float* row = src.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < side; ++k) acc += k1[k] * row[reflect_index(x - (k - r), w)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  std::vector<float> out(src.size());
  std::vector<double> acc(w);
  for (int y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int k = 0; k < side; ++k) {
      const double* srow = tmp.data() + static_cast<std::size_t>(reflect_index(y - (k - r), h)) * w;
      for (int x = 0; x < w; ++x) acc[x] += k1[k] * srow[x];
    }
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc[x]);
  }
  return out;
}

}  // namespace

double cubic_weight(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((kCubicA + 2.0) * ax - (kCubicA + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((kCubicA * ax - 5.0 * kCubicA) * ax + 8.0 * kCubicA) * ax - 4.0 * kCubicA;
  return 0.0;
}

Kernel2D make_kernel(const PsfSpec& psf) {
  Kernel2D k;
  if (const auto* g = std::get_if<GaussianPsf>(&psf)) {
    const auto k1 = gaussian_1d(*g);
    k.side = static_cast<int>(k1.size());
    k.weights.assign(k1.size() * k1.size(), 0.0);
    for (int y = 0; y < k.side; ++y) {
      for (int x = 0; x < k.side; ++x) k.weights[y * k.side + x] = k1[y] * k1[x];
    }
    return k;
  }
  const auto& e = std::get<KernelPsf>(psf);
  if (e.side <= 0 || e.side % 2 == 0) throw InvalidArgument("PSF kernel side must be odd and positive");
  if (e.weights.size() != static_cast<std::size_t>(e.side) * e.side) {
    throw InvalidArgument("PSF kernel has wrong number of weights");
  }
  double sum = 0.0;
  for (double v : e.weights) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("PSF weights must be finite and non-negative");
    sum += v;
  }
  if (sum <= 0.0) throw InvalidArgument("PSF kernel is all zeros");
  k.side = e.side;
  k.weights = e.weights;
  for (auto& v : k.weights) v /= sum;
  return k;
}

void SolarGeometry::validate() const {
  for (double e : esun_per_band) {
    if (!(e > 0.0)) throw InvalidArgument("solar irradiance must be positive");
  }
  if (!(sun_zenith_deg >= 0.0 && sun_zenith_deg < 90.0)) {
    throw InvalidArgument("sun zenith must lie in [0, 90) degrees");
  }
  if (!(earth_sun_dist_au > 0.0)) throw InvalidArgument("earth-sun distance must be positive");
}

void SimConfig::validate() const {
  if (!(source_gsd > 0.0)) throw InvalidArgument("source_gsd must be positive");
  if (!(target_gsd > 0.0)) throw InvalidArgument("target_gsd must be positive");
  if (tile_size <= 0) throw InvalidArgument("tile_size must be positive");
  if (!(misalign_sigma >= 0.0)) throw InvalidArgument("misalign_sigma must be non-negative");
  solar.validate();
  (void)make_kernel(psf);
}

SolarGeometry default_solar_rgbn() {
  return SolarGeometry{{1512.06, 1823.24, 1959.72, 1036.39}, 30.0, 1.0};
}

std::string TileIndex::id() const {
  return "tile_r" + std::to_string(tile_row) + "_c" + std::to_string(tile_col);
}

// ---------------------------------------------------------------------------

Raster resample_bicubic(const Raster& r, double target_gsd) {
  if (!(target_gsd > 0.0)) throw InvalidArgument("target_gsd must be positive");
  const auto& geo = r.geo();
  const double src_gsd = geo.pixel_size_x;
  if (std::abs(geo.pixel_size_x - geo.pixel_size_y) > 1e-9 * src_gsd) {
    throw InvalidArgument("bicubic resampling requires square pixels");
  }
  const double ratio = src_gsd / target_gsd;
  // The 1e-9 slack keeps exact multiples (e.g. 4.75 -> 4.75) from flooring down.
  const int out_w = static_cast<int>(std::floor(r.width() * ratio + 1e-9));
  const int out_h = static_cast<int>(std::floor(r.height() * ratio + 1e-9));
  if (out_w <= 0 || out_h <= 0) throw InvalidArgument("resampled raster would be empty");

  const double step = target_gsd / src_gsd;
  const auto cols = cubic_taps(out_w, r.width(), [&](int j) { return (j + 0.5) * step - 0.5; });
  const auto rows = cubic_taps(out_h, r.height(), [&](int i) { return (i + 0.5) * step - 0.5; });

  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(out_w) * out_h * r.band_count());
  for (std::size_t b = 0; b < r.band_count(); ++b) {
    auto plane = separable<4>(r.band(b), r.width(), r.height(), cols.index, cols.weight, rows.index,
                              rows.weight);
    data.insert(data.end(), plane.begin(), plane.end());
  }
  GeoTransform out_geo = geo;
  out_geo.pixel_size_x = target_gsd;
  out_geo.pixel_size_y = target_gsd;
  return Raster(out_w, out_h, r.bands(), std::move(data), out_geo, r.nodata());
}

std::vector<BandShift> draw_shifts(const Raster& r, const SimConfig& cfg) {
  r.require_band(cfg.reference_band);
  Rng rng(cfg.seed);
  std::vector<BandShift> shifts;
  for (const auto& label : r.bands()) {
    if (label == cfg.reference_band) {
      shifts.push_back({label, 0.0, 0.0});
      continue;
    }
    // Both draws happen even when sigma is 0 so the stream layout is fixed.
    const double magnitude = std::abs(rng.normal(0.0, cfg.misalign_sigma));
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    shifts.push_back({label, magnitude * std::cos(theta), magnitude * std::sin(theta)});
  }
  return shifts;
}

Raster shift_bands(const Raster& r, std::span<const BandShift> shifts) {
  Raster out = r;
  const double gx = r.geo().pixel_size_x;
  const double gy = r.geo().pixel_size_y;
  for (const auto& s : shifts) {
    if (s.dx_m == 0.0 && s.dy_m == 0.0) continue;
    const auto b = r.require_band(s.band);
    auto plane = shift_plane(r.band(b), r.width(), r.height(), s.dx_m / gx, s.dy_m / gy);
    std::copy(plane.begin(), plane.end(), out.band(b).begin());
  }
  return out;
}

double shift_rmse(std::span<const BandShift> shifts, const std::string& reference_band) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : shifts) {
    if (s.band == reference_band) continue;
    sum += s.dx_m * s.dx_m + s.dy_m * s.dy_m;
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

std::pair<Raster, MisalignmentReport> misalign_bands(const Raster& r, const SimConfig& cfg) {
  MisalignmentReport report;
  report.reference_band = cfg.reference_band;
  report.shifts = draw_shifts(r, cfg);
  report.rmse_m = shift_rmse(report.shifts, cfg.reference_band);
  return {shift_bands(r, report.shifts), std::move(report)};
}

Raster apply_psf(const Raster& r, const PsfSpec& psf) {
  Raster out = r;
  if (const auto* g = std::get_if<GaussianPsf>(&psf)) {
    const auto k1 = gaussian_1d(*g);
    for (std::size_t b = 0; b < r.band_count(); ++b) {
      auto plane = convolve_separable(r.band(b), r.width(), r.height(), k1);
      std::copy(plane.begin(), plane.end(), out.band(b).begin());
    }
    return out;
  }
  const auto k = make_kernel(psf);
  if (k.side == 1) return out;
  for (std::size_t b = 0; b < r.band_count(); ++b) {
    auto plane = convolve_direct(r.band(b), r.width(), r.height(), k);
    std::copy(plane.begin(), plane.end(), out.band(b).begin());
  }
  return out;
}

namespace {

std::vector<double> reflectance_factors(const Raster& r, const SolarGeometry& solar) {
  solar.validate();
  if (solar.esun_per_band.size() != r.band_count()) {
    throw InvalidArgument("expected " + std::to_string(r.band_count()) + " solar irradiance values, got " +
                          std::to_string(solar.esun_per_band.size()));
  }
  const double cos_zenith = std::cos(solar.sun_zenith_deg * std::numbers::pi / 180.0);
  const double d2 = solar.earth_sun_dist_au * solar.earth_sun_dist_au;
  std::vector<double> f;
  for (double esun : solar.esun_per_band) f.push_back(std::numbers::pi * d2 / (esun * cos_zenith));
  return f;
}

Raster scale_bands(const Raster& r, const std::vector<double>& factors, bool divide) {
  Raster out = r;
  for (std::size_t b = 0; b < r.band_count(); ++b) {
    auto src = r.band(b);
    auto dst = out.band(b);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (r.nodata() && src[i] == *r.nodata()) continue;
      const double v = divide ? src[i] / factors[b] : src[i] * factors[b];
      dst[i] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace

Raster radiance_to_reflectance(const Raster& r, const SolarGeometry& solar) {
  return scale_bands(r, reflectance_factors(r, solar), false);
}

Raster reflectance_to_radiance(const Raster& r, const SolarGeometry& solar) {
  return scale_bands(r, reflectance_factors(r, solar), true);
}

std::vector<Tile> tile(const Raster& r, int tile_size) {
  if (tile_size <= 0) throw InvalidArgument("tile_size must be positive");
  const int nx = (r.width() + tile_size - 1) / tile_size;
  const int ny = (r.height() + tile_size - 1) / tile_size;
  std::vector<Tile> tiles;
  tiles.reserve(static_cast<std::size_t>(nx) * ny);
  for (int ty = 0; ty < ny; ++ty) {
    for (int tx = 0; tx < nx; ++tx) {
      TileIndex idx;
      idx.tile_col = tx;
      idx.tile_row = ty;
      idx.col_offset = tx * tile_size;
      idx.row_offset = ty * tile_size;
      idx.valid_width = std::min(tile_size, r.width() - idx.col_offset);
      idx.valid_height = std::min(tile_size, r.height() - idx.row_offset);
      idx.padded = idx.valid_width < tile_size || idx.valid_height < tile_size;

      const std::size_t plane = static_cast<std::size_t>(tile_size) * tile_size;
      std::vector<float> buf(plane * r.band_count(), 0.0f);
      for (std::size_t b = 0; b < r.band_count(); ++b) {
        auto src = r.band(b);
        float* dst = buf.data() + b * plane;
        for (int y = 0; y < idx.valid_height; ++y) {
          const auto* s = src.data() + static_cast<std::size_t>(idx.row_offset + y) * r.width() + idx.col_offset;
          std::copy(s, s + idx.valid_width, dst + static_cast<std::size_t>(y) * tile_size);
        }
      }
      Raster t(tile_size, tile_size, r.bands(), std::move(buf), r.geo().shifted(idx.col_offset, idx.row_offset),
               r.nodata());
      tiles.push_back({std::move(t), idx});
    }
  }
  return tiles;
}

Raster mosaic(std::span<const Tile> tiles, int width, int height) {
  if (tiles.empty()) throw InvalidArgument("mosaic needs at least one tile");
  const auto& first = tiles.front();
  const auto geo = first.raster.geo().shifted(-first.index.col_offset, -first.index.row_offset);
  auto out = Raster::zeros(width, height, first.raster.bands(), geo);
  for (const auto& t : tiles) {
    const int ts = t.raster.width();
    for (std::size_t b = 0; b < out.band_count(); ++b) {
      auto src = t.raster.band(b);
      auto dst = out.band(b);
      for (int y = 0; y < t.index.valid_height; ++y) {
        const int oy = t.index.row_offset + y;
        if (oy >= height) break;
        const int n = std::min(t.index.valid_width, width - t.index.col_offset);
        if (n <= 0) break;
        std::copy_n(src.data() + static_cast<std::size_t>(y) * ts, n,
                    dst.data() + static_cast<std::size_t>(oy) * width + t.index.col_offset);
      }
    }
  }
  return out;
}

SimResult simulate(const Raster& r, const SimConfig& cfg) {
  cfg.validate();
  const double px = r.geo().pixel_size_x;
  if (std::abs(px - cfg.source_gsd) > 1e-9 * cfg.source_gsd) {
    throw InvalidArgument("input pixel size " + std::to_string(px) + " m does not match source_gsd " +
                          std::to_string(cfg.source_gsd) + " m");
  }
  auto resampled = resample_bicubic(r, cfg.target_gsd);
  auto [shifted, report] = misalign_bands(resampled, cfg);
  auto blurred = apply_psf(shifted, cfg.psf);
  auto reflectance = radiance_to_reflectance(blurred, cfg.solar);
  return SimResult{tile(reflectance, cfg.tile_size), std::move(report)};
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const SimConfig& cfg) {
  json psf;
  if (const auto* g = std::get_if<GaussianPsf>(&cfg.psf)) {
    psf = {{"type", "gaussian"}, {"sigma_px", g->sigma_px}, {"radius_px", g->radius_px}};
  } else {
    const auto& k = std::get<KernelPsf>(cfg.psf);
    psf = {{"type", "kernel"}, {"side", k.side}, {"weights", k.weights}};
  }
  return json{{"source_gsd", cfg.source_gsd},
              {"target_gsd", cfg.target_gsd},
              {"reference_band", cfg.reference_band},
              {"misalign_sigma", cfg.misalign_sigma},
              {"psf", psf},
              {"solar",
               {{"esun_per_band", cfg.solar.esun_per_band},
                {"sun_zenith_deg", cfg.solar.sun_zenith_deg},
                {"earth_sun_dist_au", cfg.solar.earth_sun_dist_au}}},
              {"tile_size", cfg.tile_size},
              {"seed", cfg.seed}};
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig cfg;
  cfg.solar = default_solar_rgbn();
  try {
    cfg.source_gsd = j.value("source_gsd", cfg.source_gsd);
    cfg.target_gsd = j.value("target_gsd", cfg.target_gsd);
    cfg.reference_band = j.value("reference_band", cfg.reference_band);
    cfg.misalign_sigma = j.value("misalign_sigma", cfg.misalign_sigma);
    cfg.tile_size = j.value("tile_size", cfg.tile_size);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("psf")) {
      const auto& p = j["psf"];
      const auto type = p.value("type", std::string("gaussian"));
      if (type == "gaussian") {
        cfg.psf = GaussianPsf{p.value("sigma_px", 1.0), p.value("radius_px", 3)};
      } else if (type == "kernel") {
        cfg.psf = KernelPsf{p.at("side").get<int>(), p.at("weights").get<std::vector<double>>()};
      } else {
        throw FormatError("unknown psf type '" + type + "'");
      }
    }
    if (j.contains("solar")) {
      const auto& s = j["solar"];
      if (s.contains("esun_per_band")) cfg.solar.esun_per_band = s["esun_per_band"].get<std::vector<double>>();
      cfg.solar.sun_zenith_deg = s.value("sun_zenith_deg", cfg.solar.sun_zenith_deg);
      cfg.solar.earth_sun_dist_au = s.value("earth_sun_dist_au", cfg.solar.earth_sun_dist_au);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("simulator config: ") + e.what());
  }
  return cfg;
}

json to_json(const MisalignmentReport& report) {
  json shifts = json::array();
  for (const auto& s : report.shifts) shifts.push_back({{"band", s.band}, {"dx_m", s.dx_m}, {"dy_m", s.dy_m}});
  return json{{"reference_band", report.reference_band}, {"shifts", shifts}, {"rmse_m", report.rmse_m}};
}

json to_json(const TileIndex& index) {
  return json{{"id", index.id()},
              {"tile_col", index.tile_col},
              {"tile_row", index.tile_row},
              {"col_offset", index.col_offset},
              {"row_offset", index.row_offset},
              {"valid_width", index.valid_width},
              {"valid_height", index.valid_height},
              {"padded", index.padded}};
}

TileIndex tile_index_from_json(const json& j) {
  TileIndex t;
  t.tile_col = j.at("tile_col").get<int>();
  t.tile_row = j.at("tile_row").get<int>();
  t.col_offset = j.at("col_offset").get<int>();
  t.row_offset = j.at("row_offset").get<int>();
  t.valid_width = j.at("valid_width").get<int>();
  t.valid_height = j.at("valid_height").get<int>();
  t.padded = j.at("padded").get<bool>();
  return t;
}

}  // namespace roadflood::sim
