#include "roadflood/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "roadflood/error.hpp"

namespace roadflood::render {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void paint(std::vector<std::uint8_t>& rgb, int w, int h, const GeoTransform& geo, const WorldPoint& p,
           std::array<std::uint8_t, 3> color) {
  const auto px = world_to_pixel(geo, p.x, p.y);
  const double c = std::floor(px.col);
  const double r = std::floor(px.row);
  if (c < 0 || r < 0 || c >= w || r >= h) return;
  const auto i = (static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c)) * 3;
  std::copy(color.begin(), color.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i));
}

void paint_line(std::vector<std::uint8_t>& rgb, int w, int h, const GeoTransform& geo, const roads::Polyline& line,
                std::array<std::uint8_t, 3> color) {
  if (line.size() < 2) {
    for (const auto& p : line) paint(rgb, w, h, geo, p, color);
    return;
  }
  const double step = std::min(geo.pixel_size_x, geo.pixel_size_y) / 2.0;
  for (const auto& s : roads::sample_polyline(line, step)) paint(rgb, w, h, geo, s.point, color);
}

}  // namespace

void write_png(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb) {
  if (width <= 0 || height <= 0) throw InvalidArgument("PNG dimensions must be positive");
  if (rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw InvalidArgument("PNG buffer size does not match dimensions");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    auto* row = const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(width) * 3);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> compose(const Layers& layers, int& width, int& height) {
  if (!layers.image && !layers.mask) throw InvalidArgument("render needs an image or a mask");
  const GeoTransform geo = layers.image ? layers.image->geo() : layers.mask->geo();
  width = layers.image ? layers.image->width() : layers.mask->width();
  height = layers.image ? layers.image->height() : layers.mask->height();
  if (layers.image && layers.mask &&
      (layers.mask->width() != width || layers.mask->height() != height)) {
    throw InvalidArgument("render: mask and image dimensions differ");
  }
  if (!(layers.stretch_max > 0.0)) throw InvalidArgument("stretch_max must be positive");
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<std::uint8_t> rgb(n * 3, 0);

  if (layers.image) {
    const std::array<std::span<const float>, 3> bands{layers.image->band(band::kRed), layers.image->band(band::kGreen),
                                                      layers.image->band(band::kBlue)};
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::isfinite(bands[c][i]) ? bands[c][i] / layers.stretch_max : 0.0;
        rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  } else {
    std::fill(rgb.begin(), rgb.end(), std::uint8_t{96});
  }
  if (layers.mask) {
    const auto m = layers.mask->values();
    for (std::size_t i = 0; i < n; ++i) {
      if (!m[i]) continue;
      rgb[i * 3 + 0] = static_cast<std::uint8_t>(rgb[i * 3 + 0] / 2);
      rgb[i * 3 + 1] = static_cast<std::uint8_t>(rgb[i * 3 + 1] / 2 + 40);
      rgb[i * 3 + 2] = static_cast<std::uint8_t>(rgb[i * 3 + 2] / 2 + 127);
    }
  }
  if (layers.roads) {
    for (const auto& f : layers.roads->features) {
      for (const auto& line : f.polylines) paint_line(rgb, width, height, geo, line, {255, 220, 0});
    }
  }
  for (const auto& s : layers.flooded) paint_line(rgb, width, height, geo, s.vertices, {230, 20, 20});
  return rgb;
}

void render_png(const Layers& layers, const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  const auto rgb = compose(layers, w, h);
  write_png(path, w, h, rgb);
}

}  // namespace roadflood::render
