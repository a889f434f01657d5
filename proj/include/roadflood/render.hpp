#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "roadflood/raster.hpp"
#include "roadflood/roadnet.hpp"

namespace roadflood::render {

/// 8-bit RGB, row-major, 3 bytes per pixel.
void write_png(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb);

struct Layers {
  const Raster* image = nullptr;  // needs RED, GREEN, BLUE
  const Mask* mask = nullptr;
  const roads::RoadNetwork* roads = nullptr;
  std::span<const roads::FloodedSegment> flooded;
  /// Reflectance mapped to full white.
  double stretch_max = 0.4;
};

/// Composites the layers onto the image grid (or the mask grid without an
/// image). Water is tinted blue, roads drawn yellow, flooded stretches red.
std::vector<std::uint8_t> compose(const Layers& layers, int& width, int& height);

void render_png(const Layers& layers, const std::filesystem::path& path);

}  // namespace roadflood::render
