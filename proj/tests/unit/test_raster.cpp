#include <doctest.h>

#include <cstring>
#include <fstream>

#include "oracles.hpp"
#include "roadflood/detail/io.hpp"
#include "roadflood/error.hpp"
#include "roadflood/raster.hpp"

using namespace roadflood;

namespace {

GeoTransform utm(double ox = 770000, double oy = 1440000, double px = 10) { return {ox, oy, px, px, 32643}; }

void write_bytes(const std::filesystem::path& p, const std::vector<float>& values) {
  std::ofstream out(p, std::ios::binary);
  for (float v : values) {
    std::uint8_t raw[4];
    std::memcpy(raw, &v, 4);
    out.write(reinterpret_cast<const char*>(raw), 4);
  }
}

}  // namespace

TEST_SUITE("raster") {
  TEST_CASE("hand-built 2x2 bundle loads its payload") {
    const auto dir = oracle::scratch_dir("raster_hand");
    detail::write_text(dir / "hand.json", R"({"width":2,"height":2,"bands":["RED"],"dtype":"f32",
      "geotransform":{"origin_x":0,"origin_y":0,"pixel_size_x":1,"pixel_size_y":1},"epsg":32643})");
    write_bytes(dir / "hand.bin", {1, 2, 3, 4});
    const auto r = load_raster(dir / "hand");
    CHECK(r.width() == 2);
    CHECK(r.height() == 2);
    CHECK(std::vector<float>(r.data().begin(), r.data().end()) == std::vector<float>{1, 2, 3, 4});
    CHECK(r.at(0, 1, 1) == 4.0f);
    // The json or bin path also works.
    CHECK(load_raster(dir / "hand.json") == r);
    CHECK(load_raster(dir / "hand.bin") == r);
  }

  TEST_CASE("payload of 3 floats declared as 2x2 is rejected") {
    const auto dir = oracle::scratch_dir("raster_short");
    detail::write_text(dir / "s.json", R"({"width":2,"height":2,"bands":["RED"],"dtype":"f32",
      "geotransform":{"origin_x":0,"origin_y":0,"pixel_size_x":1,"pixel_size_y":1},"epsg":32643})");
    write_bytes(dir / "s.bin", {1, 2, 3});
    CHECK_THROWS_AS(load_raster(dir / "s"), FormatError);
  }

  TEST_CASE("bad metadata") {
    const auto dir = oracle::scratch_dir("raster_bad");
    write_bytes(dir / "b.bin", {1});
    detail::write_text(dir / "b.json", R"({"width":0,"height":1,"bands":["RED"],"dtype":"f32",
      "geotransform":{"origin_x":0,"origin_y":0,"pixel_size_x":1,"pixel_size_y":1},"epsg":1})");
    CHECK_THROWS_AS(load_raster(dir / "b"), FormatError);
    detail::write_text(dir / "b.json", R"({"width":1,"height":1,"bands":["RED"],"dtype":"f64",
      "geotransform":{"origin_x":0,"origin_y":0,"pixel_size_x":1,"pixel_size_y":1},"epsg":1})");
    CHECK_THROWS_AS(load_raster(dir / "b"), FormatError);
    CHECK_THROWS_AS(load_raster(dir / "missing"), IoError);
  }

  TEST_CASE("save then load is bit exact, labels and nodata kept") {
    const auto dir = oracle::scratch_dir("raster_rt");
    Rng rng(5);
    std::vector<float> data(3 * 7 * 5);
    for (auto& v : data) v = static_cast<float>(rng.normal());
    data[3] = -0.0f;
    data[4] = 1e-42f;  // subnormal
    Raster r(7, 5, {"RED", "NIR", "NDWI"}, data, utm(), -9999.0f);
    save_raster(r, dir / "rt");
    const auto back = load_raster(dir / "rt");
    CHECK(back == r);
    CHECK(back.bands() == std::vector<std::string>{"RED", "NIR", "NDWI"});
    REQUIRE(back.nodata().has_value());
    CHECK(*back.nodata() == -9999.0f);
    CHECK(std::signbit(back.data()[3]));
    const auto meta = detail::read_json(dir / "rt.json");
    CHECK(meta["bands"][2] == "NDWI");
    CHECK(meta["dtype"] == "f32");
    CHECK(meta["epsg"] == 32643);
  }

  TEST_CASE("mask bundles round-trip and use u8") {
    const auto dir = oracle::scratch_dir("mask_rt");
    Mask m(3, 2, {0, 1, 1, 0, 0, 1}, utm());
    save_mask(m, dir / "m");
    CHECK(load_mask(dir / "m") == m);
    CHECK(detail::read_json(dir / "m.json")["dtype"] == "u8");
    CHECK(std::filesystem::file_size(dir / "m.bin") == 6);
    CHECK_THROWS_AS(load_raster(dir / "m"), FormatError);
  }

  TEST_CASE("invalid rasters are rejected on construction") {
    CHECK_THROWS_AS(Raster(0, 2, {"RED"}, {}, utm()), InvalidArgument);
    CHECK_THROWS_AS(Raster(2, 2, {"RED"}, {1, 2, 3}, utm()), InvalidArgument);
    CHECK_THROWS_AS(Raster(1, 1, {"RED", "RED"}, {1, 2}, utm()), InvalidArgument);
    CHECK_THROWS_AS(Raster(1, 1, {"RED"}, {1}, GeoTransform{0, 0, 0, 1, 1}), InvalidArgument);
    CHECK_THROWS_AS(Raster(1, 1, {"RED"}, {1}, GeoTransform{0, 0, 1, 1, 0}), InvalidArgument);
    CHECK_THROWS_AS(Mask(2, 1, {0, 2}, utm()), InvalidArgument);
    CHECK_THROWS_AS(Mask::zeros(0, 3, utm()), InvalidArgument);
  }

  TEST_CASE("band lookup") {
    auto r = Raster::zeros(2, 2, {"GREEN", "NIR"}, utm());
    CHECK(r.band_index("NIR") == 1u);
    CHECK_FALSE(r.band_index("RED").has_value());
    CHECK_THROWS_AS(r.require_band("RED"), InvalidArgument);
    r.band("NIR")[3] = 7.0f;
    CHECK(r.at(1, 1, 1) == 7.0f);
  }

  TEST_CASE("pixel_to_world examples") {
    const GeoTransform g{100, 200, 10, 10, 32643};
    auto w = pixel_to_world(g, 0, 0);
    CHECK(w.x == 100.0);
    CHECK(w.y == 200.0);
    w = pixel_to_world(g, 2, 3);
    CHECK(w.x == 120.0);
    CHECK(w.y == 170.0);
  }

  TEST_CASE("world_to_pixel examples") {
    const GeoTransform g{0, 0, 4.75, 4.75, 32643};
    auto p = world_to_pixel(g, 9.5, -4.75);
    CHECK(p.col == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(p.row == doctest::Approx(1.0).epsilon(1e-12));
    p = world_to_pixel(GeoTransform{5, 6, 1, 1, 1}, 5, 6);
    CHECK(p.col == 0.0);
    CHECK(p.row == 0.0);
  }

  TEST_CASE("property: pixel/world transforms are inverses") {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
      const GeoTransform g{rng.uniform(-1e6, 1e6), rng.uniform(-1e6, 1e7), rng.uniform(0.1, 100),
                           rng.uniform(0.1, 100), 32643};
      const double c = rng.uniform(-100, 5000);
      const double r = rng.uniform(-100, 5000);
      const auto w = pixel_to_world(g, c, r);
      const auto p = world_to_pixel(g, w.x, w.y);
      CHECK(std::abs(p.col - c) <= 1e-9 * std::max(1.0, std::abs(c)) * 1e3);
      CHECK(std::abs(p.row - r) <= 1e-9 * std::max(1.0, std::abs(r)) * 1e3);
      const auto w2 = pixel_to_world(g, p.col, p.row);
      CHECK(std::abs(w2.x - w.x) <= 1e-9 * std::max(1.0, std::abs(w.x)));
      CHECK(std::abs(w2.y - w.y) <= 1e-9 * std::max(1.0, std::abs(w.y)));
    }
  }

  TEST_CASE("property: random rasters round-trip bit exactly") {
    const auto dir = oracle::scratch_dir("raster_prop");
    Rng rng(21);
    for (int i = 0; i < 25; ++i) {
      const int w = 1 + static_cast<int>(rng.below(40));
      const int h = 1 + static_cast<int>(rng.below(40));
      const int nb = 1 + static_cast<int>(rng.below(4));
      std::vector<std::string> bands;
      for (int b = 0; b < nb; ++b) bands.push_back("B" + std::to_string(b));
      std::vector<float> data(static_cast<std::size_t>(w * h * nb));
      for (auto& v : data) {
        std::uint32_t bits = static_cast<std::uint32_t>(rng.next());
        std::memcpy(&v, &bits, 4);
        if (!std::isfinite(v)) v = 0.5f;
      }
      Raster r(w, h, bands, data, utm(rng.uniform(0, 1e6), rng.uniform(0, 1e6), rng.uniform(1, 30)));
      save_raster(r, dir / "p");
      CHECK(load_raster(dir / "p") == r);
    }
  }
}
