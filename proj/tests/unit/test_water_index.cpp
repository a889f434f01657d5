#include <doctest.h>

#include "oracles.hpp"
#include "roadflood/error.hpp"
#include "roadflood/water_index.hpp"

using namespace roadflood;
using namespace roadflood::water;

namespace {

GeoTransform geo10() { return {770000, 1440000, 10, 10, 32643}; }

Raster rgbn_random(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> data(static_cast<std::size_t>(w) * h * 4);
  for (auto& v : data) v = static_cast<float>(rng.uniform(0, 0.5));
  return Raster(w, h, {"RED", "GREEN", "BLUE", "NIR"}, data, geo10());
}

Mask random_mask(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> v(static_cast<std::size_t>(w) * h);
  for (auto& x : v) x = rng.below(3) == 0 ? 1 : 0;
  return Mask(w, h, v, geo10());
}

}  // namespace

TEST_SUITE("water-index") {
  TEST_CASE("ndwi examples") {
    const std::vector<float> g{0.2f, 0.3f, 0.0f, 0.7f};
    const std::vector<float> n{0.2f, 0.05f, 0.0f, 0.7f};
    const auto out = ndwi(g, n);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == doctest::Approx(0.25 / 0.35).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(0.71429).epsilon(1e-5));
    CHECK(out[2] == 0.0f);
    CHECK(out[3] == 0.0f);
  }

  TEST_CASE("ndwi clamps when reflectances go negative") {
    const std::vector<float> g{0.3f, -0.1f};
    const std::vector<float> n{-0.2f, 0.3f};
    const auto out = ndwi(g, n);
    CHECK(out[0] == 1.0f);
    CHECK(out[1] == -1.0f);
  }

  TEST_CASE("ndwi rejects mismatched inputs and missing bands") {
    const std::vector<float> a(4, 0.1f), b(3, 0.1f);
    CHECK_THROWS_AS(ndwi(a, b), InvalidArgument);
    const Raster r(2, 2, {"RED", "NIR"}, std::vector<float>(8, 0.1f), geo10());
    CHECK_THROWS_AS(ndwi(r), InvalidArgument);
  }

  TEST_CASE("property: ndwi against the oracle, bounded and antisymmetric") {
    Rng rng(1);
    std::vector<float> g(5000), n(5000);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = static_cast<float>(rng.uniform(-0.2, 1.0));
      n[i] = static_cast<float>(rng.uniform(-0.2, 1.0));
    }
    g[0] = 0.25f;
    n[0] = -0.25f;  // zero denominator
    const auto fwd = ndwi(g, n);
    const auto rev = ndwi(n, g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(fwd[i] >= -1.0f);
      CHECK(fwd[i] <= 1.0f);
      CHECK(fwd[i] == doctest::Approx(oracle::ndwi_pixel(g[i], n[i])).epsilon(1e-6));
      if (g[i] + n[i] != 0.0f) CHECK(fwd[i] == doctest::Approx(-rev[i]).epsilon(1e-6));
    }
    CHECK(fwd[0] == 0.0f);
  }

  TEST_CASE("threshold examples") {
    const std::vector<float> grid{0.01f, 0.0100001f, -0.5f, 0.9f};
    const auto m = threshold_mask(grid, 2, 2, geo10());
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(1, 0) == 1);
    CHECK(m.at(0, 1) == 0);
    CHECK(m.at(1, 1) == 1);
    const std::vector<float> neg(100, -0.3f);
    CHECK(threshold_mask(neg, 10, 10, geo10()).count() == 0);
    CHECK(kDefaultThreshold == 0.01f);
    CHECK_THROWS_AS(threshold_mask(neg, 5, 5, geo10()), InvalidArgument);
  }

  TEST_CASE("chips from a 512 tile: four offsets in row-major order") {
    const auto tile = rgbn_random(512, 512, 2);
    const auto mask = random_mask(512, 512, 3);
    const auto chips = extract_chips(tile, mask, "t");
    REQUIRE(chips.size() == 4);
    const std::pair<int, int> expect[] = {{0, 0}, {256, 0}, {0, 256}, {256, 256}};
    for (int i = 0; i < 4; ++i) {
      CHECK(chips[i].source.col_offset == expect[i].first);
      CHECK(chips[i].source.row_offset == expect[i].second);
      CHECK(chips[i].source.tile_id == "t");
      CHECK(chips[i].image.width() == 256);
      CHECK(chips[i].image.height() == 256);
      CHECK(chips[i].image.bands() == std::vector<std::string>{"RED", "GREEN", "BLUE", "NDWI"});
      CHECK(chips[i].image.geo().origin_x == doctest::Approx(770000 + 10.0 * expect[i].first));
      CHECK(chips[i].image.geo().origin_y == doctest::Approx(1440000 - 10.0 * expect[i].second));
    }
  }

  TEST_CASE("chips from a 300 tile: remainder discarded") {
    const auto chips = extract_chips(rgbn_random(300, 300, 4), random_mask(300, 300, 5), "t");
    CHECK(chips.size() == 1);
  }

  TEST_CASE("chip NDWI channel equals ndwi of its window") {
    const auto tile = rgbn_random(40, 24, 6);
    const auto chips = extract_chips(tile, random_mask(40, 24, 7), "t", ChipOptions{8});
    REQUIRE(chips.size() == 15);
    for (const auto& c : chips) {
      for (int r = 0; r < 8; ++r)
        for (int col = 0; col < 8; ++col) {
          const int gx = c.source.col_offset + col;
          const int gy = c.source.row_offset + r;
          const float expect = oracle::ndwi_pixel(tile.at(1, gx, gy), tile.at(3, gx, gy));
          CHECK(c.image.at(3, col, r) == doctest::Approx(expect).epsilon(1e-6));
          CHECK(c.image.at(0, col, r) == tile.at(0, gx, gy));
          CHECK(c.image.at(2, col, r) == tile.at(2, gx, gy));
        }
    }
  }

  TEST_CASE("chip grid respects the valid extent") {
    ChipOptions opts{8};
    opts.valid_width = 20;
    opts.valid_height = 17;
    CHECK(extract_chips(rgbn_random(32, 32, 8), random_mask(32, 32, 9), "t", opts).size() == 4);
  }

  TEST_CASE("chip errors") {
    const Raster rgb(8, 8, {"RED", "GREEN", "BLUE"}, std::vector<float>(192, 0.1f), geo10());
    CHECK_THROWS_AS(extract_chips(rgb, random_mask(8, 8, 1), "t", ChipOptions{4}), InvalidArgument);
    CHECK_THROWS_AS(extract_chips(rgbn_random(8, 8, 1), random_mask(4, 8, 1), "t", ChipOptions{4}),
                    InvalidArgument);
  }

  TEST_CASE("property: chips partition the cropped tile's water") {
    Rng rng(10);
    for (int trial = 0; trial < 10; ++trial) {
      const int w = 8 + static_cast<int>(rng.below(60));
      const int h = 8 + static_cast<int>(rng.below(60));
      const int cs = 4 + static_cast<int>(rng.below(8));
      const auto mask = random_mask(w, h, 100 + trial);
      const auto chips = extract_chips(rgbn_random(w, h, 200 + trial), mask, "t", ChipOptions{cs});
      CHECK(chips.size() == static_cast<std::size_t>((w / cs) * (h / cs)));
      std::size_t from_chips = 0;
      for (const auto& c : chips) from_chips += c.label.count();
      std::size_t covered = 0;
      for (int r = 0; r < (h / cs) * cs; ++r)
        for (int c = 0; c < (w / cs) * cs; ++c) covered += mask.at(c, r);
      CHECK(from_chips == covered);
    }
  }

  TEST_CASE("scene without polygons has an empty mask") {
    SceneSpec s;
    s.width = 16;
    s.height = 12;
    CHECK(generate_scene(s).truth.count() == 0);
  }

  TEST_CASE("rectangle covering cols 2..5, rows 1..3 gives 12 pixels") {
    SceneSpec s;
    s.width = 8;
    s.height = 8;
    s.water_polygons = {{{2, 1}, {6, 1}, {6, 4}, {2, 4}}};
    const auto scene = generate_scene(s);
    CHECK(scene.truth.count() == 12);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) CHECK(scene.truth.at(c, r) == ((c >= 2 && c <= 5 && r >= 1 && r <= 3) ? 1 : 0));
  }

  TEST_CASE("noise-free scene thresholds back to its truth") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      auto spec = oracle::blob_scene(seed, 120, 10.0, 0.0);
      const auto scene = generate_scene(spec);
      CHECK(scene.truth.count() > 0);
      const auto idx = ndwi(scene.image);
      const auto m = threshold_mask(idx, scene.image.width(), scene.image.height(), scene.image.geo());
      CHECK(m == scene.truth);
    }
  }

  TEST_CASE("scene levels and determinism") {
    auto spec = oracle::blob_scene(4, 80, 10.0, 0.05);
    const auto a = generate_scene(spec);
    const auto b = generate_scene(spec);
    CHECK(a.image == b.image);
    CHECK(a.truth == b.truth);
    spec.seed = 5;
    CHECK_FALSE(generate_scene(spec).image == a.image);
    spec.noise_sigma = 0.0;
    const auto clean = generate_scene(spec);
    for (int r = 0; r < 80; ++r)
      for (int c = 0; c < 80; ++c) {
        const bool wet = clean.truth.at(c, r) != 0;
        CHECK(clean.image.at(1, c, r) == (wet ? 0.30f : 0.20f));
        CHECK(clean.image.at(3, c, r) == (wet ? 0.05f : 0.40f));
      }
  }

  TEST_CASE("property: rasterized truth matches a pixel-center oracle") {
    auto spec = oracle::blob_scene(9, 100, 10.0, 0.0);
    const auto scene = generate_scene(spec);
    for (int r = 0; r < 100; ++r)
      for (int c = 0; c < 100; ++c) {
        bool in = false;
        for (const auto& p : spec.water_polygons) in = in || point_in_polygon(p, c + 0.5, r + 0.5);
        CHECK(scene.truth.at(c, r) == (in ? 1 : 0));
      }
  }

  TEST_CASE("degenerate polygons are rejected") {
    SceneSpec s;
    s.width = 4;
    s.height = 4;
    s.water_polygons = {{{0, 0}, {1, 1}}};
    CHECK_THROWS_AS(generate_scene(s), InvalidArgument);
  }

  TEST_CASE("area examples") {
    CHECK(area_hectares(Mask::zeros(4, 4, geo10()), 4.75) == 0.0);
    CHECK(area_hectares(std::size_t{400}, 4.75) == doctest::Approx(0.9025).epsilon(1e-12));
    Mask full(256, 256, std::vector<std::uint8_t>(256 * 256, 1), geo10());
    CHECK(area_hectares(full, 4.75) == doctest::Approx(147.8656).epsilon(1e-12));
    CHECK_THROWS_AS(area_hectares(std::size_t{1}, 0.0), InvalidArgument);
  }

  TEST_CASE("property: area is linear in count and quadratic in gsd") {
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
      const auto n = static_cast<std::size_t>(rng.below(100000));
      const double g = rng.uniform(0.5, 30);
      CHECK(area_hectares(2 * n, g) == doctest::Approx(2 * area_hectares(n, g)).epsilon(1e-12));
      CHECK(area_hectares(n, 2 * g) == doctest::Approx(4 * area_hectares(n, g)).epsilon(1e-12));
    }
  }

  TEST_CASE("chip manifests round-trip") {
    const auto dir = oracle::scratch_dir("manifest");
    const auto chips = extract_chips(rgbn_random(16, 16, 13), random_mask(16, 16, 14), "tile_r0_c0", ChipOptions{8});
    const auto entries = save_chips(chips, dir);
    write_manifest(dir / "manifest.json", entries);
    const auto back = load_chips(dir / "manifest.json");
    REQUIRE(back.size() == chips.size());
    for (std::size_t i = 0; i < chips.size(); ++i) {
      CHECK(back[i].image == chips[i].image);
      CHECK(back[i].label == chips[i].label);
      CHECK(back[i].source.col_offset == chips[i].source.col_offset);
      CHECK(back[i].source.tile_id == "tile_r0_c0");
    }
  }

  TEST_CASE("scene spec JSON round-trip") {
    auto spec = oracle::blob_scene(3, 64);
    spec.roads = {{{0, 1}, {5, 6}}};
    const auto back = scene_spec_from_json(to_json(spec));
    CHECK(back.width == spec.width);
    CHECK(back.water_polygons.size() == spec.water_polygons.size());
    CHECK(back.water_polygons[0][3].col == spec.water_polygons[0][3].col);
    CHECK(back.roads.size() == 1);
    CHECK(back.noise_sigma == spec.noise_sigma);
    CHECK(back.acquired == spec.acquired);
  }
}
