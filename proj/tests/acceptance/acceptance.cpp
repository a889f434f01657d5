// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fail. Pass criterion numbers to run a subset.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "roadflood/bench.hpp"
#include "roadflood/metrics.hpp"
#include "roadflood/model_opt.hpp"
#include "roadflood/pipeline.hpp"
#include "roadflood/roadnet.hpp"
#include "roadflood/segnet.hpp"
#include "roadflood/sensor_sim.hpp"
#include "roadflood/train.hpp"
#include "roadflood/water_index.hpp"

using namespace roadflood;
namespace fs = std::filesystem;

namespace {

// Collects failed expectations for one criterion.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::ostringstream o;
    for (std::size_t i = 0; i < notes_.size(); ++i) o << (i ? "; " : "") << notes_[i];
    if (failed_) {
      o << (notes_.empty() ? "" : "; ") << failed_ << "/" << total_ << " checks failed:";
      for (const auto& f : failures_) o << " [" << f << "]";
    }
    return o.str();
  }

 private:
  std::size_t total_ = 0;
  std::size_t failed_ = 0;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const GeoTransform kGrid{770000, 1440000, 4.75, 4.75, 32643};
const std::vector<std::string> kRgbn{"RED", "GREEN", "BLUE", "NIR"};

Raster random_raster(int w, int h, const std::vector<std::string>& bands, Rng& rng, double lo = 0, double hi = 1,
                     GeoTransform geo = kGrid) {
  std::vector<float> data(static_cast<std::size_t>(w) * h * bands.size());
  for (auto& v : data) v = static_cast<float>(rng.uniform(lo, hi));
  return Raster(w, h, bands, std::move(data), geo);
}

Raster constant(int w, int h, const std::vector<std::string>& bands, float c, GeoTransform geo = kGrid) {
  return Raster(w, h, bands, std::vector<float>(static_cast<std::size_t>(w) * h * bands.size(), c), geo);
}

bool all_equal(std::span<const float> v, float c) {
  return std::all_of(v.begin(), v.end(), [&](float a) { return a == c; });
}

// --- 1 -----------------------------------------------------------------------

void ndwi_oracle(Checker& ck) {
  Rng rng(101);
  std::size_t pixels = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(64));
    const int h = 1 + static_cast<int>(rng.below(64));
    auto r = random_raster(w, h, kRgbn, rng);
    auto g = r.band("GREEN");
    auto n = r.band("NIR");
    // Seed awkward values: zero denominators, equal bands, exact threshold.
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (rng.below(12)) {
        case 0: g[i] = 0, n[i] = 0; break;
        case 1: n[i] = g[i]; break;
        case 2: g[i] = 101, n[i] = 99; break;
        case 3: g[i] = -g[i]; break;
        default: break;
      }
    }
    const float thr = trial % 2 ? water::kDefaultThreshold : static_cast<float>(rng.uniform(-0.5, 0.5));
    const auto grid = water::ndwi(r);
    const auto mask = water::threshold_mask(grid, w, h, r.geo(), thr);
    bool same = grid.size() == g.size();
    for (std::size_t i = 0; same && i < g.size(); ++i) {
      const float expect = oracle::ndwi_pixel(g[i], n[i]);
      same = grid[i] == expect &&
             mask.values()[i] == oracle::water_pixel(expect, thr);
    }
    ck.expect(same, "grid " + std::to_string(trial) + " differs from per-pixel oracle");
    pixels += g.size();
  }
  // Boundary: exactly the threshold is dry.
  const std::vector<float> edge{0.01f, std::nextafter(0.01f, 1.0f), std::nextafter(0.01f, 0.0f)};
  const auto m = water::threshold_mask(edge, 3, 1, kGrid);
  ck.expect(m.values()[0] == 0 && m.values()[1] == 1 && m.values()[2] == 0, "0.01 must be excluded");
  ck.expect(water::ndwi(std::vector<float>{101}, std::vector<float>{99})[0] == 0.01f, "101/99 gives 0.01");
  ck.note(std::to_string(pixels) + " px on 100 grids");
}

// --- 2 -----------------------------------------------------------------------

void simulator_properties(Checker& ck) {
  // Constants survive every stage unchanged.
  for (float c : {0.0f, 0.25f, 87.5f}) {
    const auto src = constant(41, 29, kRgbn, c, GeoTransform{770000, 1440000, 10, 10, 32643});
    const auto res = sim::resample_bicubic(src, 4.75);
    ck.expect(all_equal(res.data(), c), "resample constant");
    sim::SimConfig cfg;
    cfg.seed = 5;
    const auto [mis, rep] = sim::misalign_bands(res, cfg);
    ck.expect(rep.rmse_m > 0, "misalignment applied");
    ck.expect(all_equal(mis.data(), c), "misalign constant");
    const auto blur = sim::apply_psf(mis, sim::GaussianPsf{1.3, 4});
    ck.expect(all_equal(blur.data(), c), "psf constant");
    for (const auto& t : sim::tile(blur, 32)) {
      for (std::size_t b = 0; b < 4; ++b)
        for (int y = 0; y < t.index.valid_height; ++y)
          for (int x = 0; x < t.index.valid_width; ++x) ck.expect(t.raster.at(b, x, y) == c, "tile constant");
    }
  }

  // Tiles partition the raster.
  Rng rng(202);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(150));
    const int h = 1 + static_cast<int>(rng.below(150));
    const int ts = 1 + static_cast<int>(rng.below(64));
    const auto r = random_raster(w, h, {"GREEN", "NIR"}, rng);
    const auto tiles = sim::tile(r, ts);
    std::vector<int> cover(static_cast<std::size_t>(w) * h, 0);
    bool values = true;
    for (const auto& t : tiles) {
      values = values && t.raster.width() == ts && t.raster.height() == ts;
      for (int y = 0; y < t.index.valid_height; ++y)
        for (int x = 0; x < t.index.valid_width; ++x) {
          const int gx = t.index.col_offset + x;
          const int gy = t.index.row_offset + y;
          if (gx >= w || gy >= h) {
            values = false;
            continue;
          }
          cover[static_cast<std::size_t>(gy) * w + gx] += 1;
          values = values && t.raster.at(0, x, y) == r.at(0, gx, gy) && t.raster.at(1, x, y) == r.at(1, gx, gy);
        }
    }
    ck.expect(values, "tile contents/shape, trial " + std::to_string(trial));
    ck.expect(std::all_of(cover.begin(), cover.end(), [](int c) { return c == 1; }),
              "tile cover, trial " + std::to_string(trial));
    ck.expect(sim::mosaic(tiles, w, h) == r, "mosaic round trip");
  }

  // Misalignment RMSE over 1000 seeded draws.
  sim::SimConfig cfg;
  const auto probe = constant(2, 2, kRgbn, 0.0f);
  double sum = 0;
  std::size_t count = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    cfg.seed = s;
    for (const auto& sh : sim::draw_shifts(probe, cfg)) {
      if (sh.band == cfg.reference_band) continue;
      sum += sh.dx_m * sh.dx_m + sh.dy_m * sh.dy_m;
      ++count;
    }
  }
  const double rmse = std::sqrt(sum / static_cast<double>(count));
  ck.expect(std::abs(rmse - 4.75) <= 0.15 * 4.75, "rmse within 15% of 4.75");
  ck.expect(rmse < 10.0, "rmse below 10 m");
  ck.note("rmse " + fmt("%.3f", rmse) + " m over " + std::to_string(count) + " shifts");

  // PSF against brute-force convolution on 4x4 inputs.
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int side = 1 + 2 * static_cast<int>(rng.below(3));
    std::vector<double> k(static_cast<std::size_t>(side) * side);
    for (auto& v : k) v = rng.uniform(0.05, 1.0);
    const auto img = random_raster(4, 4, {"RED"}, rng);
    const auto out = sim::apply_psf(img, sim::KernelPsf{side, k});
    const std::vector<double> in(img.data().begin(), img.data().end());
    const auto expect = oracle::convolve_direct(in, 4, 4, k, side);
    for (std::size_t i = 0; i < expect.size(); ++i) worst = std::max(worst, std::abs(out.data()[i] - expect[i]));
  }
  ck.expect(worst <= 1e-6, "psf vs brute force");
  ck.note("psf max err " + fmt("%.2g", worst));
}

// --- 3 -----------------------------------------------------------------------

void reflectance_spot(Checker& ck) {
  const double pi = std::numbers::pi;
  sim::SolarGeometry s{{1512.06, 1823.24, 1938.86, 1041.63}, 41.0, 1.0167};
  std::vector<float> data;
  for (double e : s.esun_per_band) {
    const double l = e * std::cos(41.0 * pi / 180.0) / (pi * 1.0167 * 1.0167);
    data.insert(data.end(), 4, static_cast<float>(l));
  }
  const auto rho = sim::radiance_to_reflectance(Raster(2, 2, kRgbn, data, kGrid), s);
  double worst = 0;
  for (float v : rho.data()) worst = std::max(worst, std::abs(v - 1.0));
  ck.expect(worst <= 1e-6, "unit reflectance");

  const sim::SolarGeometry hand{{1000.0}, 30.0, 1.0};
  const auto one = sim::radiance_to_reflectance(Raster(1, 1, {"RED"}, {100.0f}, kGrid), hand);
  const double got = one.data()[0];
  ck.expect(std::abs(got - 0.36276) <= 1e-5, "L=100, E=1000, 30 deg, 1 AU");
  ck.note("rho=1 err " + fmt("%.2g", worst) + ", hand case " + fmt("%.6f", got));
}

// --- 4 -----------------------------------------------------------------------

void gradient_check(Checker& ck) {
  const segnet::ModelConfig cfg{1, 2, 4};
  const auto p = segnet::init_params<double>(cfg, 41);
  segnet::Batch<double> x(2, 8, 8, 4);
  Rng rng(42);
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  std::vector<double> t(2 * 64);
  for (auto& v : t) v = rng.below(2) ? 1.0 : 0.0;
  const auto r = oracle::grad_check(p, cfg, x, t);
  ck.expect(r.max_rel < 1e-4, "max rel err " + fmt("%.3g", r.max_rel) + " in " + r.worst_tensor);
  ck.expect(r.checked == p.value_count(), "every component checked");
  ck.note("max rel " + fmt("%.2e", r.max_rel) + " over " + std::to_string(r.checked) + " params");
}

// --- 5 -----------------------------------------------------------------------

void metric_consistency(Checker& ck) {
  Rng rng(55);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(500);
    const double pw = rng.uniform();
    const double tw = rng.uniform();
    std::vector<float> p(n);
    std::vector<float> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform() < pw ? 1.0f : 0.0f;
      g[i] = rng.uniform() < tw ? 1.0f : 0.0f;
    }
    const double d = segnet::dice_coeff<float>(p, g, 0.0);
    const double j = segnet::jaccard_coeff<float>(p, g, 0.0);
    worst = std::max(worst, std::abs(j - d / (2 - d)));
  }
  ck.expect(worst <= 1e-9, "J = D/(2-D) on hard masks");
  const auto j_of = [](double d) { return d / (2 - d); };
  const double j_train = j_of(0.93);
  const double j_val = j_of(0.83);
  ck.expect(std::abs(j_train - 0.8692) < 5e-5, "0.93 -> 0.8692");
  ck.expect(std::abs(j_val - 0.7094) < 5e-5, "0.83 -> 0.7094");
  ck.expect(std::abs(j_train - 0.88) <= 0.015, "0.8692 vs reported 0.88");
  ck.expect(std::abs(j_val - 0.70) <= 0.015, "0.7094 vs reported 0.70");
  ck.note("max err " + fmt("%.1e", worst) + "; J(0.93)=" + fmt("%.4f", j_train) + ", J(0.83)=" + fmt("%.4f", j_val));
}

// --- 6, 8 ----------------------------------------------------------------------

struct Trained {
  segnet::ModelConfig cfg;
  segnet::ModelParams params;
  segnet::Dataset train_set;
  segnet::Dataset test_set;
  segnet::TrainReport report;
  double seconds = 0;
};

segnet::Dataset blob_chips(std::uint64_t seed, int scene_size) {
  const auto scene = water::generate_scene(oracle::blob_scene(seed, scene_size));
  return segnet::dataset_from_chips(water::extract_chips(scene.image, scene.truth, "s" + std::to_string(seed)));
}

double hard_dice_of(const segnet::ModelParams& params, const segnet::ModelConfig& cfg, const segnet::Dataset& d) {
  const auto probs = segnet::predict(params, cfg, d, segnet::all_indices(d));
  std::vector<float> truth;
  for (const auto& l : d.labels) truth.insert(truth.end(), l.begin(), l.end());
  return oracle::hard_dice(oracle::confusion(probs, truth));
}

std::optional<Trained> g_trained;

const Trained& trained_model() {
  if (g_trained) return *g_trained;
  Trained t;
  t.train_set = blob_chips(1, 1024);  // 16 chips of 256
  t.test_set = blob_chips(2, 768);    // 9 unseen chips
  segnet::TrainConfig tc;
  tc.validation_fraction = 0.0;
  tc.epochs = 200;
  tc.early_stop_dice = 0.95;
  const auto start = std::chrono::steady_clock::now();
  auto r = segnet::train(t.train_set, segnet::init_params<float>(t.cfg, 0), t.cfg, tc);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  t.params = std::move(r.params);
  t.report = std::move(r.report);
  g_trained = std::move(t);
  return *g_trained;
}

void training_substitute(Checker& ck) {
  const auto& t = trained_model();
  ck.expect(t.train_set.size() == 16, "16 training chips");
  const double train_dice = hard_dice_of(t.params, t.cfg, t.train_set);
  const double test_dice = hard_dice_of(t.params, t.cfg, t.test_set);
  ck.expect(t.report.epochs.size() <= 200, "within 200 epochs");
  ck.expect(train_dice > 0.95, "train hard dice " + fmt("%.4f", train_dice));
  ck.expect(test_dice > 0.85, "held-out hard dice " + fmt("%.4f", test_dice));
  ck.expect(t.seconds < 600, "under 10 min");
  ck.note(std::to_string(t.report.epochs.size()) + " epochs, train " + fmt("%.4f", train_dice) + ", held-out " +
          fmt("%.4f", test_dice) + " (" + std::to_string(t.test_set.size()) + " chips), " + fmt("%.1f", t.seconds) +
          " s");
}

void quantization(Checker& ck) {
  const auto& t = trained_model();
  const auto sizes = opt::size_report(t.cfg, t.params);
  ck.expect(sizes.quantized_i8_payload * 4 == sizes.dense_f32_payload, "int8 payload is 25% of f32");

  const auto qts = opt::quantize_params(t.params);
  bool bounded = qts.size() == t.params.tensors.size();
  double worst_ratio = 0;
  for (std::size_t i = 0; bounded && i < qts.size(); ++i) {
    const auto& w = t.params.tensors[i].values;
    const double scale = qts[i].scale;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double err = std::abs(static_cast<double>(qts[i].values[k]) * scale - static_cast<double>(w[k]));
      worst_ratio = std::max(worst_ratio, err / scale);
    }
  }
  // Allow float rounding of w / scale itself.
  ck.expect(bounded && worst_ratio <= 0.5 + 1e-6, "round trip within scale/2");

  // Same numbers after a trip through the container.
  const auto stored = opt::deserialize_model(opt::serialize_model(opt::make_stored(t.cfg, qts)));
  const auto qparams = stored.params();
  const double fd = hard_dice_of(t.params, t.cfg, t.test_set);
  const double qd = hard_dice_of(qparams, t.cfg, t.test_set);
  ck.expect(std::abs(fd - qd) <= 0.05, "quantized dice within 0.05");
  ck.note("payload " + std::to_string(sizes.quantized_i8_payload) + "/" + std::to_string(sizes.dense_f32_payload) +
          " B, max err " + fmt("%.4f", worst_ratio) + " scale, dice f32 " + fmt("%.4f", fd) + " int8 " +
          fmt("%.4f", qd));
}

// --- 7 -----------------------------------------------------------------------

void pruning(Checker& ck) {
  const opt::PruneSchedule sched;  // 0.2 -> 0.8 over steps 0..5000, cubic
  ck.expect(opt::sparsity_at(0, sched) == 0.2, "s(0) = 0.2");
  ck.expect(opt::sparsity_at(5000, sched) == 0.8, "s(5000) = 0.8");
  ck.expect(std::abs(opt::sparsity_at(2500, sched) - 0.725) <= 1e-12, "s(2500) = 0.725");
  double prev = -1;
  bool monotone = true;
  for (std::int64_t t = 0; t <= 5000; ++t) {
    const double v = opt::sparsity_at(t, sched);
    monotone = monotone && v >= prev;
    prev = v;
  }
  ck.expect(monotone, "monotone on [0, 5000]");

  // One 32x32 chip, batch 1: one optimizer step per epoch.
  water::SceneSpec s;
  s.width = 32;
  s.height = 32;
  s.noise_sigma = 0.02;
  s.water_polygons = {{{8, 9}, {22, 8}, {24, 23}, {9, 21}}};
  const auto scene = water::generate_scene(s);
  const auto data = segnet::dataset_from_chips(water::extract_chips(scene.image, scene.truth, "p", {32}));
  const segnet::ModelConfig cfg{2, 4, 4};
  segnet::TrainConfig tc;
  tc.batch_size = 1;
  tc.validation_fraction = 0.0;
  const int epochs = 5050;
  const auto r = opt::prune_finetune(segnet::init_params<float>(cfg, 7), data, cfg, sched, epochs, tc);
  ck.expect(r.report.steps >= 5000, "at least 5000 steps");
  double lo = 1;
  double hi = 0;
  for (const auto& t : r.params.tensors) {
    if (!t.is_kernel()) continue;
    std::size_t zeros = 0;
    for (float v : t.values) zeros += v == 0.0f;
    const double n = static_cast<double>(t.values.size());
    const double z = static_cast<double>(zeros) / n;
    ck.expect(z >= 0.8 - 1e-12 && z <= 0.8 + 1.0 / n + 1e-12, t.name + " zero fraction " + fmt("%.4f", z));
    lo = std::min(lo, z);
    hi = std::max(hi, z);
  }
  ck.note(std::to_string(r.report.steps) + " steps, kernel zero fractions " + fmt("%.4f", lo) + ".." + fmt("%.4f", hi));
}

// --- 9 -----------------------------------------------------------------------

void bench_arithmetic(Checker& ck) {
  const auto r = bench::make_bench_report({0.3871, 0.4197, 0.3940, 0.4017, 0.3954}, 8, 4.75);
  ck.expect(std::abs(r.mean_per_image_s - 0.0496) <= 0.0005, "mean per image near 49.6 ms");
  ck.expect(std::abs(r.ms_per_sqkm - 33.5) <= 0.5, "ms per sq km 33.5 +- 0.5");
  ck.expect(std::abs(r.chip_area_km2 - 1.478656) <= 1e-12, "chip area 1.478656");
  ck.note(fmt("%.4f", r.mean_per_image_s * 1000) + " ms/image, " + fmt("%.3f", r.ms_per_sqkm) + " ms/km2, " +
          fmt("%.6f", r.chip_area_km2) + " km2");
}

// --- 10 ----------------------------------------------------------------------

roads::RoadNetwork one_road(const roads::Polyline& l) {
  roads::RoadNetwork net;
  net.epsg = kGrid.epsg;
  net.features.push_back({"r", {l}, nlohmann::json::object()});
  return net;
}

void road_oracle(Checker& ck) {
  const double spacing = kGrid.pixel_size_x / 2;  // default sampling
  const double min_run = 3 * spacing;             // default minimum run
  Rng rng(1010);
  std::size_t segments = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 12 + static_cast<int>(rng.below(40));
    const int h = 12 + static_cast<int>(rng.below(40));
    std::vector<std::uint8_t> v(static_cast<std::size_t>(w) * h);
    const int blobs = 1 + static_cast<int>(rng.below(3));
    std::vector<std::array<int, 3>> disks;
    for (int b = 0; b < blobs; ++b)
      disks.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(w))),
                       static_cast<int>(rng.below(static_cast<std::uint64_t>(h))), 1 + static_cast<int>(rng.below(8))});
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        bool wet = rng.below(12) == 0;
        for (const auto& [cx, cy, rad] : disks) wet = wet || (c - cx) * (c - cx) + (r - cy) * (r - cy) <= rad * rad;
        v[static_cast<std::size_t>(r) * w + c] = wet;
      }
    const Mask m(w, h, v, kGrid);
    roads::Polyline l;
    const int n = 2 + static_cast<int>(rng.below(5));
    for (int i = 0; i < n; ++i) l.push_back(pixel_to_world(kGrid, rng.uniform(-3, w + 3), rng.uniform(-3, h + 3)));
    const auto segs = roads::intersect(m, one_road(l));
    segments += segs.size();
    for (const auto& s : segs) {
      bool wet = !s.vertices.empty();
      for (const auto& p : s.vertices) wet = wet && oracle::wet_at(m, p.x, p.y);
      ck.expect(wet, "reported sample is dry, trial " + std::to_string(trial));
    }
    for (const auto& run : oracle::wet_runs(m, l, spacing)) {
      if (run.samples < 2 || run.end_arc - run.start_arc + 1e-9 < min_run) continue;
      const bool found = std::any_of(segs.begin(), segs.end(), [&](const roads::FloodedSegment& s) {
        return std::abs(s.start_arc_m - run.start_arc) <= 1e-6 &&
               std::abs(s.start_arc_m + s.length_m - run.end_arc) <= 1e-6;
      });
      ck.expect(found, "missed run at " + fmt("%.2f", run.start_arc) + " m, trial " + std::to_string(trial));
    }
  }

  // 16x16 grid, two wet rows spanning columns 4..11, road across row 7.5.
  std::vector<std::uint8_t> v(256, 0);
  for (int r = 7; r <= 8; ++r)
    for (int c = 4; c <= 11; ++c) v[static_cast<std::size_t>(r) * 16 + c] = 1;
  const Mask hand(16, 16, v, kGrid);
  const auto segs =
      roads::intersect(hand, one_road({pixel_to_world(kGrid, -0.1, 7.5), pixel_to_world(kGrid, 16.1, 7.5)}));
  ck.expect(segs.size() == 1, "hand case: one segment");
  const double len = segs.empty() ? 0.0 : segs[0].length_m;
  ck.expect(std::abs(len - 38.0) <= spacing, "hand case: 38 m +- one spacing");
  ck.note(std::to_string(segments) + " segments over 50 scenes; hand case " + fmt("%.3f", len) + " m");
}

// --- 11 ----------------------------------------------------------------------

void determinism(Checker& ck) {
  auto run = [](const std::string& name) {
    const auto dir = oracle::scratch_dir(name);
    pipeline::PipelineConfig cfg;
    cfg.seed = 2024;
    cfg.mode = pipeline::InferMode::kTrain;
    cfg.chip_size = 64;
    cfg.model = segnet::ModelConfig{1, 4, 4};
    cfg.train.epochs = 2;
    cfg.out_dir = dir;
    return pipeline::run_pipeline(cfg);
  };
  const auto a = run("accept_det_a");
  const auto b = run("accept_det_b");
  ck.expect(a.mask == b.mask, "in-memory masks");
  auto same_file = [&](const fs::path& pa, const fs::path& pb, const std::string& what) {
    const auto ba = oracle::file_bytes(pa);
    ck.expect(!ba.empty() && ba == oracle::file_bytes(pb), what + " bytes");
  };
  same_file(bundle_json_path(a.mask_path), bundle_json_path(b.mask_path), "mask header");
  same_file(bundle_bin_path(a.mask_path), bundle_bin_path(b.mask_path), "mask payload");
  ck.expect(a.model_path && b.model_path, "model written");
  if (a.model_path && b.model_path) same_file(*a.model_path, *b.model_path, "model");
  same_file(a.flooded_path, b.flooded_path, "flooded GeoJSON");
  ck.note(std::to_string(a.segments.size()) + " flooded segments, " + std::to_string(a.mask.count()) + " wet px");
}

struct Criterion {
  int id;
  const char* name;
  void (*fn)(Checker&);
  double max_seconds;  // 0: no limit
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "ndwi/threshold oracle", ndwi_oracle, 1.0},
      {2, "simulator properties", simulator_properties, 30.0},
      {3, "reflectance spot-check", reflectance_spot, 0},
      {4, "gradient check", gradient_check, 60.0},
      {5, "metric consistency", metric_consistency, 0},
      {6, "desk-scale training", training_substitute, 600.0},
      {7, "pruning schedule", pruning, 0},
      {8, "quantization", quantization, 0},
      {9, "bench arithmetic", bench_arithmetic, 0},
      {10, "road intersection oracle", road_oracle, 0},
      {11, "end-to-end determinism", determinism, 0},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Checker ck;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.fn(ck);
    } catch (const std::exception& e) {
      ck.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.max_seconds > 0) ck.expect(secs < c.max_seconds, "runtime " + fmt("%.1f", secs) + " s");
    failed += !ck.ok();
    std::printf("%s %2d %-26s %6.2fs  %s\n", ck.ok() ? "PASS" : "FAIL", c.id, c.name, secs, ck.summary().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
