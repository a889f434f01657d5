#pragma once

#include <functional>
#include <vector>

#include <json.hpp>

#include "roadflood/segnet.hpp"
#include "roadflood/train.hpp"

namespace roadflood::bench {

struct BenchReport {
  std::vector<double> runs;  // seconds per batch
  int batch_size = 0;
  int warmup = 0;
  int chip_size = 256;
  double chip_gsd_m = 0.0;
  double chip_area_km2 = 0.0;
  double mean_per_image_s = 0.0;
  double ms_per_sqkm = 0.0;
};

/// Derives the summary fields from raw batch timings.
BenchReport make_bench_report(std::vector<double> runs, int batch_size, double gsd_m, int chip_size = 256,
                              int warmup = 0);

nlohmann::json to_json(const BenchReport& r);

/// Runs the callable once and returns its duration in seconds.
using Timer = std::function<double(const std::function<void()>&)>;

Timer steady_timer();

struct BenchOptions {
  int batch = 8;
  int runs = 5;
  int warmup = 1;
  double gsd_m = 4.75;
  int threads = 1;
  Timer timer;  // steady clock when empty
};

/// Times forward passes over the first `batch` samples of the dataset.
BenchReport bench_infer(const segnet::ModelParams& params, const segnet::ModelConfig& cfg,
                        const segnet::Dataset& chips, const BenchOptions& opts = {});

}  // namespace roadflood::bench
