#include "roadflood/bench.hpp"

#include <chrono>
#include <numeric>

#include "roadflood/error.hpp"

namespace roadflood::bench {

BenchReport make_bench_report(std::vector<double> runs, int batch_size, double gsd_m, int chip_size, int warmup) {
  if (runs.empty()) throw InvalidArgument("bench needs at least one timed run");
  if (batch_size <= 0) throw InvalidArgument("batch size must be positive");
  if (!(gsd_m > 0.0) || chip_size <= 0) throw InvalidArgument("chip size and GSD must be positive");
  BenchReport r;
  r.runs = std::move(runs);
  r.batch_size = batch_size;
  r.warmup = warmup;
  r.chip_size = chip_size;
  r.chip_gsd_m = gsd_m;
  const double side_km = chip_size * gsd_m / 1000.0;
  r.chip_area_km2 = side_km * side_km;
  const double mean = std::accumulate(r.runs.begin(), r.runs.end(), 0.0) / static_cast<double>(r.runs.size());
  r.mean_per_image_s = mean / batch_size;
  r.ms_per_sqkm = 1000.0 * r.mean_per_image_s / r.chip_area_km2;
  return r;
}

nlohmann::json to_json(const BenchReport& r) {
  return nlohmann::json{{"runs_s", r.runs},
                        {"batch_size", r.batch_size},
                        {"warmup_runs", r.warmup},
                        {"chip_size", r.chip_size},
                        {"chip_gsd_m", r.chip_gsd_m},
                        {"chip_area_km2", r.chip_area_km2},
                        {"mean_per_image_s", r.mean_per_image_s},
                        {"ms_per_sqkm", r.ms_per_sqkm}};
}

Timer steady_timer() {
  return [](const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
  };
}

BenchReport bench_infer(const segnet::ModelParams& params, const segnet::ModelConfig& cfg,
                        const segnet::Dataset& chips, const BenchOptions& opts) {
  if (opts.batch <= 0 || opts.runs <= 0 || opts.warmup < 0) throw InvalidArgument("invalid bench options");
  if (chips.size() < static_cast<std::size_t>(opts.batch)) {
    throw InvalidArgument("bench needs " + std::to_string(opts.batch) + " chips, got " +
                          std::to_string(chips.size()));
  }
  if (chips.channels != cfg.in_channels || chips.height % cfg.divisor() != 0 || chips.width % cfg.divisor() != 0) {
    throw InvalidArgument("chip shape does not fit the model");
  }
  if (chips.height != chips.width) throw InvalidArgument("bench chips must be square");
  segnet::check_params(params, cfg);

  std::vector<std::size_t> idx(static_cast<std::size_t>(opts.batch));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto batch = chips.batch(idx);
  const auto run = [&] {
    const auto probs = segnet::forward(params, cfg, batch, opts.threads);
    if (probs.data.empty()) throw Error("empty inference output");
  };
  const Timer timer = opts.timer ? opts.timer : steady_timer();
  for (int i = 0; i < opts.warmup; ++i) run();
  std::vector<double> runs;
  for (int i = 0; i < opts.runs; ++i) runs.push_back(timer(run));
  return make_bench_report(std::move(runs), opts.batch, opts.gsd_m, chips.width, opts.warmup);
}

}  // namespace roadflood::bench
