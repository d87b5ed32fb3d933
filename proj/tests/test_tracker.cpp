#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"
#include "memenc/rng.hpp"
#include "memenc/synthgen.hpp"
#include "memenc/tracker.hpp"

using namespace memenc;
namespace fs = std::filesystem;

namespace {

// A decaying curve with a periodic comb riding on top, like a replay sweep.
std::vector<double> comb_curve(int n, int period, double amp, double noise,
                               std::uint64_t seed) {
  CounterRng rng(seed, "curve");
  std::vector<double> c(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double v = 0.4 * std::exp(-0.08 * i) + 0.02;
    if (period > 0 && i % period == 0) v += amp;
    c[static_cast<std::size_t>(i)] = v + noise * rng.gaussian();
  }
  return c;
}

fs::path scratch_dir(const char* leaf) {
  const fs::path p = fs::temp_directory_path() / "memenc_tracker_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("detect_period finds a planted comb and rejects decay-only curves") {
  const auto comb = comb_curve(32, 6, 0.3, 0.01, 1);
  const PeriodReport hit = detect_period(comb);
  CHECK(hit.found);
  CHECK(hit.period == 6);
  CHECK(hit.strength > 0.3);

  // Pure exponential decay: the detrend leaves nothing, variance guard trips.
  std::vector<double> decay(32);
  for (int i = 0; i < 32; ++i)
    decay[static_cast<std::size_t>(i)] = 0.5 * std::exp(-0.1 * i) + 0.01;
  CHECK_FALSE(detect_period(decay).found);

  const auto noise_only = comb_curve(32, 0, 0.0, 0.02, 2);
  CHECK_FALSE(detect_period(noise_only, 2, 0.5).found);

  std::vector<double> too_short(10, 0.1);  // 8 usable after lag_min cut
  CHECK_THROWS_AS(detect_period(too_short), PreconditionError);
}

TEST_CASE("detect_period handles a cosine on a decaying baseline") {
  std::vector<double> c(36);
  for (int i = 0; i < 36; ++i)
    c[static_cast<std::size_t>(i)] =
        0.3 * std::exp(-0.05 * i) + 0.1 * std::cos(2.0 * M_PI * i / 6.0) + 0.05;
  const PeriodReport rep = detect_period(c);
  CHECK(rep.found);
  CHECK(rep.period == 6);
  CHECK(rep.strength > 0.9);
}

TEST_CASE("calibrate_threshold is deterministic and tightens with alpha") {
  const double a = calibrate_threshold(32, 64, 0.05, 9);
  const double b = calibrate_threshold(32, 64, 0.05, 9);
  CHECK(a == b);
  const double strict = calibrate_threshold(32, 64, 0.01, 9);
  CHECK(strict >= a);
  CHECK(a > 0.0);
  CHECK(a < 1.0);
  CHECK_THROWS_AS(calibrate_threshold(32, 10, 0.05, 9), PreconditionError);
}

TEST_CASE("sweep writers emit one row per lag and roi") {
  LagSweepResult sweep;
  sweep.t_mem = 12;
  sweep.roi_of_voxel = {0, 0, 1, 1, 1};
  sweep.roi_names = {"retinotopic", "memory-lag"};
  for (int lag = 0; lag < 12; ++lag) {
    LagResult r;
    r.lag = lag;
    r.voxel_r.assign(5, 0.1 + 0.01 * lag);
    r.roi_mean = {0.1 + 0.01 * lag, 0.2 + 0.01 * lag};
    r.mean_r = 0.15 + 0.01 * lag;
    sweep.per_lag.push_back(r);
  }
  LagResult ctrl;
  ctrl.lag = kRandLag;
  ctrl.voxel_r.assign(5, 0.01);
  ctrl.roi_mean = {0.01, 0.01};
  ctrl.mean_r = 0.01;
  sweep.per_lag.push_back(ctrl);

  REQUIRE(sweep.control() != nullptr);
  CHECK(sweep.mean_curve().size() == 12);
  CHECK(sweep.roi_curve(1).size() == 12);

  const fs::path dir = scratch_dir("writers");
  write_sweep_csv(sweep, dir / "curve.csv");
  const std::string csv = read_text_file(dir / "curve.csv");
  std::istringstream lines(csv);
  std::string line;
  int rows = 0;
  bool header = true;
  while (std::getline(lines, line)) {
    if (header) {
      CHECK(line == "lag,roi,roi_name,mean_r,n_voxels");
      header = false;
      continue;
    }
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 12 * 2);  // control row excluded

  TrackerConfig cfg;
  write_period_report(sweep, cfg, dir / "period_report.json");
  const auto rep = nlohmann::json::parse(read_text_file(dir / "period_report.json"));
  CHECK(rep.at("format") == "memenc-period-report-v1");
  CHECK(rep.at("t_mem") == 12);
  REQUIRE(rep.at("rois").size() == 2);
  for (const auto& roi : rep.at("rois")) {
    CHECK(roi.contains("found"));
    CHECK(roi.contains("candidate_period"));
    CHECK(roi.contains("strength"));
    CHECK(roi.contains("roi_name"));
  }
  CHECK(rep.at("verdict").contains("found"));
  CHECK(rep.at("rand_control_mean_r") == doctest::Approx(0.01));

  write_sweep_svg(sweep, cfg, dir);
  CHECK(fs::exists(dir / "lag_curves.svg"));
  CHECK(fs::exists(dir / "period_strength.svg"));
}

TEST_CASE("lag_sweep output is independent of the worker count") {
  GeneratorSpec s;
  s.n_voxels = 24;
  s.n_runs = 4;
  s.trials_per_run = 24;
  s.t_mem = 10;
  s.replay_period = 5;
  s.replay_lags = {5};
  s.noise_std = 0.1;
  s.voxel_mix = {0.4, 0.1, 0.1, 0.1, 0.2, 0.1};
  s.seed = 404;
  const Dataset ds = generate(s);

  TrackerConfig cfg;
  cfg.depth = 4;
  cfg.width = 16;
  cfg.mlp_hidden = 24;
  cfg.d_fuse = 16;
  cfg.steps = 12;
  cfg.batch = 8;
  cfg.eval_every = 6;
  cfg.seed = 2;

  const fs::path d1 = scratch_dir("jobs1");
  const fs::path d2 = scratch_dir("jobs2");
  cfg.jobs = 1;
  const LagSweepResult s1 = lag_sweep(ds, cfg, d1);
  cfg.jobs = 3;
  const LagSweepResult s2 = lag_sweep(ds, cfg, d2);

  REQUIRE(s1.per_lag.size() == s2.per_lag.size());
  REQUIRE(s1.per_lag.size() == 11);  // t_mem lags + control
  for (std::size_t i = 0; i < s1.per_lag.size(); ++i) {
    CHECK(s1.per_lag[i].lag == s2.per_lag[i].lag);
    CHECK(s1.per_lag[i].mean_r == s2.per_lag[i].mean_r);
    CHECK(s1.per_lag[i].voxel_r == s2.per_lag[i].voxel_r);
  }
  // per-lag CSVs landed as the sweep went
  CHECK(fs::exists(d1 / "lag_00.csv"));
  CHECK(fs::exists(d1 / "lag_09.csv"));
  CHECK(fs::exists(d1 / "lag_rand.csv"));
  write_sweep_csv(s1, d1 / "curve.csv");
  write_sweep_csv(s2, d2 / "curve.csv");
  CHECK(read_text_file(d1 / "curve.csv") == read_text_file(d2 / "curve.csv"));
}

TEST_CASE("tracker config validation") {
  TrackerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.jobs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrackerConfig{};
  cfg.period_threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrackerConfig{};
  cfg.lag_min = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
