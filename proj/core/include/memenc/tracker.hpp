#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memenc/model.hpp"
#include "memenc/training.hpp"

namespace memenc {

inline constexpr int kRandLag = -1;  // the shuffled "T=rand" control row

// One restricted model per lag; small on purpose so the 32-model sweep stays
// in CPU-minutes territory.
struct TrackerConfig {
  int depth = 4;
  int width = 32;
  int attn_heads = 2;
  int mlp_hidden = 64;
  int d_fuse = 32;
  int steps = 500;
  double lr = 2e-3;
  int batch = 16;
  double lambda_ent = 0.01;  // early schedule, as in training
  int eval_every = 100;
  int jobs = 1;
  bool rand_control = true;
  int lag_min = 2;  // lags below this are HRF-dominated and excluded from detection
  // Detection cut for the period report. detect_period itself defaults to the
  // looser 0.3; this one is calibrated on the negative control so the null
  // false-positive rate stays near 1-3% (see calibrate_threshold).
  double period_threshold = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
  ModelConfig model_for(const Dataset& ds) const;
};

struct LagResult {
  int lag = 0;  // kRandLag for the control
  std::vector<double> voxel_r;   // test-split per-voxel r
  std::vector<double> roi_mean;  // mean r per ROI
  double mean_r = 0.0;           // over all voxels
  std::string config_hash;       // identity of this lag model's setup
};

struct LagSweepResult {
  int t_mem = 0;
  std::vector<int> roi_of_voxel;
  std::vector<std::string> roi_names;
  std::vector<LagResult> per_lag;  // lags ascending, control (if present) last

  std::vector<double> roi_curve(int roi) const;  // score vs lag, control excluded
  std::vector<double> mean_curve() const;
  const LagResult* control() const;  // nullptr when the sweep ran without one
};

// Trains one single-lag model per lag (plus the shuffled control), evaluates
// per-voxel test r. When out_dir is set, per-lag CSVs land there as each
// model finishes, so an aborted sweep still leaves partial results behind.
LagSweepResult lag_sweep(const Dataset& ds, const TrackerConfig& cfg,
                         const std::filesystem::path& out_dir = {});

struct PeriodReport {
  bool found = false;
  int period = 0;        // argmax autocorrelation lag, valid even when !found
  double strength = 0.0;
};

// Exponential-detrend then unbiased autocorrelation over candidate periods
// with at least three full cycles in the curve. Lags below lag_min are cut
// before fitting. found = strength >= threshold.
PeriodReport detect_period(const std::vector<double>& curve, int lag_min = 2,
                           double threshold = 0.3);

// Monte-Carlo null (decaying curves plus noise) -> (1 - alpha) quantile of
// the peak strength; the false-positive threshold used by the sweep report.
double calibrate_threshold(int t_mem, int n_null, double alpha, std::uint64_t seed,
                           int lag_min = 2);

void write_sweep_csv(const LagSweepResult& sweep, const std::filesystem::path& path);
void write_period_report(const LagSweepResult& sweep, const TrackerConfig& cfg,
                         const std::filesystem::path& path);
void write_sweep_svg(const LagSweepResult& sweep, const TrackerConfig& cfg,
                     const std::filesystem::path& dir);

}  // namespace memenc
