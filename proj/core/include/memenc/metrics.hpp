#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memenc/heads.hpp"

namespace memenc {

struct PearsonResult {
  double r = 0.0;
  bool degenerate = false;  // zero variance on either side
};

// Centered correlation; throws on n < 2; zero variance yields r = 0 with the
// degeneracy flag instead of NaN so voxel-wise averages stay total.
PearsonResult pearson_flagged(const std::vector<double>& x, const std::vector<double>& y);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct NoiseCeiling {
  std::vector<double> nc;  // per voxel, in [0,1]
  bool available = false;  // false when repeats are insufficient
};

// Split-half Spearman-Brown estimator with a 3/sqrt(G) null-floor deduction
// so pure-noise voxels read near zero instead of the raw split-half scatter.
// groups[v][g][k] = k-th presentation of image group g for voxel v. Needs
// >= 2 presentations per group and >= min_groups groups; otherwise returns
// available=false.
NoiseCeiling noise_ceiling(const std::vector<std::vector<std::vector<double>>>& groups,
                           int n_splits = 20, std::uint64_t seed = 7, int min_groups = 10);

struct ChallengeScore {
  double score = 0.0;
  bool fallback_single_trial = false;
  std::vector<double> per_voxel;  // capped normalized r^2 per voxel (or plain r^2 on fallback)
};

// Repetition-averaged "public" style score: predictions and truths are
// averaged over each repeat group, correlated per voxel, and normalized by
// max(NC^2, 0.01) with a per-voxel cap at 1. Without repeat groups it falls
// back to the single-trial mean r^2, flagged.
// pred/truth are [n_rows * n_voxels] row-major; groups index rows.
ChallengeScore challenge_score(const std::vector<double>& pred, const std::vector<double>& truth,
                               int n_voxels, const std::vector<std::vector<int>>& groups,
                               const std::vector<double>& nc);

struct RoiRow {
  int roi = 0;
  int n = 0;
  double mean = 0.0;
  double median = 0.0;
  bool available = false;
};

std::vector<RoiRow> roi_aggregate(const std::vector<double>& per_voxel,
                                  const std::vector<int>& labels, int n_rois);

// Per-voxel scores plus summaries, emittable as CSV/JSON with fixed
// formatting so repeated runs produce byte-identical files.
struct ScoreTable {
  std::vector<double> r;       // single-trial per voxel
  std::vector<double> r2;
  std::vector<double> nc;      // empty when unavailable
  std::vector<int> roi;
  std::vector<std::string> roi_names;
  double mean_r = 0.0;
  double challenge = 0.0;
  bool challenge_fallback = false;
  std::string model_id, input_mask, config_hash;
  int lag = 0;

  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

std::string format_double(double v);  // shared fixed formatting for CSV output

}  // namespace memenc
