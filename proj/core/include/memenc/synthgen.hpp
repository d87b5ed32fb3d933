#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memenc/heads.hpp"
#include "memenc/memory.hpp"
#include "memenc/tensor.hpp"

namespace memenc {

// Voxel archetypes planted by the generator. The archetype id doubles as the
// ROI label so downstream per-ROI reports line up with ground truth.
enum class Archetype : int {
  Retinotopic = 0,
  DepthSelective = 1,
  Behavior = 2,
  TimeDrift = 3,
  MemoryLag = 4,
  PureNoise = 5,
};

const char* archetype_name(Archetype a);

struct GeneratorSpec {
  int n_voxels = 192;
  int n_runs = 8;
  int trials_per_run = 32;
  int n_subjects = 1;
  double repeat_fraction = 0.5;  // fraction of test slots joined into repeat pairs
  double noise_std = 0.1;
  // Proportions in Archetype order: retinotopic, depth, behavior, time,
  // memory, noise. Must sum to 1.
  std::array<double, 6> voxel_mix = {0.25, 0.20, 0.10, 0.10, 0.25, 0.10};
  int replay_period = 6;
  std::vector<int> replay_lags = {6, 12, 18, 24, 30};
  int t_mem = 32;
  int image_size = 32;
  std::uint64_t seed = 1;
  // Fixed-seed frozen backbone whose pooled tap features define the
  // depth-selective voxels' planted signal.
  std::uint64_t backbone_seed = 9000;

  int n_trials() const { return n_runs * trials_per_run; }
  void validate() const;
};

struct VoxelGroundTruth {
  Archetype archetype = Archetype::PureNoise;
  double vx = 0.0, vy = 0.0;  // planted stimulus location (retinotopic/memory)
  int tap = -1;               // planted tap layer index 0..3 (depth-selective)
};

// Condition vector slot layout (fixed):
//   0 is_old, 1 lag/t_mem, 2 button (-1/0/+1), 3 reaction-time z-score,
//   4 session_time, 5 run_time. Slots {0,1} = condM, {2,3} = condB,
//   {4,5} = condT.
inline constexpr int kCondDim = 6;
inline constexpr int kSplitTrain = 0;
inline constexpr int kSplitVal = 1;
inline constexpr int kSplitTest = 2;

struct Dataset {
  GeneratorSpec spec;
  std::vector<Tensor> images;  // one [S,S,3] per trial; repeats share pixels
  std::vector<int> image_id;   // repeat pairs share an id
  std::vector<double> responses;  // [n_trials * n_voxels] row-major, observed
  std::vector<double> clean;      // same layout, planted (z-scored) signal
  std::vector<std::array<double, kCondDim>> conditions;
  std::vector<int> run_of, pos_in_run, split, subject_of;  // split: 0/1/2
  std::vector<std::pair<int, int>> repeat_pairs;           // (first, second) trial ids
  VoxelSet voxels;
  std::vector<VoxelGroundTruth> gt;

  int n_trials() const { return static_cast<int>(images.size()); }
  int n_voxels() const { return spec.n_voxels; }
  double response(int trial, int voxel) const {
    return responses[static_cast<std::size_t>(trial) * spec.n_voxels + voxel];
  }

  // Frame shown `lag` trials before `trial` within the same run; undefined
  // Tensor when the slot falls before the run start (a padded blank).
  Tensor frame_at(int trial, int lag) const;

  std::vector<int> trials_in_split(int which) const;
  std::vector<int> voxels_of(Archetype a) const;

  Tensor condition_row(int trial) const;  // [1, kCondDim]

  void save(const std::filesystem::path& dir) const;
  static Dataset load(const std::filesystem::path& dir);
};

Dataset generate(const GeneratorSpec& spec);

// Per-trial lookback window (same-run frames, left-padded blanks).
MemoryWindow build_window(const Dataset& ds, int trial, int t_mem);

// Trial indices for each window slot, oldest first; -1 marks a blank.
std::vector<int> window_trial_ids(const Dataset& ds, int trial, int t_mem);

// 8x8 channel-mean luminance grid and align-corners bilinear lookup, the
// primitives behind the planted retinotopic/memory responses. Exposed so
// oracle tests can recompute planted signals independently of the model.
std::vector<double> luminance_grid(const Tensor& image, int side = 8);
double lum_at(const std::vector<double>& grid, int side, double ux, double uy);

}  // namespace memenc
