#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memenc/model.hpp"

namespace memenc {

struct RecipeConfig {
  std::string mode = "naive";  // naive | ensemble
  int atlases = 1;             // a
  int rois_per_atlas = 1;      // b
  int steps = 2000;
  double lr = 3e-4;
  int batch = 16;
  double lambda_ent = 0.01;
  // early: lambda_ent for the first quarter of the steps, then 0. constant: held.
  std::string ent_schedule = "early";
  InputMask input_mask;
  int soup_k = 10;
  int eval_every = 100;
  bool fixed_atlas = false;  // ensemble: reuse one partition for every atlas slot
  std::uint64_t seed = 1;

  void validate() const;
};

struct Checkpoint {
  std::vector<double> params;  // full snapshot (frozen entries average to themselves)
  double val_score = 0.0;      // mean val-split r at snapshot time
  int step = 0;
};

struct HistoryPoint {
  int step = 0;
  double train_loss = 0.0;
  double val_r = 0.0;
  double eta_entropy = 0.0;  // mean selector entropy, tracks the sharpening schedule
};

struct TrainResult {
  std::vector<HistoryPoint> history;
  double best_checkpoint_r = 0.0;  // best single snapshot
  double final_val_r = 0.0;        // after the checkpoint soup
  int soup_size = 0;               // checkpoints accepted into the soup
};

struct SoupResult {
  std::vector<double> params;
  double val_score = 0.0;
  std::vector<int> accepted_steps;
};

// Mean per-voxel val-split r. voxel_ids maps model rows to dataset voxel
// columns; empty means identity (model covers the whole set, in order).
double eval_mean_r(EncodingModel& model, const Dataset& ds, const InputMask& mask,
                   const std::vector<int>& voxel_ids = {});

// Adam over the model's trainable set; loss is voxel MSE plus the scheduled
// entropy penalty. Snapshots every eval_every steps, then soups them and
// leaves the soup parameters in the model. History is JSONL when non-empty.
TrainResult train_one(EncodingModel& model, const Dataset& ds, const RecipeConfig& recipe,
                      const std::filesystem::path& history_file = {});

// Greedy checkpoint averaging: sort by val desc, keep top k, grow from the
// best while the uniform average strictly improves the val score.
SoupResult soup(const std::vector<Checkpoint>& checkpoints, int k, EncodingModel& scratch,
                const Dataset& ds, const InputMask& mask,
                const std::vector<int>& voxel_ids = {});

struct Atlas {
  std::vector<int> label;  // voxel -> ROI id in [0, n_rois)
  int n_rois = 0;
  std::uint64_t seed_used = 0;

  std::vector<std::vector<int>> members() const;
};

std::vector<Atlas> make_atlases(const VoxelSet& voxels, int a, int b, std::uint64_t seed);

// Restriction of vs to ids (in the given order), ROI labels re-densified.
VoxelSet voxel_subset(const VoxelSet& vs, const std::vector<int>& ids);

struct ZooMember {
  int atlas = 0, roi = 0;
  std::vector<int> voxel_ids;  // dataset voxel columns this member predicts
  std::vector<double> params;  // souped snapshot
  double val_r = 0.0;
};

struct EnsembleModel {
  ModelConfig base;
  VoxelSet voxels;  // full set the zoo covers
  std::vector<Atlas> atlases;
  std::vector<ZooMember> members;

  void save(const std::filesystem::path& dir) const;
  static EnsembleModel load(const ModelConfig& base, const VoxelSet& voxels,
                            const std::filesystem::path& dir);
};

EnsembleModel train_ensemble(const ModelConfig& base, const VoxelSet& voxels, const Dataset& ds,
                             const RecipeConfig& recipe,
                             const std::filesystem::path& history_dir = {});

// Per-voxel uniform mean over the members whose ROI holds the voxel. Returns
// [trials x N] row-major. warm, when given, carries backbone features across
// members (they share frozen backbone weights, so entries stay valid).
std::vector<double> ensemble_predict(const EnsembleModel& zoo, const Dataset& ds,
                                     const std::vector<int>& trials, const InputMask& mask = {},
                                     FeatureCache* warm = nullptr);

double ensemble_val_r(const EnsembleModel& zoo, const Dataset& ds, const InputMask& mask = {},
                      FeatureCache* warm = nullptr);

// Output matching only: student fits teacher_train_pred (row-major over the
// train split in trials_in_split order) with MSE; val history still scores
// against observed responses.
TrainResult distill(EncodingModel& student, const Dataset& ds,
                    const std::vector<double>& teacher_train_pred, const RecipeConfig& recipe,
                    const std::filesystem::path& history_file = {});

}  // namespace memenc
