#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "memenc/backbone.hpp"
#include "memenc/heads.hpp"
#include "memenc/memory.hpp"
#include "memenc/synthgen.hpp"

namespace memenc {

struct ModelConfig {
  BackboneConfig backbone;
  HeadsConfig heads;
  MemoryConfig memory;
  bool memory_enabled = true;
  // frozen: stand-in backbone fixed, heads/memory/conditioning train.
  // lora:   adds trainable low-rank deltas and unfreezes AdaLN maps.
  // full:   everything trains.
  std::string backbone_mode = "frozen";
  std::uint64_t seed = 1;
  // 0 = derive from seed. Ensemble members override this so they share one
  // frozen backbone (and its feature cache) while head inits differ.
  std::uint64_t head_seed = 0;

  void validate() const;
  std::uint64_t effective_head_seed() const { return head_seed ? head_seed : seed; }
};

struct InputMask {
  enum class Frames { All, CurrentOnly, SingleLag, ShuffledTime };
  Frames frames = Frames::All;
  int lag = 0;  // SingleLag: the current-stimulus path sees the frame at this lag
  bool condM = false, condB = false, condT = false;  // true = slots zeroed
  std::uint64_t shuffle_seed = 99;

  std::string describe() const;
};

// Per-image forward products of a frozen backbone: the four ConvBlock tap
// grids plus the class token. Valid only while the backbone weights match the
// stamp taken at the last refresh(); exact mode re-stamps on every lookup.
class FeatureCache {
 public:
  enum class Mode { Exact, Epoch };

  struct Entry {
    std::array<std::vector<double>, 4> taps;
    std::vector<double> cls;
  };

  explicit FeatureCache(Mode mode = Mode::Epoch) : mode_(mode) {}
  void set_mode(Mode mode) { mode_ = mode; }
  void refresh(const Backbone& bb);
  const Entry& entry_for(const Tensor& image, const Backbone& bb);
  std::int64_t hits() const { return hits_; }
  std::int64_t misses() const { return misses_; }

 private:
  Mode mode_;
  std::string weight_hash_;
  std::unordered_map<std::string, Entry> entries_;
  std::int64_t hits_ = 0, misses_ = 0;
};

struct BatchOutput {
  Tensor pred;  // [B*N], trial-major
  Tensor eta;   // [N,4] routing weights used for the batch
};

struct ForwardOptions {
  bool train_mode = false;  // enables sampling jitter
  int step = 0;             // jitter stream key
  InputMask mask;
  bool use_cache = true;  // frozen-backbone fast path; exact while AdaLN/LoRA sit at init
};

class EncodingModel {
 public:
  EncodingModel(const ModelConfig& cfg, const VoxelSet& voxels);

  const ModelConfig& config() const { return cfg_; }
  const VoxelSet& voxels() const { return voxels_; }
  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  ParamStore& head_params() { return head_ps_; }

  std::vector<Tensor> trainable_params() const;

  // One graph over a batch of trials; predictions row-major by (trial, voxel).
  BatchOutput forward_batch(const Dataset& ds, const std::vector<int>& trials,
                            const ForwardOptions& opt);

  // Eval-mode predictions as plain values, no graph.
  std::vector<double> predict(const Dataset& ds, const std::vector<int>& trials,
                              const InputMask& mask = {}, bool use_cache = true);

  Tensor routing_u() const;    // [N,2] current RetinaMapper outputs
  Tensor routing_eta() const;  // [N,4] current LayerSelector outputs

  // Snapshot/restore over backbone + head parameters, in that order.
  std::vector<double> snapshot() const;
  void restore(const std::vector<double>& flat);
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

  FeatureCache& feature_cache() { return cache_; }
  void refresh_caches();

 private:
  struct TrialFeatures {
    std::array<Tensor, 4> taps;
    Tensor cls;
  };
  TrialFeatures current_features(const Dataset& ds, int trial, const ForwardOptions& opt,
                                 const Tensor& zero_image);
  Tensor masked_conditions(const Dataset& ds, int trial, const InputMask& mask) const;
  Tensor memory_feature(const Dataset& ds, const std::vector<int>& trials,
                        const ForwardOptions& opt, const Tensor& zero_image);

  ModelConfig cfg_;
  VoxelSet voxels_;
  Backbone backbone_;
  ParamStore head_ps_;
  RetinaMapper retina_;
  LayerSelector selector_;
  FeatureFuser fuser_;
  MemoryCompressor compressor_;
  VoxelReadout readout_;
  Tensor pe_;  // [N,36] constant
  FeatureCache cache_;
  std::vector<int> shuffle_map_;  // lazily built derangement for ShuffledTime
  std::uint64_t shuffle_map_seed_ = 0;
};

}  // namespace memenc
