#pragma once

#include <array>
#include <string>
#include <vector>

#include "memenc/nn.hpp"
#include "memenc/rng.hpp"
#include "memenc/tensor.hpp"

namespace memenc {

struct VoxelSet {
  int n_voxels = 0;
  Tensor coords;               // [N,3], constant leaf, values in [-1,1]
  std::vector<int> roi_label;  // dense ids 0..R-1
  int subject = 0;

  void validate() const;
  int n_rois() const;
};

struct HeadsConfig {
  int pe_octaves = 6;
  int d_fuse = 64;       // d in Eq. (4)
  double sigma = 0.01;   // sampling jitter std
  int mapper_hidden = 64;
};

// Sinusoidal coordinate features: per axis, [sin(2^k pi p), cos(2^k pi p)]
// for k = 0..octaves-1. Coordinates are constants, so this is graph-free.
Tensor positional_encode(const Tensor& p, int octaves = 6);

// u = tanh(MLP(PE(p))), shared across layers.
struct RetinaMapper {
  MLP mlp;
  RetinaMapper() = default;
  RetinaMapper(ParamStore& ps, const HeadsConfig& cfg, CounterRng& rng);
  Tensor forward(const Tensor& pe) const;
};

// eta = softmax(MLP(PE(p))) over the 4 tap layers.
struct LayerSelector {
  MLP mlp;
  LayerSelector() = default;
  LayerSelector(ParamStore& ps, const HeadsConfig& cfg, CounterRng& rng);
  Tensor forward(const Tensor& pe) const;
};

// Mean over voxels of sum_j eta_j ln eta_j. In [-ln 4, 0]; minimized at the
// uniform distribution, so adding it to the loss rewards high entropy.
Tensor entropy_reg(const Tensor& eta);

// Per-voxel jitter offsets, a constant leaf drawn fresh each call.
Tensor make_jitter(int n_voxels, double sigma, CounterRng& rng);

// Per-tap projections and the Eq. (4) sum. The sampled vector (D') and the
// pooled avg+max vector (2D') run through separate per-tap linear maps into
// the shared fusion width d.
struct FeatureFuser {
  std::array<Linear, 4> proj_sample;  // D' -> d
  std::array<Linear, 4> proj_pool;    // 2D' -> d
  int d_fuse = 0;

  FeatureFuser() = default;
  FeatureFuser(ParamStore& ps, int backbone_width, const HeadsConfig& cfg, CounterRng& rng);

  // taps: four [H',W',D'] maps. u: [N,2]; eta: [N,4]; jitter: [N,2] or
  // undefined for eval mode. Returns h_tilde: [N,d].
  Tensor fuse(const std::array<Tensor, 4>& taps, const Tensor& u, const Tensor& eta,
              const Tensor& jitter) const;
};

// One non-shared linear regression per voxel.
struct VoxelReadout {
  Tensor w;  // [N, d_total]
  Tensor b;  // [N]

  VoxelReadout() = default;
  VoxelReadout(ParamStore& ps, const std::string& prefix, int n_voxels, int d_total,
               CounterRng& rng);

  // feat: [N, d_total] per-voxel feature rows -> y: [N].
  Tensor forward(const Tensor& feat) const;
};

}  // namespace memenc
