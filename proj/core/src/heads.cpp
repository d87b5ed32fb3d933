#include "memenc/heads.hpp"

#include <cmath>
#include <numbers>

#include "memenc/error.hpp"

namespace memenc {

void VoxelSet::validate() const {
  if (n_voxels <= 0) throw ConfigError("voxel set: empty");
  if (!coords.defined() || coords.rank() != 2 || coords.dim(0) != n_voxels ||
      coords.dim(1) != 3) {
    throw ShapeError("voxel set: coords must be [" + std::to_string(n_voxels) + ",3]");
  }
  for (double v : coords.data()) {
    if (!std::isfinite(v) || v < -1.0 || v > 1.0) {
      throw PreconditionError("voxel set: coordinate outside [-1,1]");
    }
  }
  if (static_cast<int>(roi_label.size()) != n_voxels) {
    throw ShapeError("voxel set: roi_label size mismatch");
  }
  const int r = n_rois();
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int id : roi_label) {
    if (id < 0 || id >= r) throw ConfigError("voxel set: roi ids not dense");
    seen[static_cast<std::size_t>(id)] = true;
  }
  for (bool s : seen)
    if (!s) throw ConfigError("voxel set: roi ids not dense");
}

int VoxelSet::n_rois() const {
  int mx = -1;
  for (int id : roi_label) mx = std::max(mx, id);
  return mx + 1;
}

Tensor positional_encode(const Tensor& p, int octaves) {
  if (p.rank() != 2 || p.dim(1) != 3) {
    throw ShapeError("positional_encode: expected [N,3], got " + shape_str(p.shape()));
  }
  if (octaves < 1) throw ConfigError("positional_encode: octaves must be >= 1");
  const int n = p.dim(0);
  const int d = 3 * 2 * octaves;
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    for (int axis = 0; axis < 3; ++axis) {
      const double v = p.data()[static_cast<std::size_t>(i) * 3 + axis];
      if (!(v >= -1.0 && v <= 1.0)) {
        throw PreconditionError("positional_encode: coordinate " + std::to_string(v) +
                                " outside [-1,1]");
      }
      for (int k = 0; k < octaves; ++k) {
        const double arg = std::ldexp(std::numbers::pi, k) * v;  // 2^k * pi * v
        const std::size_t base =
            static_cast<std::size_t>(i) * d + static_cast<std::size_t>(axis) * 2 * octaves +
            static_cast<std::size_t>(k) * 2;
        out[base] = std::sin(arg);
        out[base + 1] = std::cos(arg);
      }
    }
  }
  return Tensor::from_data({n, d}, std::move(out));
}

RetinaMapper::RetinaMapper(ParamStore& ps, const HeadsConfig& cfg, CounterRng& rng) {
  const int in = 3 * 2 * cfg.pe_octaves;
  mlp = MLP(ps, "retina", {in, cfg.mapper_hidden, cfg.mapper_hidden, 2}, rng);
}

Tensor RetinaMapper::forward(const Tensor& pe) const { return tanh_op(mlp.forward(pe)); }

LayerSelector::LayerSelector(ParamStore& ps, const HeadsConfig& cfg, CounterRng& rng) {
  const int in = 3 * 2 * cfg.pe_octaves;
  mlp = MLP(ps, "selector", {in, cfg.mapper_hidden, 4}, rng);
}

Tensor LayerSelector::forward(const Tensor& pe) const { return softmax(mlp.forward(pe), 1); }

Tensor entropy_reg(const Tensor& eta) {
  if (eta.rank() != 2) throw ShapeError("entropy_reg: expected [N,4]");
  return mul_scalar(sum(xlogx(eta)), 1.0 / eta.dim(0));
}

Tensor make_jitter(int n_voxels, double sigma, CounterRng& rng) {
  std::vector<double> eps(static_cast<std::size_t>(n_voxels) * 2);
  for (double& v : eps) v = rng.gaussian(0.0, sigma);
  return Tensor::from_data({n_voxels, 2}, std::move(eps));
}

FeatureFuser::FeatureFuser(ParamStore& ps, int backbone_width, const HeadsConfig& cfg,
                           CounterRng& rng)
    : d_fuse(cfg.d_fuse) {
  for (int j = 0; j < 4; ++j) {
    proj_sample[static_cast<std::size_t>(j)] =
        Linear(ps, "fuse.sample" + std::to_string(j), backbone_width, cfg.d_fuse, rng);
    proj_pool[static_cast<std::size_t>(j)] =
        Linear(ps, "fuse.pool" + std::to_string(j), 2 * backbone_width, cfg.d_fuse, rng);
  }
}

Tensor FeatureFuser::fuse(const std::array<Tensor, 4>& taps, const Tensor& u, const Tensor& eta,
                          const Tensor& jitter) const {
  if (u.rank() != 2 || u.dim(1) != 2) throw ShapeError("fuse: u must be [N,2]");
  const int n = u.dim(0);
  if (eta.rank() != 2 || eta.dim(0) != n || eta.dim(1) != 4) {
    throw ShapeError("fuse: eta must be [N,4]");
  }
  Tensor points = jitter.defined() ? clamp(add(u, jitter), -1.0, 1.0) : u;
  Tensor h_tilde;
  for (int j = 0; j < 4; ++j) {
    const Tensor& m = taps[static_cast<std::size_t>(j)];
    if (!m.defined() || m.rank() != 3) throw ShapeError("fuse: tap " + std::to_string(j) +
                                                        " missing or not [H,W,C]");
    Tensor sampled = proj_sample[static_cast<std::size_t>(j)].forward(grid_sample(m, points));
    Tensor pooled = proj_pool[static_cast<std::size_t>(j)].forward(
        reshape(avgmaxpool(m), {1, 2 * m.dim(2)}));
    Tensor layer = add(sampled, repeat_row(reshape(pooled, {d_fuse}), n));
    Tensor weighted = scale_rows(layer, reshape(slice(eta, 1, j, 1), {n}));
    h_tilde = h_tilde.defined() ? add(h_tilde, weighted) : weighted;
  }
  return h_tilde;
}

VoxelReadout::VoxelReadout(ParamStore& ps, const std::string& prefix, int n_voxels, int d_total,
                           CounterRng& rng) {
  w = ps.create_gaussian(prefix + ".w", {n_voxels, d_total}, rng, 0.01);
  b = ps.create(prefix + ".b", {n_voxels});
}

Tensor VoxelReadout::forward(const Tensor& feat) const {
  if (feat.shape() != w.shape()) {
    throw ShapeError("readout: feature width " + shape_str(feat.shape()) +
                     " does not match weights " + shape_str(w.shape()));
  }
  return add(rowwise_dot(w, feat), b);
}

}  // namespace memenc
