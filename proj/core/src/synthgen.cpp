#include "memenc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <map>
#include <numbers>
#include <numeric>

#include "memenc/backbone.hpp"
#include "memenc/blob.hpp"
#include "memenc/error.hpp"

namespace memenc {

using nlohmann::json;

const char* archetype_name(Archetype a) {
  switch (a) {
    case Archetype::Retinotopic: return "retinotopic";
    case Archetype::DepthSelective: return "depth-selective";
    case Archetype::Behavior: return "behavior";
    case Archetype::TimeDrift: return "time-drift";
    case Archetype::MemoryLag: return "memory-lag";
    case Archetype::PureNoise: return "pure-noise";
  }
  return "unknown";
}

void GeneratorSpec::validate() const {
  if (n_voxels < 1) throw ConfigError("generator: n_voxels must be >= 1");
  if (n_runs < 1 || trials_per_run < 4) {
    throw ConfigError("generator: need >= 1 run and >= 4 trials per run for the split");
  }
  if (n_subjects < 1) throw ConfigError("generator: n_subjects must be >= 1");
  if (repeat_fraction < 0.0 || repeat_fraction > 1.0) {
    throw ConfigError("generator: repeat_fraction outside [0,1]");
  }
  if (noise_std < 0.0) throw ConfigError("generator: negative noise_std");
  double mix_sum = 0.0;
  for (double m : voxel_mix) {
    if (m < 0.0) throw ConfigError("generator: negative voxel_mix entry");
    mix_sum += m;
  }
  if (std::abs(mix_sum - 1.0) > 1e-9) {
    throw ConfigError("generator: voxel_mix sums to " + std::to_string(mix_sum) + ", not 1");
  }
  if (replay_period < 1) throw ConfigError("generator: replay_period must be >= 1");
  if (replay_lags.empty()) throw ConfigError("generator: replay_lags empty");
  for (std::size_t i = 0; i < replay_lags.size(); ++i) {
    if (replay_lags[i] < 1 || replay_lags[i] >= t_mem) {
      throw ConfigError("generator: replay lag " + std::to_string(replay_lags[i]) +
                        " outside [1," + std::to_string(t_mem) + ")");
    }
    if (i > 0 && replay_lags[i] <= replay_lags[i - 1]) {
      throw ConfigError("generator: replay_lags must be strictly increasing");
    }
  }
  if (t_mem < 1) throw ConfigError("generator: t_mem must be >= 1");
  if (image_size < 8 || image_size % 8 != 0) {
    throw ConfigError("generator: image_size must be a positive multiple of 8");
  }
}

namespace {

Tensor synth_image(const GeneratorSpec& spec, std::uint64_t image_id) {
  CounterRng rng(spec.seed, "image", image_id);
  const int s = spec.image_size;
  const int n_blobs = 1 + static_cast<int>(rng.below(3));
  struct Blob {
    double cx, cy, sigma, amp, col[3];
  };
  std::vector<Blob> blobs(static_cast<std::size_t>(n_blobs));
  for (Blob& b : blobs) {
    b.cx = rng.uniform(-0.8, 0.8);
    b.cy = rng.uniform(-0.8, 0.8);
    b.sigma = rng.uniform(0.2, 0.35);
    b.amp = rng.uniform(0.5, 1.0);
    for (double& c : b.col) c = rng.uniform(0.2, 1.0);
  }
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double freq = rng.uniform(2.0, 6.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double gamp = rng.uniform(0.05, 0.2);
  const double ct = std::cos(theta), st = std::sin(theta);

  std::vector<double> px(static_cast<std::size_t>(s) * s * 3);
  for (int i = 0; i < s; ++i) {
    const double y = -1.0 + 2.0 * (i + 0.5) / s;
    for (int j = 0; j < s; ++j) {
      const double x = -1.0 + 2.0 * (j + 0.5) / s;
      const double g = gamp * std::sin(std::numbers::pi * freq * (x * ct + y * st) + phase);
      double acc[3] = {g, g, g};
      for (const Blob& b : blobs) {
        const double dx = x - b.cx, dy = y - b.cy;
        const double e = b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        for (int c = 0; c < 3; ++c) acc[c] += e * b.col[c];
      }
      for (int c = 0; c < 3; ++c) {
        px[(static_cast<std::size_t>(i) * s + j) * 3 + c] =
            std::min(std::max(acc[c], 0.0), 1.0);
      }
    }
  }
  return Tensor::from_data({s, s, 3}, std::move(px));
}

std::array<int, 6> archetype_counts(const GeneratorSpec& spec) {
  std::array<int, 6> counts{};
  std::array<double, 6> frac{};
  int total = 0;
  for (int i = 0; i < 6; ++i) {
    const double exact = spec.voxel_mix[static_cast<std::size_t>(i)] * spec.n_voxels;
    counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact + 1e-9));
    frac[static_cast<std::size_t>(i)] = exact - counts[static_cast<std::size_t>(i)];
    total += counts[static_cast<std::size_t>(i)];
  }
  std::array<int, 6> order = {0, 1, 2, 3, 4, 5};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return frac[static_cast<std::size_t>(a)] >
                                              frac[static_cast<std::size_t>(b)]; });
  for (int k = 0; total < spec.n_voxels; ++k, ++total) {
    ++counts[static_cast<std::size_t>(order[static_cast<std::size_t>(k % 6)])];
  }
  return counts;
}

}  // namespace

std::vector<double> luminance_grid(const Tensor& image, int side) {
  const int s = image.dim(0);
  if (image.rank() != 3 || image.dim(1) != s || image.dim(2) != 3 || s % side != 0) {
    throw ShapeError("luminance_grid: image " + shape_str(image.shape()) +
                     " not divisible into " + std::to_string(side) + " cells");
  }
  const int block = s / side;
  std::vector<double> grid(static_cast<std::size_t>(side) * side, 0.0);
  const auto& px = image.data();
  for (int gi = 0; gi < side; ++gi) {
    for (int gj = 0; gj < side; ++gj) {
      double acc = 0.0;
      for (int i = 0; i < block; ++i) {
        for (int j = 0; j < block; ++j) {
          const std::size_t base =
              ((static_cast<std::size_t>(gi * block + i)) * s + (gj * block + j)) * 3;
          acc += (px[base] + px[base + 1] + px[base + 2]) / 3.0;
        }
      }
      grid[static_cast<std::size_t>(gi) * side + gj] = acc / (block * block);
    }
  }
  return grid;
}

double lum_at(const std::vector<double>& grid, int side, double ux, double uy) {
  // Same align-corners convention as the tensor sampling ops: x along
  // columns, y along rows.
  const double gx = (ux + 1.0) * 0.5 * (side - 1);
  const double gy = (uy + 1.0) * 0.5 * (side - 1);
  const int j0 = std::min(std::max(static_cast<int>(std::floor(gx)), 0), side - 2);
  const int i0 = std::min(std::max(static_cast<int>(std::floor(gy)), 0), side - 2);
  const double fx = gx - j0, fy = gy - i0;
  const double v00 = grid[static_cast<std::size_t>(i0) * side + j0];
  const double v01 = grid[static_cast<std::size_t>(i0) * side + j0 + 1];
  const double v10 = grid[static_cast<std::size_t>(i0 + 1) * side + j0];
  const double v11 = grid[static_cast<std::size_t>(i0 + 1) * side + j0 + 1];
  return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  const int T = spec.n_trials();
  const int N = spec.n_voxels;
  const int tpr = spec.trials_per_run;

  ds.run_of.resize(static_cast<std::size_t>(T));
  ds.pos_in_run.resize(static_cast<std::size_t>(T));
  ds.split.resize(static_cast<std::size_t>(T));
  ds.subject_of.resize(static_cast<std::size_t>(T));
  const int n_test = std::max(1, static_cast<int>(std::lround(0.1 * tpr)));
  const int n_val = std::max(1, static_cast<int>(std::lround(0.1 * tpr)));
  const int n_train = tpr - n_val - n_test;
  if (n_train < 1) throw ConfigError("generator: run too short for an 80/10/10 split");
  for (int t = 0; t < T; ++t) {
    ds.run_of[static_cast<std::size_t>(t)] = t / tpr;
    const int pos = t % tpr;
    ds.pos_in_run[static_cast<std::size_t>(t)] = pos;
    ds.split[static_cast<std::size_t>(t)] = pos < n_train ? 0 : (pos < n_train + n_val ? 1 : 2);
    ds.subject_of[static_cast<std::size_t>(t)] = (t / tpr) % spec.n_subjects;
  }

  // Repeat pairs: consecutive test slots within each run, capped by the
  // requested fraction of test slots.
  const int total_test = n_test * spec.n_runs;
  int pairs_wanted = static_cast<int>(std::floor(spec.repeat_fraction * total_test / 2.0));
  for (int r = 0; r < spec.n_runs && pairs_wanted > 0; ++r) {
    std::vector<int> slots;
    for (int pos = tpr - n_test; pos < tpr; ++pos) slots.push_back(r * tpr + pos);
    for (std::size_t k = 0; k + 1 < slots.size() && pairs_wanted > 0; k += 2, --pairs_wanted) {
      ds.repeat_pairs.emplace_back(slots[k], slots[k + 1]);
    }
  }

  ds.image_id.resize(static_cast<std::size_t>(T));
  std::iota(ds.image_id.begin(), ds.image_id.end(), 0);
  for (const auto& [first, second] : ds.repeat_pairs) {
    ds.image_id[static_cast<std::size_t>(second)] = first;
  }
  ds.images.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const int id = ds.image_id[static_cast<std::size_t>(t)];
    if (id == t) {
      ds.images[static_cast<std::size_t>(t)] = synth_image(spec, static_cast<std::uint64_t>(t));
    } else {
      ds.images[static_cast<std::size_t>(t)] = ds.images[static_cast<std::size_t>(id)];
    }
  }

  // Conditions.
  std::vector<double> button(static_cast<std::size_t>(T)), rt(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    CounterRng rng(spec.seed, "behavior", static_cast<std::uint64_t>(t));
    button[static_cast<std::size_t>(t)] = static_cast<double>(rng.below(3)) - 1.0;
    rt[static_cast<std::size_t>(t)] = rng.uniform(0.3, 1.5);
  }
  double rt_mu = 0.0, rt_sd = 0.0;
  for (double v : rt) rt_mu += v;
  rt_mu /= T;
  for (double v : rt) rt_sd += (v - rt_mu) * (v - rt_mu);
  rt_sd = std::sqrt(rt_sd / T);
  if (rt_sd < 1e-12) rt_sd = 1.0;

  std::vector<int> lag_of(static_cast<std::size_t>(T), 0);
  for (const auto& [first, second] : ds.repeat_pairs) {
    lag_of[static_cast<std::size_t>(second)] = second - first;
  }
  ds.conditions.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto& c = ds.conditions[static_cast<std::size_t>(t)];
    c[0] = lag_of[static_cast<std::size_t>(t)] > 0 ? 1.0 : 0.0;
    c[1] = static_cast<double>(lag_of[static_cast<std::size_t>(t)]) / spec.t_mem;
    c[2] = button[static_cast<std::size_t>(t)];
    c[3] = (rt[static_cast<std::size_t>(t)] - rt_mu) / rt_sd;
    c[4] = T > 1 ? static_cast<double>(t) / (T - 1) : 0.0;
    c[5] = tpr > 1 ? static_cast<double>(ds.pos_in_run[static_cast<std::size_t>(t)]) / (tpr - 1)
                   : 0.0;
  }

  // Voxels: archetypes in enum order, coordinates keyed per voxel.
  const std::array<int, 6> counts = archetype_counts(spec);
  ds.gt.resize(static_cast<std::size_t>(N));
  std::vector<double> coords(static_cast<std::size_t>(N) * 3);
  {
    int v = 0;
    for (int a = 0; a < 6; ++a) {
      for (int k = 0; k < counts[static_cast<std::size_t>(a)]; ++k, ++v) {
        CounterRng rng(spec.seed, "voxel", static_cast<std::uint64_t>(v));
        VoxelGroundTruth& g = ds.gt[static_cast<std::size_t>(v)];
        g.archetype = static_cast<Archetype>(a);
        double px, py, pz;
        switch (g.archetype) {
          case Archetype::Retinotopic:
            px = rng.uniform(-0.8, 0.8);
            py = rng.uniform(-0.8, 0.8);
            pz = rng.uniform(-1.0, 1.0);
            g.vx = px;
            g.vy = py;
            break;
          case Archetype::DepthSelective: {
            const int q = static_cast<int>(rng.below(4));
            px = rng.uniform(-1.0, 1.0);
            py = rng.uniform(-1.0, 1.0);
            // Keep pz inside its quartile with a margin so the routing MLP
            // has a learnable boundary.
            pz = -1.0 + 0.5 * q + 0.05 + 0.4 * rng.uniform();
            g.tap = q;
            break;
          }
          case Archetype::MemoryLag: {
            const int cell = static_cast<int>(rng.below(4));
            const double gx = (cell % 2) ? 0.5 : -0.5;
            const double gy = (cell / 2) ? 0.5 : -0.5;
            px = gx + rng.uniform(-0.1, 0.1);
            py = gy + rng.uniform(-0.1, 0.1);
            pz = rng.uniform(-1.0, 1.0);
            g.vx = px;
            g.vy = py;
            break;
          }
          default:
            px = rng.uniform(-1.0, 1.0);
            py = rng.uniform(-1.0, 1.0);
            pz = rng.uniform(-1.0, 1.0);
            break;
        }
        coords[static_cast<std::size_t>(v) * 3] = px;
        coords[static_cast<std::size_t>(v) * 3 + 1] = py;
        coords[static_cast<std::size_t>(v) * 3 + 2] = pz;
      }
    }
  }

  // Dense ROI ids over the archetypes that are actually present.
  std::array<int, 6> roi_of_archetype;
  roi_of_archetype.fill(-1);
  {
    int next = 0;
    for (int a = 0; a < 6; ++a) {
      if (counts[static_cast<std::size_t>(a)] > 0) {
        roi_of_archetype[static_cast<std::size_t>(a)] = next++;
      }
    }
  }
  ds.voxels.n_voxels = N;
  ds.voxels.coords = Tensor::from_data({N, 3}, std::move(coords));
  ds.voxels.roi_label.resize(static_cast<std::size_t>(N));
  for (int v = 0; v < N; ++v) {
    ds.voxels.roi_label[static_cast<std::size_t>(v)] =
        roi_of_archetype[static_cast<std::size_t>(
            static_cast<int>(ds.gt[static_cast<std::size_t>(v)].archetype))];
  }
  ds.voxels.subject = 0;
  ds.voxels.validate();

  // Planted signals.
  std::vector<std::vector<double>> grids(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) grids[static_cast<std::size_t>(t)] = luminance_grid(
      ds.images[static_cast<std::size_t>(t)]);

  std::vector<std::array<std::vector<double>, 4>> pooled;
  if (counts[static_cast<std::size_t>(static_cast<int>(Archetype::DepthSelective))] > 0) {
    BackboneConfig bcfg;
    bcfg.image_size = spec.image_size;
    bcfg.adaln_enabled = false;
    Backbone ref(bcfg, spec.backbone_seed);
    pooled.resize(static_cast<std::size_t>(T));
    std::map<int, std::array<std::vector<double>, 4>> by_image;
    NoGradGuard ng;
    for (int t = 0; t < T; ++t) {
      const int id = ds.image_id[static_cast<std::size_t>(t)];
      auto it = by_image.find(id);
      if (it == by_image.end()) {
        BackboneOutput out = ref.forward(ds.images[static_cast<std::size_t>(t)]);
        std::array<std::vector<double>, 4> p;
        for (int j = 0; j < 4; ++j) {
          p[static_cast<std::size_t>(j)] = avgmaxpool(out.taps[static_cast<std::size_t>(j)]).data();
        }
        it = by_image.emplace(id, std::move(p)).first;
      }
      pooled[static_cast<std::size_t>(t)] = it->second;
    }
  }

  ds.clean.assign(static_cast<std::size_t>(T) * N, 0.0);
  const double period = static_cast<double>(spec.replay_period);
  for (int v = 0; v < N; ++v) {
    const VoxelGroundTruth& g = ds.gt[static_cast<std::size_t>(v)];
    std::vector<double> wv;
    if (g.archetype == Archetype::DepthSelective) {
      CounterRng rng(spec.seed, "wv", static_cast<std::uint64_t>(v));
      wv.resize(pooled[0][0].size());
      double norm = 0.0;
      for (double& x : wv) {
        x = rng.gaussian();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (double& x : wv) x /= norm;
    }
    for (int t = 0; t < T; ++t) {
      double val = 0.0;
      switch (g.archetype) {
        case Archetype::Retinotopic:
          val = lum_at(grids[static_cast<std::size_t>(t)], 8, g.vx, g.vy);
          break;
        case Archetype::DepthSelective: {
          const auto& p = pooled[static_cast<std::size_t>(t)][static_cast<std::size_t>(g.tap)];
          for (std::size_t k = 0; k < wv.size(); ++k) val += wv[k] * p[k];
          break;
        }
        case Archetype::Behavior:
          val = 0.8 * ds.conditions[static_cast<std::size_t>(t)][2] +
                0.6 * ds.conditions[static_cast<std::size_t>(t)][3];
          break;
        case Archetype::TimeDrift:
          val = 2.0 * (ds.conditions[static_cast<std::size_t>(t)][4] - 0.5);
          break;
        case Archetype::MemoryLag:
          for (int lag : spec.replay_lags) {
            if (ds.pos_in_run[static_cast<std::size_t>(t)] - lag >= 0) {
              const double amp = std::pow(0.85, static_cast<double>(lag) / period - 1.0);
              val += amp * lum_at(grids[static_cast<std::size_t>(t - lag)], 8, g.vx, g.vy);
            }
          }
          break;
        case Archetype::PureNoise:
          val = 0.0;
          break;
      }
      ds.clean[static_cast<std::size_t>(t) * N + v] = val;
    }
  }

  // Repeated presentations share the first presentation's clean response,
  // which pins the zero-noise noise ceiling at exactly 1.
  for (const auto& [first, second] : ds.repeat_pairs) {
    for (int v = 0; v < N; ++v) {
      ds.clean[static_cast<std::size_t>(second) * N + v] =
          ds.clean[static_cast<std::size_t>(first) * N + v];
    }
  }

  // Per-voxel z-scoring, then observation noise.
  for (int v = 0; v < N; ++v) {
    double mu = 0.0;
    for (int t = 0; t < T; ++t) mu += ds.clean[static_cast<std::size_t>(t) * N + v];
    mu /= T;
    double sd = 0.0;
    for (int t = 0; t < T; ++t) {
      const double c = ds.clean[static_cast<std::size_t>(t) * N + v] - mu;
      sd += c * c;
    }
    sd = std::sqrt(sd / T);
    const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (int t = 0; t < T; ++t) {
      auto& x = ds.clean[static_cast<std::size_t>(t) * N + v];
      x = (x - mu) * inv;
    }
  }
  ds.responses.resize(static_cast<std::size_t>(T) * N);
  for (int t = 0; t < T; ++t) {
    for (int v = 0; v < N; ++v) {
      CounterRng rng(spec.seed, "noise", static_cast<std::uint64_t>(t) * N + v);
      ds.responses[static_cast<std::size_t>(t) * N + v] =
          ds.clean[static_cast<std::size_t>(t) * N + v] + spec.noise_std * rng.gaussian();
    }
  }
  return ds;
}

Tensor Dataset::frame_at(int trial, int lag) const {
  if (trial < 0 || trial >= n_trials()) throw LookupError("frame_at: bad trial");
  if (lag < 0) throw PreconditionError("frame_at: negative lag");
  if (pos_in_run[static_cast<std::size_t>(trial)] - lag < 0) return {};
  return images[static_cast<std::size_t>(trial - lag)];
}

std::vector<int> Dataset::trials_in_split(int which) const {
  std::vector<int> out;
  for (int t = 0; t < n_trials(); ++t)
    if (split[static_cast<std::size_t>(t)] == which) out.push_back(t);
  return out;
}

std::vector<int> Dataset::voxels_of(Archetype a) const {
  std::vector<int> out;
  for (int v = 0; v < n_voxels(); ++v)
    if (gt[static_cast<std::size_t>(v)].archetype == a) out.push_back(v);
  return out;
}

Tensor Dataset::condition_row(int trial) const {
  const auto& c = conditions[static_cast<std::size_t>(trial)];
  return Tensor::from_data({1, kCondDim}, std::vector<double>(c.begin(), c.end()));
}

std::vector<int> window_trial_ids(const Dataset& ds, int trial, int t_mem) {
  std::vector<int> ids(static_cast<std::size_t>(t_mem), -1);
  for (int k = 0; k < t_mem; ++k) {
    const int lag = t_mem - k;  // slot 0 is the oldest frame
    if (ds.pos_in_run[static_cast<std::size_t>(trial)] - lag >= 0) {
      ids[static_cast<std::size_t>(k)] = trial - lag;
    }
  }
  return ids;
}

MemoryWindow build_window(const Dataset& ds, int trial, int t_mem) {
  MemoryWindow w;
  w.frames.resize(static_cast<std::size_t>(t_mem));
  w.blank_mask.assign(static_cast<std::size_t>(t_mem), true);
  std::vector<double> conds(static_cast<std::size_t>(t_mem) * kCondDim, 0.0);
  const std::vector<int> ids = window_trial_ids(ds, trial, t_mem);
  for (int k = 0; k < t_mem; ++k) {
    const int id = ids[static_cast<std::size_t>(k)];
    if (id < 0) continue;
    w.frames[static_cast<std::size_t>(k)] = ds.images[static_cast<std::size_t>(id)];
    w.blank_mask[static_cast<std::size_t>(k)] = false;
    for (int c = 0; c < kCondDim; ++c) {
      conds[static_cast<std::size_t>(k) * kCondDim + c] =
          ds.conditions[static_cast<std::size_t>(id)][static_cast<std::size_t>(c)];
    }
  }
  w.conditions = Tensor::from_data({t_mem, kCondDim}, std::move(conds));
  return w;
}

void Dataset::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const int T = n_trials();
  const int N = n_voxels();
  const int S = spec.image_size;

  std::vector<double> image_blob;
  image_blob.reserve(static_cast<std::size_t>(T) * S * S * 3);
  for (const Tensor& img : images)
    image_blob.insert(image_blob.end(), img.data().begin(), img.data().end());
  write_f64_blob(dir / "images.bin", image_blob);
  write_f64_blob(dir / "responses.bin", responses);
  write_f64_blob(dir / "clean.bin", clean);
  std::vector<double> cond_blob;
  cond_blob.reserve(static_cast<std::size_t>(T) * kCondDim);
  for (const auto& c : conditions) cond_blob.insert(cond_blob.end(), c.begin(), c.end());
  write_f64_blob(dir / "conditions.bin", cond_blob);
  write_f64_blob(dir / "coords.bin", voxels.coords.data());

  json m;
  m["format"] = "memenc-dataset-v1";
  m["spec"] = {{"n_voxels", spec.n_voxels},
               {"n_runs", spec.n_runs},
               {"trials_per_run", spec.trials_per_run},
               {"n_subjects", spec.n_subjects},
               {"repeat_fraction", spec.repeat_fraction},
               {"noise_std", spec.noise_std},
               {"voxel_mix", spec.voxel_mix},
               {"replay_period", spec.replay_period},
               {"replay_lags", spec.replay_lags},
               {"t_mem", spec.t_mem},
               {"image_size", spec.image_size},
               {"seed", spec.seed},
               {"backbone_seed", spec.backbone_seed}};
  m["slot_layout"] = {"is_old", "lag_norm", "button", "rt_z", "session_time", "run_time"};
  m["image_id"] = image_id;
  m["split"] = split;
  m["subject_of"] = subject_of;
  json pairs = json::array();
  for (const auto& [a, b] : repeat_pairs) pairs.push_back({a, b});
  m["repeat_pairs"] = pairs;
  m["roi_label"] = voxels.roi_label;
  json gtj = json::array();
  for (const VoxelGroundTruth& g : gt) {
    gtj.push_back({{"archetype", static_cast<int>(g.archetype)},
                   {"vx", g.vx},
                   {"vy", g.vy},
                   {"tap", g.tap}});
  }
  m["ground_truth"] = gtj;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  json m = json::parse(read_text_file(dir / "manifest.json"));
  if (m.value("format", "") != "memenc-dataset-v1") {
    throw IoError(dir.string() + ": not a dataset directory");
  }
  Dataset ds;
  const json& sj = m.at("spec");
  ds.spec.n_voxels = sj.at("n_voxels").get<int>();
  ds.spec.n_runs = sj.at("n_runs").get<int>();
  ds.spec.trials_per_run = sj.at("trials_per_run").get<int>();
  ds.spec.n_subjects = sj.at("n_subjects").get<int>();
  ds.spec.repeat_fraction = sj.at("repeat_fraction").get<double>();
  ds.spec.noise_std = sj.at("noise_std").get<double>();
  ds.spec.voxel_mix = sj.at("voxel_mix").get<std::array<double, 6>>();
  ds.spec.replay_period = sj.at("replay_period").get<int>();
  ds.spec.replay_lags = sj.at("replay_lags").get<std::vector<int>>();
  ds.spec.t_mem = sj.at("t_mem").get<int>();
  ds.spec.image_size = sj.at("image_size").get<int>();
  ds.spec.seed = sj.at("seed").get<std::uint64_t>();
  ds.spec.backbone_seed = sj.at("backbone_seed").get<std::uint64_t>();

  const int T = ds.spec.n_trials();
  const int N = ds.spec.n_voxels;
  const int S = ds.spec.image_size;
  std::vector<double> image_blob =
      read_f64_blob(dir / "images.bin", static_cast<std::int64_t>(T) * S * S * 3);
  ds.images.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto begin = image_blob.begin() + static_cast<std::ptrdiff_t>(t) * S * S * 3;
    ds.images[static_cast<std::size_t>(t)] =
        Tensor::from_data({S, S, 3}, std::vector<double>(begin, begin + S * S * 3));
  }
  ds.responses = read_f64_blob(dir / "responses.bin", static_cast<std::int64_t>(T) * N);
  ds.clean = read_f64_blob(dir / "clean.bin", static_cast<std::int64_t>(T) * N);
  std::vector<double> cond_blob =
      read_f64_blob(dir / "conditions.bin", static_cast<std::int64_t>(T) * kCondDim);
  ds.conditions.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < kCondDim; ++c) {
      ds.conditions[static_cast<std::size_t>(t)][static_cast<std::size_t>(c)] =
          cond_blob[static_cast<std::size_t>(t) * kCondDim + c];
    }
  }

  ds.image_id = m.at("image_id").get<std::vector<int>>();
  ds.split = m.at("split").get<std::vector<int>>();
  ds.subject_of = m.at("subject_of").get<std::vector<int>>();
  for (const json& p : m.at("repeat_pairs")) {
    ds.repeat_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  }
  ds.run_of.resize(static_cast<std::size_t>(T));
  ds.pos_in_run.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    ds.run_of[static_cast<std::size_t>(t)] = t / ds.spec.trials_per_run;
    ds.pos_in_run[static_cast<std::size_t>(t)] = t % ds.spec.trials_per_run;
  }

  ds.voxels.n_voxels = N;
  ds.voxels.coords =
      Tensor::from_data({N, 3}, read_f64_blob(dir / "coords.bin", static_cast<std::int64_t>(N) * 3));
  ds.voxels.roi_label = m.at("roi_label").get<std::vector<int>>();
  ds.voxels.subject = 0;
  for (const json& g : m.at("ground_truth")) {
    VoxelGroundTruth v;
    v.archetype = static_cast<Archetype>(g.at("archetype").get<int>());
    v.vx = g.at("vx").get<double>();
    v.vy = g.at("vy").get<double>();
    v.tap = g.at("tap").get<int>();
    ds.gt.push_back(v);
  }
  ds.voxels.validate();
  return ds;
}

}  // namespace memenc
