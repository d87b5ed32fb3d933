#include "memenc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"
#include "memenc/rng.hpp"

namespace memenc {

using nlohmann::json;

PearsonResult pearson_flagged(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw PreconditionError("pearson: need at least 2 samples");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
  double r = sxy / std::sqrt(sxx * syy);
  r = std::min(std::max(r, -1.0), 1.0);
  return {r, false};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson_flagged(x, y).r;
}

NoiseCeiling noise_ceiling(const std::vector<std::vector<std::vector<double>>>& groups,
                           int n_splits, std::uint64_t seed, int min_groups) {
  NoiseCeiling out;
  if (groups.empty()) return out;
  const std::size_t n_groups = groups[0].size();
  if (static_cast<int>(n_groups) < std::max(min_groups, 2)) return out;
  for (const auto& voxel_groups : groups) {
    if (voxel_groups.size() != n_groups) throw ShapeError("noise_ceiling: ragged group lists");
    for (const auto& g : voxel_groups) {
      if (g.size() < 2) return out;  // a group with a single presentation
    }
  }
  out.available = true;
  out.nc.resize(groups.size(), 0.0);
  // Null floor: a split-half r from G independent pairs scatters with sd
  // about 1/sqrt(G) around zero even for pure noise, so raw Spearman-Brown
  // never reaches zero on finite data. Deducting a 3/sqrt(G) floor before
  // the Spearman-Brown step keeps pure-noise voxels at |NC| <= 0.1 for
  // G >= 100 while leaving the noiseless limit at exactly 1.
  const double floor = 3.0 / std::sqrt(static_cast<double>(n_groups));
  for (std::size_t v = 0; v < groups.size(); ++v) {
    double acc = 0.0;
    for (int s = 0; s < n_splits; ++s) {
      CounterRng rng(seed, "nc_split", static_cast<std::uint64_t>(s));
      std::vector<double> half_a(n_groups), half_b(n_groups);
      for (std::size_t g = 0; g < n_groups; ++g) {
        std::vector<std::size_t> idx(groups[v][g].size());
        for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
        for (std::size_t k = idx.size(); k > 1; --k) {
          std::swap(idx[k - 1], idx[rng.below(k)]);
        }
        const std::size_t cut = (idx.size() + 1) / 2;
        double sa = 0.0, sb = 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
          (k < cut ? sa : sb) += groups[v][g][idx[k]];
        }
        half_a[g] = sa / static_cast<double>(cut);
        half_b[g] = sb / static_cast<double>(idx.size() - cut);
      }
      acc += pearson_flagged(half_a, half_b).r;
    }
    const double mean_r = acc / n_splits;
    double adj = 0.0;
    if (floor < 1.0 && mean_r > floor) adj = (mean_r - floor) / (1.0 - floor);
    double sb_r = 2.0 * adj / (1.0 + adj);
    out.nc[v] = std::min(std::max(sb_r, 0.0), 1.0);
  }
  return out;
}

ChallengeScore challenge_score(const std::vector<double>& pred, const std::vector<double>& truth,
                               int n_voxels, const std::vector<std::vector<int>>& groups,
                               const std::vector<double>& nc) {
  if (pred.size() != truth.size() || n_voxels < 1 ||
      pred.size() % static_cast<std::size_t>(n_voxels) != 0) {
    throw ShapeError("challenge_score: pred/truth layout mismatch");
  }
  const int rows = static_cast<int>(pred.size()) / n_voxels;
  ChallengeScore out;
  out.per_voxel.resize(static_cast<std::size_t>(n_voxels), 0.0);

  bool has_repeats = false;
  for (const auto& g : groups)
    if (g.size() >= 2) has_repeats = true;

  if (!has_repeats) {
    out.fallback_single_trial = true;
    double acc = 0.0;
    std::vector<double> p(static_cast<std::size_t>(rows)), y(static_cast<std::size_t>(rows));
    for (int v = 0; v < n_voxels; ++v) {
      for (int i = 0; i < rows; ++i) {
        p[static_cast<std::size_t>(i)] = pred[static_cast<std::size_t>(i) * n_voxels + v];
        y[static_cast<std::size_t>(i)] = truth[static_cast<std::size_t>(i) * n_voxels + v];
      }
      const double r = pearson_flagged(p, y).r;
      out.per_voxel[static_cast<std::size_t>(v)] = r * r;
      acc += r * r;
    }
    out.score = 100.0 * acc / n_voxels;
    return out;
  }

  if (static_cast<int>(nc.size()) != n_voxels) {
    throw ShapeError("challenge_score: NC vector must cover all voxels");
  }
  const std::size_t n_groups = groups.size();
  std::vector<double> pg(n_groups), yg(n_groups);
  double acc = 0.0;
  for (int v = 0; v < n_voxels; ++v) {
    for (std::size_t g = 0; g < n_groups; ++g) {
      double sp = 0.0, sy = 0.0;
      for (int row : groups[g]) {
        if (row < 0 || row >= rows) throw ShapeError("challenge_score: group row out of range");
        sp += pred[static_cast<std::size_t>(row) * n_voxels + v];
        sy += truth[static_cast<std::size_t>(row) * n_voxels + v];
      }
      pg[g] = sp / static_cast<double>(groups[g].size());
      yg[g] = sy / static_cast<double>(groups[g].size());
    }
    const double r = pearson_flagged(pg, yg).r;
    const double denom = std::max(nc[static_cast<std::size_t>(v)] * nc[static_cast<std::size_t>(v)],
                                  0.01);
    const double capped = std::min(r * r / denom, 1.0);
    out.per_voxel[static_cast<std::size_t>(v)] = capped;
    acc += capped;
  }
  out.score = 100.0 * acc / n_voxels;
  return out;
}

std::vector<RoiRow> roi_aggregate(const std::vector<double>& per_voxel,
                                  const std::vector<int>& labels, int n_rois) {
  if (per_voxel.size() != labels.size()) throw ShapeError("roi_aggregate: size mismatch");
  if (n_rois < 1) throw ConfigError("roi_aggregate: n_rois must be >= 1");
  std::vector<std::vector<double>> buckets(static_cast<std::size_t>(n_rois));
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] < 0 || labels[v] >= n_rois) throw ConfigError("roi_aggregate: label out of range");
    buckets[static_cast<std::size_t>(labels[v])].push_back(per_voxel[v]);
  }
  std::vector<RoiRow> rows(static_cast<std::size_t>(n_rois));
  for (int r = 0; r < n_rois; ++r) {
    RoiRow& row = rows[static_cast<std::size_t>(r)];
    row.roi = r;
    auto& vals = buckets[static_cast<std::size_t>(r)];
    row.n = static_cast<int>(vals.size());
    if (vals.empty()) continue;
    row.available = true;
    double acc = 0.0;
    for (double v : vals) acc += v;
    row.mean = acc / static_cast<double>(vals.size());
    std::sort(vals.begin(), vals.end());
    const std::size_t m = vals.size();
    row.median = m % 2 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
  }
  return rows;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void ScoreTable::write_csv(const std::filesystem::path& path) const {
  std::ostringstream os;
  os << "voxel,roi,roi_name,r,r2,nc\n";
  for (std::size_t v = 0; v < r.size(); ++v) {
    const int roi_id = v < roi.size() ? roi[v] : 0;
    const std::string name =
        roi_id >= 0 && static_cast<std::size_t>(roi_id) < roi_names.size()
            ? roi_names[static_cast<std::size_t>(roi_id)]
            : "";
    os << v << ',' << roi_id << ',' << name << ',' << format_double(r[v]) << ','
       << format_double(r2[v]) << ',' << (v < nc.size() ? format_double(nc[v]) : "NA") << "\n";
  }
  write_text_file(path, os.str());
}

void ScoreTable::write_json(const std::filesystem::path& path) const {
  json j;
  j["model_id"] = model_id;
  j["input_mask"] = input_mask;
  j["config_hash"] = config_hash;
  j["lag"] = lag;
  j["mean_r"] = mean_r;
  j["challenge"] = challenge;
  j["challenge_fallback"] = challenge_fallback;
  j["n_voxels"] = r.size();
  j["nc_available"] = !nc.empty();
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace memenc
