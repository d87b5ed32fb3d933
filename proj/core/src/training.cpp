#include "memenc/training.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"
#include "memenc/metrics.hpp"

namespace memenc {

namespace {

std::vector<int> identity_ids(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

double lambda_at(const RecipeConfig& r, int step) {
  if (r.lambda_ent <= 0.0) return 0.0;
  if (r.ent_schedule == "constant") return r.lambda_ent;
  return step < r.steps / 4 ? r.lambda_ent : 0.0;  // early: first quarter only
}

std::string history_line(int step, double train_loss, double val_r, double eta_entropy) {
  std::string s = "{\"step\":";
  s += std::to_string(step);
  s += ",\"train_loss\":";
  s += format_double(train_loss);
  s += ",\"val_r\":";
  s += format_double(val_r);
  s += ",\"eta_entropy\":";
  s += format_double(eta_entropy);
  s += "}";
  return s;
}

double mean_selector_entropy(const EncodingModel& model) {
  return -entropy_reg(model.routing_eta()).item();
}

bool use_cached_backbone(const EncodingModel& model) {
  return model.config().backbone_mode == "frozen";
}

// The shared core of train_one and distill. target_override, when set, holds
// [train trials x model voxels] values aligned with trials_in_split order.
TrainResult run_training(EncodingModel& model, const Dataset& ds, const RecipeConfig& recipe,
                         const std::vector<int>& voxel_ids_in,
                         const std::vector<double>* target_override,
                         const std::filesystem::path& history_file) {
  recipe.validate();
  const int nm = model.voxels().n_voxels;
  std::vector<int> voxel_ids = voxel_ids_in.empty() ? identity_ids(nm) : voxel_ids_in;
  if (static_cast<int>(voxel_ids.size()) != nm) {
    throw ConfigError("training: voxel id list does not match the model voxel count");
  }
  for (int v : voxel_ids) {
    if (v < 0 || v >= ds.n_voxels()) throw ConfigError("training: voxel id outside the dataset");
  }

  const std::vector<int> train_trials = ds.trials_in_split(kSplitTrain);
  if (train_trials.empty()) throw ConfigError("training: empty train split");
  if (target_override &&
      target_override->size() != train_trials.size() * static_cast<std::size_t>(nm)) {
    throw ConfigError("training: target override does not cover train trials x voxels");
  }

  const bool cached = use_cached_backbone(model);
  if (cached) model.refresh_caches();

  Adam::Config ac;
  ac.lr = recipe.lr;
  Adam adam(model.trainable_params(), ac);
  CounterRng batch_rng(recipe.seed, "batch");

  std::ofstream hist;
  if (!history_file.empty()) {
    hist.open(history_file, std::ios::trunc);
    if (!hist) throw IoError("cannot open history file " + history_file.string());
  }

  TrainResult res;
  std::vector<Checkpoint> checkpoints;
  const std::size_t n_train = train_trials.size();
  for (int step = 0; step < recipe.steps; ++step) {
    std::vector<int> picks(static_cast<std::size_t>(recipe.batch));
    std::vector<int> trials(static_cast<std::size_t>(recipe.batch));
    for (int i = 0; i < recipe.batch; ++i) {
      const int p = static_cast<int>(batch_rng.below(n_train));
      picks[static_cast<std::size_t>(i)] = p;
      trials[static_cast<std::size_t>(i)] = train_trials[static_cast<std::size_t>(p)];
    }

    ForwardOptions opt;
    opt.train_mode = true;
    opt.step = step;
    opt.mask = recipe.input_mask;
    opt.use_cache = cached;
    BatchOutput out = model.forward_batch(ds, trials, opt);

    std::vector<double> tv(static_cast<std::size_t>(recipe.batch) * nm);
    for (int i = 0; i < recipe.batch; ++i) {
      for (int j = 0; j < nm; ++j) {
        tv[static_cast<std::size_t>(i) * nm + j] =
            target_override
                ? (*target_override)[static_cast<std::size_t>(picks[static_cast<std::size_t>(i)]) *
                                         nm +
                                     j]
                : ds.response(trials[static_cast<std::size_t>(i)],
                              voxel_ids[static_cast<std::size_t>(j)]);
      }
    }
    Tensor target = Tensor::from_data({recipe.batch * nm}, std::move(tv));
    Tensor diff = sub(out.pred, target);
    Tensor loss = mean(mul(diff, diff));
    const double lam = lambda_at(recipe, step);
    if (lam > 0.0) loss = add(loss, mul_scalar(entropy_reg(out.eta), lam));

    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw NumericError("training diverged: loss is not finite at step " +
                         std::to_string(step + 1));
    }
    backward(loss);
    adam.step();

    if ((step + 1) % recipe.eval_every == 0 || step + 1 == recipe.steps) {
      const double vr = eval_mean_r(model, ds, recipe.input_mask, voxel_ids);
      const double ent = mean_selector_entropy(model);
      checkpoints.push_back(Checkpoint{model.snapshot(), vr, step + 1});
      res.history.push_back(HistoryPoint{step + 1, loss_value, vr, ent});
      if (hist.is_open()) hist << history_line(step + 1, loss_value, vr, ent) << "\n";
    }
  }

  for (const Checkpoint& c : checkpoints) {
    res.best_checkpoint_r = std::max(res.best_checkpoint_r, c.val_score);
  }
  SoupResult souped = soup(checkpoints, recipe.soup_k, model, ds, recipe.input_mask, voxel_ids);
  model.restore(souped.params);
  res.final_val_r = souped.val_score;
  res.soup_size = static_cast<int>(souped.accepted_steps.size());
  if (hist.is_open()) {
    hist << history_line(recipe.steps, res.history.back().train_loss, res.final_val_r,
                         mean_selector_entropy(model))
         << "\n";
    if (!hist) throw IoError("failed writing history file " + history_file.string());
  }
  return res;
}

struct KmeansRun {
  std::vector<int> label;
  bool ok = false;
};

KmeansRun kmeans_once(const std::vector<std::array<double, 3>>& pts, int k, CounterRng& rng) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  std::vector<std::array<double, 3>> cent(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) cent[static_cast<std::size_t>(i)] = pts[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];

  KmeansRun out;
  out.label.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    std::vector<std::array<double, 3>> acc(static_cast<std::size_t>(k), {0.0, 0.0, 0.0});
    for (int p = 0; p < n; ++p) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = 0.0;
        for (int ax = 0; ax < 3; ++ax) {
          const double dx = pts[static_cast<std::size_t>(p)][static_cast<std::size_t>(ax)] -
                            cent[static_cast<std::size_t>(c)][static_cast<std::size_t>(ax)];
          d += dx * dx;
        }
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (out.label[static_cast<std::size_t>(p)] != best) {
        out.label[static_cast<std::size_t>(p)] = best;
        changed = true;
      }
      count[static_cast<std::size_t>(best)]++;
      for (int ax = 0; ax < 3; ++ax) {
        acc[static_cast<std::size_t>(best)][static_cast<std::size_t>(ax)] +=
            pts[static_cast<std::size_t>(p)][static_cast<std::size_t>(ax)];
      }
    }
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] == 0) return out;  // ok stays false
      for (int ax = 0; ax < 3; ++ax) {
        cent[static_cast<std::size_t>(c)][static_cast<std::size_t>(ax)] =
            acc[static_cast<std::size_t>(c)][static_cast<std::size_t>(ax)] /
            count[static_cast<std::size_t>(c)];
      }
    }
    if (!changed) break;
  }
  out.ok = true;
  return out;
}

}  // namespace

void RecipeConfig::validate() const {
  if (mode != "naive" && mode != "ensemble") throw ConfigError("recipe: unknown mode " + mode);
  if (mode == "naive" && (atlases != 1 || rois_per_atlas != 1)) {
    throw ConfigError("recipe: the naive recipe means one atlas with one ROI");
  }
  if (atlases < 1 || rois_per_atlas < 1) {
    throw ConfigError("recipe: atlas counts must be positive");
  }
  if (steps < 1) throw ConfigError("recipe: steps must be positive");
  if (batch < 1) throw ConfigError("recipe: batch must be positive");
  if (!(lr > 0.0)) throw ConfigError("recipe: lr must be positive");
  if (lambda_ent < 0.0) throw ConfigError("recipe: lambda_ent must be >= 0");
  if (ent_schedule != "early" && ent_schedule != "constant") {
    throw ConfigError("recipe: unknown entropy schedule " + ent_schedule);
  }
  if (soup_k < 1) throw ConfigError("recipe: soup_k must be >= 1");
  if (eval_every < 1) throw ConfigError("recipe: eval_every must be >= 1");
}

double eval_mean_r(EncodingModel& model, const Dataset& ds, const InputMask& mask,
                   const std::vector<int>& voxel_ids_in) {
  const std::vector<int> val_trials = ds.trials_in_split(kSplitVal);
  if (val_trials.size() < 2) {
    throw ConfigError("eval: need at least 2 validation trials for a correlation");
  }
  const int nm = model.voxels().n_voxels;
  const std::vector<int> ids = voxel_ids_in.empty() ? identity_ids(nm) : voxel_ids_in;
  if (static_cast<int>(ids.size()) != nm) {
    throw ConfigError("eval: voxel id list does not match the model voxel count");
  }

  const std::vector<double> pred =
      model.predict(ds, val_trials, mask, use_cached_backbone(model));
  const int b = static_cast<int>(val_trials.size());
  std::vector<double> px(static_cast<std::size_t>(b)), tx(static_cast<std::size_t>(b));
  double acc = 0.0;
  for (int j = 0; j < nm; ++j) {
    for (int i = 0; i < b; ++i) {
      px[static_cast<std::size_t>(i)] = pred[static_cast<std::size_t>(i) * nm + j];
      tx[static_cast<std::size_t>(i)] =
          ds.response(val_trials[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    acc += pearson_flagged(px, tx).r;
  }
  return acc / nm;
}

TrainResult train_one(EncodingModel& model, const Dataset& ds, const RecipeConfig& recipe,
                      const std::filesystem::path& history_file) {
  return run_training(model, ds, recipe, {}, nullptr, history_file);
}

SoupResult soup(const std::vector<Checkpoint>& checkpoints, int k, EncodingModel& scratch,
                const Dataset& ds, const InputMask& mask, const std::vector<int>& voxel_ids) {
  if (checkpoints.empty()) throw ConfigError("soup: no checkpoints");
  if (k < 1) throw ConfigError("soup: k must be >= 1");
  const std::size_t psize = checkpoints.front().params.size();
  for (const Checkpoint& c : checkpoints) {
    if (c.params.size() != psize) throw ShapeError("soup: checkpoint parameter size mismatch");
  }

  std::vector<int> order(checkpoints.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return checkpoints[static_cast<std::size_t>(a)].val_score >
           checkpoints[static_cast<std::size_t>(b)].val_score;
  });
  if (static_cast<int>(order.size()) > k) order.resize(static_cast<std::size_t>(k));

  auto eval_params = [&](const std::vector<double>& p) {
    scratch.restore(p);
    return eval_mean_r(scratch, ds, mask, voxel_ids);
  };

  std::vector<double> sum = checkpoints[static_cast<std::size_t>(order[0])].params;
  int m = 1;
  double cur = eval_params(sum);
  SoupResult out;
  out.accepted_steps.push_back(checkpoints[static_cast<std::size_t>(order[0])].step);

  std::vector<double> trial_avg(psize);
  for (std::size_t i = 1; i < order.size(); ++i) {
    const Checkpoint& cand = checkpoints[static_cast<std::size_t>(order[i])];
    for (std::size_t j = 0; j < psize; ++j) {
      trial_avg[j] = (sum[j] + cand.params[j]) / (m + 1);
    }
    const double v = eval_params(trial_avg);
    if (v > cur) {
      for (std::size_t j = 0; j < psize; ++j) sum[j] += cand.params[j];
      ++m;
      assert(v >= cur);  // greedy acceptance keeps the val score monotone
      cur = v;
      out.accepted_steps.push_back(cand.step);
    }
  }

  out.params.resize(psize);
  for (std::size_t j = 0; j < psize; ++j) out.params[j] = sum[j] / m;
  out.val_score = cur;
  scratch.restore(out.params);
  return out;
}

std::vector<std::vector<int>> Atlas::members() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n_rois));
  for (int v = 0; v < static_cast<int>(label.size()); ++v) {
    out[static_cast<std::size_t>(label[static_cast<std::size_t>(v)])].push_back(v);
  }
  return out;
}

std::vector<Atlas> make_atlases(const VoxelSet& voxels, int a, int b, std::uint64_t seed) {
  if (a < 1 || b < 1) throw ConfigError("make_atlases: counts must be positive");
  if (b > voxels.n_voxels) throw ConfigError("make_atlases: more ROIs than voxels");

  const std::vector<double>& cv = voxels.coords.data();
  std::vector<std::array<double, 3>> pts(static_cast<std::size_t>(voxels.n_voxels));
  for (int v = 0; v < voxels.n_voxels; ++v) {
    for (int ax = 0; ax < 3; ++ax) {
      pts[static_cast<std::size_t>(v)][static_cast<std::size_t>(ax)] =
          cv[static_cast<std::size_t>(v) * 3 + ax];
    }
  }

  std::vector<Atlas> out;
  out.reserve(static_cast<std::size_t>(a));
  for (int ai = 0; ai < a; ++ai) {
    bool placed = false;
    for (int retry = 0; retry <= 10 && !placed; ++retry) {
      const std::uint64_t key = static_cast<std::uint64_t>(ai) * 64 + static_cast<std::uint64_t>(retry);
      CounterRng rng(seed, "atlas", key);
      KmeansRun km = kmeans_once(pts, b, rng);
      if (km.ok) {
        out.push_back(Atlas{std::move(km.label), b, key});
        placed = true;
      }
    }
    if (!placed) {
      throw ConfigError("make_atlases: a cluster stayed empty through 10 reseeds (atlas " +
                        std::to_string(ai) + ")");
    }
  }
  return out;
}

VoxelSet voxel_subset(const VoxelSet& vs, const std::vector<int>& ids) {
  if (ids.empty()) throw ConfigError("voxel_subset: empty id list");
  VoxelSet out;
  out.n_voxels = static_cast<int>(ids.size());
  out.subject = vs.subject;
  const std::vector<double>& cv = vs.coords.data();
  std::vector<double> coords(ids.size() * 3);
  out.roi_label.resize(ids.size());
  std::vector<int> remap(static_cast<std::size_t>(vs.n_rois()), -1);
  int next = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int v = ids[i];
    if (v < 0 || v >= vs.n_voxels) throw ConfigError("voxel_subset: id out of range");
    for (int ax = 0; ax < 3; ++ax) coords[i * 3 + ax] = cv[static_cast<std::size_t>(v) * 3 + ax];
    int& slot = remap[static_cast<std::size_t>(vs.roi_label[static_cast<std::size_t>(v)])];
    if (slot < 0) slot = next++;
    out.roi_label[i] = slot;
  }
  out.coords = Tensor::from_data({out.n_voxels, 3}, std::move(coords));
  out.validate();
  return out;
}

EnsembleModel train_ensemble(const ModelConfig& base, const VoxelSet& voxels, const Dataset& ds,
                             const RecipeConfig& recipe, const std::filesystem::path& history_dir) {
  recipe.validate();
  if (recipe.mode != "ensemble") throw ConfigError("train_ensemble: recipe mode must be ensemble");
  voxels.validate();
  const int a = recipe.atlases, b = recipe.rois_per_atlas;

  EnsembleModel zoo;
  zoo.base = base;
  zoo.voxels = voxels;
  if (recipe.fixed_atlas) {
    std::vector<Atlas> one = make_atlases(voxels, 1, b, recipe.seed);
    zoo.atlases.assign(static_cast<std::size_t>(a), one.front());
  } else {
    zoo.atlases = make_atlases(voxels, a, b, recipe.seed);
  }

  if (!history_dir.empty()) std::filesystem::create_directories(history_dir);

  FeatureCache warm(FeatureCache::Mode::Epoch);
  bool warm_ready = false;
  for (int ai = 0; ai < a; ++ai) {
    const std::vector<std::vector<int>> rois = zoo.atlases[static_cast<std::size_t>(ai)].members();
    for (int ri = 0; ri < b; ++ri) {
      const int member_id = ai * b + ri;
      ZooMember m;
      m.atlas = ai;
      m.roi = ri;
      m.voxel_ids = rois[static_cast<std::size_t>(ri)];

      ModelConfig mc = base;
      mc.head_seed = CounterRng(recipe.seed, "member_head",
                                static_cast<std::uint64_t>(member_id)).next_u64() | 1;
      EncodingModel model(mc, voxel_subset(voxels, m.voxel_ids));
      if (warm_ready) model.feature_cache() = warm;

      RecipeConfig r = recipe;
      r.mode = "naive";
      r.atlases = 1;
      r.rois_per_atlas = 1;
      r.seed = CounterRng(recipe.seed, "member_recipe",
                          static_cast<std::uint64_t>(member_id)).next_u64();

      std::filesystem::path hist;
      if (!history_dir.empty()) {
        char name[48];
        std::snprintf(name, sizeof(name), "member_a%02d_r%02d.jsonl", ai, ri);
        hist = history_dir / name;
      }
      TrainResult tr = run_training(model, ds, r, m.voxel_ids, nullptr, hist);
      m.params = model.snapshot();
      m.val_r = tr.final_val_r;
      warm = model.feature_cache();
      warm_ready = true;
      zoo.members.push_back(std::move(m));
    }
  }
  return zoo;
}

std::vector<double> ensemble_predict(const EnsembleModel& zoo, const Dataset& ds,
                                     const std::vector<int>& trials, const InputMask& mask,
                                     FeatureCache* warm) {
  if (zoo.members.empty()) throw ConfigError("ensemble_predict: empty zoo");
  const int n = zoo.voxels.n_voxels;
  std::vector<double> acc(trials.size() * static_cast<std::size_t>(n), 0.0);
  std::vector<int> cover(static_cast<std::size_t>(n), 0);

  for (const ZooMember& m : zoo.members) {
    EncodingModel model(zoo.base, voxel_subset(zoo.voxels, m.voxel_ids));
    if (warm) model.feature_cache() = *warm;
    model.restore(m.params);
    const bool cached = zoo.base.backbone_mode == "frozen";
    const std::vector<double> pred = model.predict(ds, trials, mask, cached);
    const int nm = static_cast<int>(m.voxel_ids.size());
    for (std::size_t i = 0; i < trials.size(); ++i) {
      for (int j = 0; j < nm; ++j) {
        acc[i * static_cast<std::size_t>(n) + m.voxel_ids[static_cast<std::size_t>(j)]] +=
            pred[i * static_cast<std::size_t>(nm) + static_cast<std::size_t>(j)];
      }
    }
    for (int j = 0; j < nm; ++j) cover[static_cast<std::size_t>(m.voxel_ids[static_cast<std::size_t>(j)])]++;
    if (warm) *warm = model.feature_cache();
  }

  for (int v = 0; v < n; ++v) {
    if (cover[static_cast<std::size_t>(v)] == 0) {
      throw ConfigError("ensemble_predict: voxel " + std::to_string(v) + " is not covered");
    }
  }
  for (std::size_t i = 0; i < trials.size(); ++i) {
    for (int v = 0; v < n; ++v) {
      acc[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(v)] /=
          cover[static_cast<std::size_t>(v)];
    }
  }
  return acc;
}

double ensemble_val_r(const EnsembleModel& zoo, const Dataset& ds, const InputMask& mask,
                      FeatureCache* warm) {
  const std::vector<int> val_trials = ds.trials_in_split(kSplitVal);
  if (val_trials.size() < 2) {
    throw ConfigError("eval: need at least 2 validation trials for a correlation");
  }
  const std::vector<double> pred = ensemble_predict(zoo, ds, val_trials, mask, warm);
  const int n = zoo.voxels.n_voxels;
  const int b = static_cast<int>(val_trials.size());
  std::vector<double> px(static_cast<std::size_t>(b)), tx(static_cast<std::size_t>(b));
  double acc = 0.0;
  for (int v = 0; v < n; ++v) {
    for (int i = 0; i < b; ++i) {
      px[static_cast<std::size_t>(i)] = pred[static_cast<std::size_t>(i) * n + v];
      tx[static_cast<std::size_t>(i)] = ds.response(val_trials[static_cast<std::size_t>(i)], v);
    }
    acc += pearson_flagged(px, tx).r;
  }
  return acc / n;
}

void EnsembleModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["format"] = "memenc-zoo-v1";
  j["n_voxels"] = voxels.n_voxels;
  nlohmann::json ja = nlohmann::json::array();
  for (const Atlas& at : atlases) {
    ja.push_back({{"n_rois", at.n_rois}, {"seed_used", at.seed_used}, {"label", at.label}});
  }
  j["atlases"] = std::move(ja);
  nlohmann::json jm = nlohmann::json::array();
  for (std::size_t i = 0; i < members.size(); ++i) {
    const ZooMember& m = members[i];
    char name[48];
    std::snprintf(name, sizeof(name), "member_%03d.bin", static_cast<int>(i));
    write_f64_blob(dir / name, m.params);
    jm.push_back({{"atlas", m.atlas},
                  {"roi", m.roi},
                  {"val_r", m.val_r},
                  {"voxels", m.voxel_ids},
                  {"params", name}});
  }
  j["members"] = std::move(jm);
  write_text_file(dir / "zoo.json", j.dump(2) + "\n");
}

EnsembleModel EnsembleModel::load(const ModelConfig& base, const VoxelSet& voxels,
                                  const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(dir / "zoo.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("zoo.json is not valid JSON: " + std::string(e.what()));
  }
  if (j.value("format", "") != "memenc-zoo-v1") {
    throw IoError("zoo.json: unknown format marker");
  }
  if (j.at("n_voxels").get<int>() != voxels.n_voxels) {
    throw ConfigError("zoo.json voxel count does not match the provided voxel set");
  }

  EnsembleModel zoo;
  zoo.base = base;
  zoo.voxels = voxels;
  for (const auto& ja : j.at("atlases")) {
    Atlas at;
    at.n_rois = ja.at("n_rois").get<int>();
    at.seed_used = ja.at("seed_used").get<std::uint64_t>();
    at.label = ja.at("label").get<std::vector<int>>();
    zoo.atlases.push_back(std::move(at));
  }
  for (const auto& jm : j.at("members")) {
    ZooMember m;
    m.atlas = jm.at("atlas").get<int>();
    m.roi = jm.at("roi").get<int>();
    m.val_r = jm.at("val_r").get<double>();
    m.voxel_ids = jm.at("voxels").get<std::vector<int>>();
    m.params = read_f64_blob(dir / jm.at("params").get<std::string>());
    zoo.members.push_back(std::move(m));
  }
  return zoo;
}

TrainResult distill(EncodingModel& student, const Dataset& ds,
                    const std::vector<double>& teacher_train_pred, const RecipeConfig& recipe,
                    const std::filesystem::path& history_file) {
  const std::vector<int> train_trials = ds.trials_in_split(kSplitTrain);
  if (student.voxels().n_voxels != ds.n_voxels()) {
    throw ConfigError("distill: the student must cover the dataset voxel set");
  }
  if (teacher_train_pred.size() !=
      train_trials.size() * static_cast<std::size_t>(student.voxels().n_voxels)) {
    throw ConfigError("distill: teacher predictions do not match train trials x voxels");
  }
  return run_training(student, ds, recipe, {}, &teacher_train_pred, history_file);
}

}  // namespace memenc
