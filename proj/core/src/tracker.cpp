#include "memenc/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"
#include "memenc/hashing.hpp"
#include "memenc/metrics.hpp"
#include "memenc/svg.hpp"

namespace memenc {

namespace {

// Least-squares A*exp(-beta*i) + C for a fixed beta; returns SSE.
double exp_fit_sse(const std::vector<double>& y, double beta, std::vector<double>* fitted) {
  const int n = static_cast<int>(y.size());
  double se = 0, see = 0, sy = 0, sey = 0;
  std::vector<double> e(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    e[static_cast<std::size_t>(i)] = std::exp(-beta * i);
    se += e[static_cast<std::size_t>(i)];
    see += e[static_cast<std::size_t>(i)] * e[static_cast<std::size_t>(i)];
    sy += y[static_cast<std::size_t>(i)];
    sey += e[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
  }
  const double det = see * n - se * se;
  double a = 0.0, c = sy / n;
  if (std::fabs(det) > 1e-12) {
    a = (sey * n - se * sy) / det;
    c = (see * sy - se * sey) / det;
  }
  double sse = 0;
  for (int i = 0; i < n; ++i) {
    const double f = a * e[static_cast<std::size_t>(i)] + c;
    if (fitted) (*fitted)[static_cast<std::size_t>(i)] = f;
    const double d = y[static_cast<std::size_t>(i)] - f;
    sse += d * d;
  }
  return sse;
}

std::vector<double> detrend_exp(const std::vector<double>& y) {
  const int n = static_cast<int>(y.size());
  double best_beta = 0.0, best_sse = std::numeric_limits<double>::infinity();
  for (double b = 0.0; b <= 1.2 + 1e-9; b += 0.02) {
    const double sse = exp_fit_sse(y, b, nullptr);
    if (sse < best_sse) {
      best_sse = sse;
      best_beta = b;
    }
  }
  // ternary refinement around the winning grid cell
  double lo = std::max(0.0, best_beta - 0.02), hi = best_beta + 0.02;
  for (int it = 0; it < 60; ++it) {
    const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if (exp_fit_sse(y, m1, nullptr) < exp_fit_sse(y, m2, nullptr)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  const double beta = 0.5 * (lo + hi);
  std::vector<double> fitted(static_cast<std::size_t>(n));
  if (exp_fit_sse(y, beta, &fitted) > best_sse) exp_fit_sse(y, best_beta, &fitted);
  std::vector<double> z(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] - fitted[static_cast<std::size_t>(i)];
  return z;
}

}  // namespace

PeriodReport detect_period(const std::vector<double>& curve, int lag_min, double threshold) {
  if (lag_min < 0) throw ConfigError("detect_period: lag_min must be >= 0");
  const int usable = static_cast<int>(curve.size()) - lag_min;
  if (usable < 9) {
    throw PreconditionError("detect_period: curve too short after cutting the first " +
                            std::to_string(lag_min) + " lags");
  }
  std::vector<double> y(curve.begin() + lag_min, curve.end());

  double total_ss = 0, mean = 0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  for (double v : y) total_ss += (v - mean) * (v - mean);

  const std::vector<double> z = detrend_exp(y);
  double res_ss = 0;
  for (double v : z) res_ss += v * v;

  PeriodReport out;
  if (total_ss < 1e-30 || res_ss <= 1e-8 * total_ss) {
    return out;  // the decay fit explains the curve; nothing periodic left
  }

  const int n = static_cast<int>(z.size());
  const double var = res_ss / n;
  const int kmax = n / 3;  // every candidate sees at least three full cycles
  double best = -std::numeric_limits<double>::infinity();
  int best_k = 0;
  for (int k = 2; k <= kmax; ++k) {
    double acc = 0;
    for (int i = k; i < n; ++i) {
      acc += z[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i - k)];
    }
    const double ac = acc / (n - k) / var;  // unbiased normalization
    if (ac > best) {
      best = ac;
      best_k = k;
    }
  }
  out.period = best_k;
  out.strength = best;
  out.found = best >= threshold;
  return out;
}

double calibrate_threshold(int t_mem, int n_null, double alpha, std::uint64_t seed, int lag_min) {
  if (n_null < 20) throw ConfigError("calibrate_threshold: need >= 20 null curves");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("calibrate_threshold: alpha in (0,1)");
  std::vector<double> strengths;
  strengths.reserve(static_cast<std::size_t>(n_null));
  for (int i = 0; i < n_null; ++i) {
    CounterRng rng(seed, "calib", static_cast<std::uint64_t>(i));
    const double amp = rng.uniform(0.0, 0.6);
    const double beta = rng.uniform(0.05, 0.5);
    const double sigma = rng.uniform(0.02, 0.1);
    std::vector<double> curve(static_cast<std::size_t>(t_mem));
    for (int l = 0; l < t_mem; ++l) {
      curve[static_cast<std::size_t>(l)] = amp * std::exp(-beta * l) + sigma * rng.gaussian();
    }
    strengths.push_back(detect_period(curve, lag_min, 1e9).strength);
  }
  std::sort(strengths.begin(), strengths.end());
  const int rank = std::min(n_null - 1, static_cast<int>(std::ceil((1.0 - alpha) * n_null)) - 1);
  return strengths[static_cast<std::size_t>(std::max(0, rank))];
}

void TrackerConfig::validate() const {
  if (depth < 1 || width < 1 || attn_heads < 1 || mlp_hidden < 1 || d_fuse < 1) {
    throw ConfigError("tracker: architecture fields must be positive");
  }
  if (width % attn_heads != 0) throw ConfigError("tracker: width must divide by attn_heads");
  if (steps < 1 || batch < 1 || eval_every < 1) {
    throw ConfigError("tracker: steps, batch and eval_every must be positive");
  }
  if (!(lr > 0.0)) throw ConfigError("tracker: lr must be positive");
  if (jobs < 1) throw ConfigError("tracker: jobs must be >= 1");
  if (lag_min < 0) throw ConfigError("tracker: lag_min must be >= 0");
  if (!(period_threshold > 0.0)) throw ConfigError("tracker: period_threshold must be positive");
}

ModelConfig TrackerConfig::model_for(const Dataset& ds) const {
  ModelConfig mc;
  mc.backbone.image_size = ds.spec.image_size;
  mc.backbone.depth = depth;
  mc.backbone.width = width;
  mc.backbone.heads = attn_heads;
  mc.backbone.mlp_hidden = mlp_hidden;
  for (int i = 1; i <= 4; ++i) {
    mc.backbone.tap_layers[static_cast<std::size_t>(i - 1)] = std::max(1, depth * i / 4);
  }
  mc.backbone.adaln_enabled = false;  // every condition slot is masked anyway
  mc.backbone.n_subjects = ds.spec.n_subjects;
  mc.heads.d_fuse = d_fuse;
  mc.memory.t_mem = ds.spec.t_mem;
  mc.memory_enabled = false;  // single-lag input flows through the current-frame path
  mc.backbone_mode = "frozen";
  mc.seed = seed;
  mc.validate();
  return mc;
}

std::vector<double> LagSweepResult::roi_curve(int roi) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(t_mem));
  for (const LagResult& lr : per_lag) {
    if (lr.lag == kRandLag) continue;
    if (roi < 0 || roi >= static_cast<int>(lr.roi_mean.size())) {
      throw ConfigError("roi_curve: roi id out of range");
    }
    out.push_back(lr.roi_mean[static_cast<std::size_t>(roi)]);
  }
  return out;
}

std::vector<double> LagSweepResult::mean_curve() const {
  std::vector<double> out;
  for (const LagResult& lr : per_lag) {
    if (lr.lag != kRandLag) out.push_back(lr.mean_r);
  }
  return out;
}

const LagResult* LagSweepResult::control() const {
  for (const LagResult& lr : per_lag) {
    if (lr.lag == kRandLag) return &lr;
  }
  return nullptr;
}

namespace {

LagResult run_lag_model(const Dataset& ds, const TrackerConfig& cfg, const ModelConfig& mc,
                        int lag, const FeatureCache& warm) {
  InputMask mask;
  if (lag == kRandLag) {
    mask.frames = InputMask::Frames::ShuffledTime;
    mask.shuffle_seed = cfg.seed + 17;
  } else {
    mask.frames = InputMask::Frames::SingleLag;
    mask.lag = lag;
  }

  RecipeConfig r;
  r.mode = "naive";
  r.steps = cfg.steps;
  r.lr = cfg.lr;
  r.batch = cfg.batch;
  r.lambda_ent = cfg.lambda_ent;
  r.ent_schedule = "early";
  r.input_mask = mask;
  r.soup_k = 1;  // restricted tracker model: best checkpoint, no soup
  r.eval_every = cfg.eval_every;
  r.seed = cfg.seed;

  EncodingModel model(mc, ds.voxels);
  model.feature_cache() = warm;
  train_one(model, ds, r);

  const std::vector<int> test_trials = ds.trials_in_split(kSplitTest);
  if (test_trials.size() < 2) throw ConfigError("lag_sweep: test split too small");
  const std::vector<double> pred = model.predict(ds, test_trials, mask, true);

  const int n = ds.n_voxels();
  const int b = static_cast<int>(test_trials.size());
  LagResult out;
  out.lag = lag;
  out.voxel_r.resize(static_cast<std::size_t>(n));
  std::vector<double> px(static_cast<std::size_t>(b)), tx(static_cast<std::size_t>(b));
  for (int v = 0; v < n; ++v) {
    for (int i = 0; i < b; ++i) {
      px[static_cast<std::size_t>(i)] = pred[static_cast<std::size_t>(i) * n + v];
      tx[static_cast<std::size_t>(i)] = ds.response(test_trials[static_cast<std::size_t>(i)], v);
    }
    out.voxel_r[static_cast<std::size_t>(v)] = pearson_flagged(px, tx).r;
  }

  const int n_rois = ds.voxels.n_rois();
  out.roi_mean.assign(static_cast<std::size_t>(n_rois), 0.0);
  std::vector<int> cnt(static_cast<std::size_t>(n_rois), 0);
  double acc = 0;
  for (int v = 0; v < n; ++v) {
    const int roi = ds.voxels.roi_label[static_cast<std::size_t>(v)];
    out.roi_mean[static_cast<std::size_t>(roi)] += out.voxel_r[static_cast<std::size_t>(v)];
    cnt[static_cast<std::size_t>(roi)]++;
    acc += out.voxel_r[static_cast<std::size_t>(v)];
  }
  for (int roi = 0; roi < n_rois; ++roi) {
    out.roi_mean[static_cast<std::size_t>(roi)] /= std::max(1, cnt[static_cast<std::size_t>(roi)]);
  }
  out.mean_r = acc / n;

  Sha256 h;
  h.update("memenc-lag-model\n");
  h.update(mask.describe());
  h.update_f64({cfg.lr, cfg.lambda_ent});
  h.update_f64({static_cast<double>(cfg.steps), static_cast<double>(cfg.batch),
                static_cast<double>(cfg.seed), static_cast<double>(cfg.width),
                static_cast<double>(cfg.depth)});
  out.config_hash = h.hex();
  return out;
}

void write_lag_csv(const Dataset& ds, const LagSweepResult& sweep, const LagResult& lr,
                   const std::filesystem::path& dir) {
  char name[32];
  if (lr.lag == kRandLag) {
    std::snprintf(name, sizeof(name), "lag_rand.csv");
  } else {
    std::snprintf(name, sizeof(name), "lag_%02d.csv", lr.lag);
  }
  std::string csv = "voxel,roi,roi_name,r\n";
  for (int v = 0; v < ds.n_voxels(); ++v) {
    const int roi = ds.voxels.roi_label[static_cast<std::size_t>(v)];
    csv += std::to_string(v) + "," + std::to_string(roi) + "," +
           sweep.roi_names[static_cast<std::size_t>(roi)] + "," +
           format_double(lr.voxel_r[static_cast<std::size_t>(v)]) + "\n";
  }
  write_text_file(dir / name, csv);
}

}  // namespace

LagSweepResult lag_sweep(const Dataset& ds, const TrackerConfig& cfg,
                         const std::filesystem::path& out_dir) {
  cfg.validate();
  ds.spec.validate();
  const ModelConfig mc = cfg.model_for(ds);
  const int t_mem = ds.spec.t_mem;

  LagSweepResult sweep;
  sweep.t_mem = t_mem;
  sweep.roi_of_voxel = ds.voxels.roi_label;
  sweep.roi_names.resize(static_cast<std::size_t>(ds.voxels.n_rois()));
  for (int v = 0; v < ds.n_voxels(); ++v) {
    sweep.roi_names[static_cast<std::size_t>(ds.voxels.roi_label[static_cast<std::size_t>(v)])] =
        archetype_name(ds.gt[static_cast<std::size_t>(v)].archetype);
  }

  // One warm cache for the whole sweep: every lag model shares the same
  // frozen backbone weights, so feature entries transfer as-is.
  FeatureCache warm(FeatureCache::Mode::Epoch);
  {
    EncodingModel probe(mc, ds.voxels);
    FeatureCache& pc = probe.feature_cache();
    pc.refresh(probe.backbone());
    for (const Tensor& img : ds.images) pc.entry_for(img, probe.backbone());
    pc.entry_for(Tensor::zeros({ds.spec.image_size, ds.spec.image_size, 3}), probe.backbone());
    warm = pc;
  }

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::vector<int> lags;
  for (int n = 0; n < t_mem; ++n) lags.push_back(n);
  if (cfg.rand_control) lags.push_back(kRandLag);

  std::vector<LagResult> results(lags.size());
  std::vector<char> done(lags.size(), 0);
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr first_error;

  auto worker = [&]() {
    FeatureCache local = warm;  // private copy; entry lookups mutate counters
    for (;;) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (first_error || next >= lags.size()) return;
        idx = next++;
      }
      try {
        LagResult lr = run_lag_model(ds, cfg, mc, lags[idx], local);
        std::lock_guard<std::mutex> lock(mu);
        results[idx] = std::move(lr);
        done[idx] = 1;
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(lags.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (std::size_t i = 0; i < lags.size(); ++i) {
    if (done[static_cast<std::size_t>(i)]) {
      sweep.per_lag.push_back(std::move(results[i]));
      if (!out_dir.empty()) write_lag_csv(ds, sweep, sweep.per_lag.back(), out_dir);
    }
  }
  std::stable_sort(sweep.per_lag.begin(), sweep.per_lag.end(),
                   [](const LagResult& a, const LagResult& b) {
                     const int ka = a.lag == kRandLag ? 1 << 20 : a.lag;
                     const int kb = b.lag == kRandLag ? 1 << 20 : b.lag;
                     return ka < kb;
                   });

  if (first_error) {
    if (!out_dir.empty()) write_sweep_csv(sweep, out_dir / "curve_partial.csv");
    std::rethrow_exception(first_error);
  }
  return sweep;
}

void write_sweep_csv(const LagSweepResult& sweep, const std::filesystem::path& path) {
  std::string csv = "lag,roi,roi_name,mean_r,n_voxels\n";
  std::vector<int> counts(sweep.roi_names.size(), 0);
  for (int label : sweep.roi_of_voxel) counts[static_cast<std::size_t>(label)]++;
  for (const LagResult& lr : sweep.per_lag) {
    if (lr.lag == kRandLag) continue;  // control reported separately
    for (std::size_t roi = 0; roi < sweep.roi_names.size(); ++roi) {
      csv += std::to_string(lr.lag) + "," + std::to_string(roi) + "," + sweep.roi_names[roi] +
             "," + format_double(lr.roi_mean[roi]) + "," + std::to_string(counts[roi]) + "\n";
    }
  }
  write_text_file(path, csv);
}

void write_period_report(const LagSweepResult& sweep, const TrackerConfig& cfg,
                         const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "memenc-period-report-v1";
  j["lag_min"] = cfg.lag_min;
  j["threshold"] = cfg.period_threshold;
  j["t_mem"] = sweep.t_mem;

  auto report_of = [&](const std::vector<double>& curve) {
    const PeriodReport pr = detect_period(curve, cfg.lag_min, cfg.period_threshold);
    nlohmann::json out;
    out["found"] = pr.found;
    out["period"] = pr.found ? nlohmann::json(pr.period) : nlohmann::json(nullptr);
    out["candidate_period"] = pr.period;
    out["strength"] = pr.strength;
    return out;
  };

  nlohmann::json rois = nlohmann::json::array();
  bool any_found = false;
  double best_strength = -1.0;
  int best_period = 0;
  for (std::size_t roi = 0; roi < sweep.roi_names.size(); ++roi) {
    nlohmann::json r = report_of(sweep.roi_curve(static_cast<int>(roi)));
    r["roi"] = roi;
    r["roi_name"] = sweep.roi_names[roi];
    if (r["found"].get<bool>()) {
      any_found = true;
      if (r["strength"].get<double>() > best_strength) {
        best_strength = r["strength"].get<double>();
        best_period = r["candidate_period"].get<int>();
      }
    }
    rois.push_back(std::move(r));
  }
  j["rois"] = std::move(rois);
  j["mean_curve"] = report_of(sweep.mean_curve());
  j["verdict"] = {{"found", any_found},
                  {"period", any_found ? nlohmann::json(best_period) : nlohmann::json(nullptr)},
                  {"strength", any_found ? best_strength : 0.0}};
  if (const LagResult* c = sweep.control()) {
    j["rand_control_mean_r"] = c->mean_r;
  }
  write_text_file(path, j.dump(2) + "\n");
}

void write_sweep_svg(const LagSweepResult& sweep, const TrackerConfig& cfg,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<double> lags;
  for (const LagResult& lr : sweep.per_lag) {
    if (lr.lag != kRandLag) lags.push_back(lr.lag);
  }

  SvgChart curves(760, 420, "Prediction score vs lag");
  curves.set_axis_labels("index of previous image (lag)", "mean test r");
  for (std::size_t roi = 0; roi < sweep.roi_names.size(); ++roi) {
    curves.add_line(lags, sweep.roi_curve(static_cast<int>(roi)), sweep.roi_names[roi]);
  }
  curves.add_line(lags, sweep.mean_curve(), "all voxels");
  for (std::size_t roi = 0; roi < sweep.roi_names.size(); ++roi) {
    const PeriodReport pr =
        detect_period(sweep.roi_curve(static_cast<int>(roi)), cfg.lag_min, cfg.period_threshold);
    if (pr.found) {
      curves.add_vline(pr.period, sweep.roi_names[roi] + " period " + std::to_string(pr.period));
    }
  }
  curves.write(dir / "lag_curves.svg");

  SvgChart strength(560, 360, "Autocorrelation peak strength by ROI");
  strength.set_axis_labels("", "peak strength");
  std::vector<std::string> labels;
  std::vector<double> values;
  for (std::size_t roi = 0; roi < sweep.roi_names.size(); ++roi) {
    labels.push_back(sweep.roi_names[roi]);
    values.push_back(
        detect_period(sweep.roi_curve(static_cast<int>(roi)), cfg.lag_min, 1e9).strength);
  }
  strength.add_bars(labels, values, "strength");
  strength.write(dir / "period_strength.svg");
}

}  // namespace memenc
