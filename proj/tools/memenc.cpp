// memenc: batch driver for the encoding pipeline. Subcommands cover dataset
// generation, training (naive or ensemble), distillation into a single
// student, the per-lag tracker sweep, run reporting, and threshold
// calibration. Every run lands in a directory named after the resolved
// config hash and carries the resolved config.json, so a run directory is
// reproducible from its own contents.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"
#include "memenc/hashing.hpp"
#include "memenc/metrics.hpp"
#include "memenc/model.hpp"
#include "memenc/runconfig.hpp"
#include "memenc/svg.hpp"
#include "memenc/synthgen.hpp"
#include "memenc/tracker.hpp"
#include "memenc/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace memenc {
namespace {

std::string short_hash(const std::string& full) { return full.substr(0, 12); }

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  return h.hex();
}

// Content fingerprint of a saved dataset: manifest plus every blob, hashed
// in a fixed order. The manifest itself stores no content hashes (the seed
// pins the bytes), so this is computed on demand.
std::string dataset_hash(const fs::path& dir) {
  Sha256 h;
  for (const char* name :
       {"manifest.json", "images.bin", "responses.bin", "clean.bin", "conditions.bin",
        "coords.bin"}) {
    const fs::path p = dir / name;
    h.update(name);
    h.update(file_sha256(p));
  }
  return h.hex();
}

fs::path resolve_dataset_dir(const std::string& arg) {
  const fs::path p(arg);
  if (fs::exists(p / "manifest.json")) return p;
  if (fs::exists(p / "dataset" / "manifest.json")) return p / "dataset";
  throw IoError("no dataset manifest under " + p.string());
}

// Refuses to reuse a finished run directory unless forced; stamps the
// resolved config on creation.
fs::path prepare_run_dir(const RunConfig& rc, const std::string& kind, bool force,
                         std::string* hash_out) {
  const std::string hash = config_hash(rc);
  const fs::path dir = fs::path(rc.output_dir) / (kind + "-" + short_hash(hash));
  if (fs::exists(dir / "config.json") && !force)
    throw ConfigError("run directory " + dir.string() + " already exists (use --force to redo)");
  fs::create_directories(dir);
  write_resolved(rc, dir / "config.json");
  if (hash_out) *hash_out = hash;
  return dir;
}

void check_dataset_matches(const Dataset& ds, const RunConfig& rc) {
  const GeneratorSpec& a = ds.spec;
  const GeneratorSpec& b = rc.generator;
  if (a.image_size != b.image_size || a.n_voxels != b.n_voxels || a.t_mem != b.t_mem ||
      a.n_subjects != b.n_subjects)
    throw ConfigError(
        "dataset does not match the config's generator section "
        "(image_size/n_voxels/t_mem/n_subjects)");
}

std::vector<std::string> roi_names_of(const Dataset& ds) {
  std::vector<std::string> names(static_cast<std::size_t>(ds.voxels.n_rois()));
  for (int v = 0; v < ds.n_voxels(); ++v)
    names[static_cast<std::size_t>(ds.voxels.roi_label[static_cast<std::size_t>(v)])] =
        archetype_name(ds.gt[static_cast<std::size_t>(v)].archetype);
  return names;
}

// Scores predictions over one split: per-voxel r, split-half noise ceiling
// from the repeat pairs that fall inside the split, and the repetition
// averaged challenge score.
ScoreTable score_split(const Dataset& ds, const std::vector<int>& trials,
                       const std::vector<double>& pred, const MetricsConfig& metrics,
                       const std::string& model_id, const InputMask& mask,
                       const std::string& cfg_hash) {
  const int n = ds.n_voxels();
  const int rows = static_cast<int>(trials.size());
  if (pred.size() != static_cast<std::size_t>(rows) * n)
    throw ShapeError("score_split: prediction size mismatch");

  std::vector<double> truth(pred.size());
  for (int r = 0; r < rows; ++r)
    for (int v = 0; v < n; ++v)
      truth[static_cast<std::size_t>(r) * n + v] = ds.response(trials[static_cast<std::size_t>(r)], v);

  std::map<int, int> row_of;
  for (int r = 0; r < rows; ++r) row_of[trials[static_cast<std::size_t>(r)]] = r;
  std::vector<std::vector<int>> groups;
  for (const auto& [first, second] : ds.repeat_pairs) {
    auto ia = row_of.find(first), ib = row_of.find(second);
    if (ia != row_of.end() && ib != row_of.end()) groups.push_back({ia->second, ib->second});
  }

  NoiseCeiling ncr;
  if (!groups.empty()) {
    std::vector<std::vector<std::vector<double>>> obs(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
      auto& per_voxel = obs[static_cast<std::size_t>(v)];
      per_voxel.reserve(groups.size());
      for (const auto& g : groups)
        per_voxel.push_back({truth[static_cast<std::size_t>(g[0]) * n + v],
                             truth[static_cast<std::size_t>(g[1]) * n + v]});
    }
    ncr = noise_ceiling(obs, metrics.nc_splits, metrics.nc_seed, metrics.nc_min_groups);
  }

  ScoreTable t;
  t.r.resize(static_cast<std::size_t>(n));
  t.r2.resize(static_cast<std::size_t>(n));
  std::vector<double> xs(static_cast<std::size_t>(rows)), ys(static_cast<std::size_t>(rows));
  double acc = 0.0;
  for (int v = 0; v < n; ++v) {
    for (int r = 0; r < rows; ++r) {
      xs[static_cast<std::size_t>(r)] = pred[static_cast<std::size_t>(r) * n + v];
      ys[static_cast<std::size_t>(r)] = truth[static_cast<std::size_t>(r) * n + v];
    }
    const double r = pearson_flagged(xs, ys).r;
    t.r[static_cast<std::size_t>(v)] = r;
    t.r2[static_cast<std::size_t>(v)] = r * r;
    acc += r;
  }
  t.mean_r = n > 0 ? acc / n : 0.0;
  if (ncr.available) t.nc = ncr.nc;
  t.roi = ds.voxels.roi_label;
  t.roi_names = roi_names_of(ds);
  // Too few repeat groups for a stable ceiling leaves the normalization
  // undefined, so the challenge score drops to its single-trial fallback.
  if (!ncr.available) groups.clear();
  const ChallengeScore cs = challenge_score(pred, truth, n, groups, t.nc);
  t.challenge = cs.score;
  t.challenge_fallback = cs.fallback_single_trial;
  t.model_id = model_id;
  t.input_mask = mask.describe();
  t.lag = mask.frames == InputMask::Frames::SingleLag ? mask.lag : 0;
  t.config_hash = cfg_hash;
  return t;
}

void print_roi_table(const ScoreTable& t) {
  const int n_rois = static_cast<int>(t.roi_names.size());
  const auto rows = roi_aggregate(t.r, t.roi, n_rois);
  std::printf("  %-16s %5s %9s %9s\n", "roi", "n", "mean_r", "median_r");
  for (const auto& row : rows) {
    if (!row.available) continue;
    std::printf("  %-16s %5d %9.4f %9.4f\n",
                t.roi_names[static_cast<std::size_t>(row.roi)].c_str(), row.n, row.mean,
                row.median);
  }
}

struct TrainedArtifacts {
  std::string model_id;
  std::vector<double> test_pred;
};

TrainedArtifacts run_training_mode(const RunConfig& rc, const Dataset& ds, const fs::path& run) {
  const ModelConfig mc = rc.model_config();
  const std::vector<int> test = ds.trials_in_split(kSplitTest);
  TrainedArtifacts out;
  if (rc.recipe.mode == "naive") {
    EncodingModel model(mc, ds.voxels);
    const TrainResult tr = train_one(model, ds, rc.recipe, run / "history.jsonl");
    model.save(run / "model");
    std::printf("trained naive model: best val r %.4f over %zu eval points\n",
                tr.best_checkpoint_r, tr.history.size());
    out.test_pred = model.predict(ds, test, rc.recipe.input_mask);
    out.model_id = "naive";
  } else {
    const fs::path hist = run / "history";
    fs::create_directories(hist);
    EnsembleModel zoo = train_ensemble(mc, ds.voxels, ds, rc.recipe, hist);
    zoo.save(run / "zoo");
    std::printf("trained ensemble: %zu members across %zu atlases\n", zoo.members.size(),
                zoo.atlases.size());
    out.test_pred = ensemble_predict(zoo, ds, test, rc.recipe.input_mask);
    out.model_id = "ensemble-a" + std::to_string(rc.recipe.atlases) + "-b" +
                   std::to_string(rc.recipe.rois_per_atlas);
  }
  return out;
}

void write_scores(const RunConfig& rc, const Dataset& ds, const fs::path& run,
                  const std::string& model_id, const std::vector<double>& test_pred,
                  const std::string& hash) {
  const std::vector<int> test = ds.trials_in_split(kSplitTest);
  const ScoreTable t =
      score_split(ds, test, test_pred, rc.metrics, model_id, rc.recipe.input_mask, hash);
  t.write_csv(run / "scores.csv");
  t.write_json(run / "scores.json");
  std::printf("test mean r %.4f, challenge %.2f%s\n", t.mean_r, t.challenge,
              t.challenge_fallback ? " (single-trial fallback)" : "");
  print_roi_table(t);
}

int cmd_generate(RunConfig rc, bool force) {
  std::string hash;
  const fs::path run = prepare_run_dir(rc, "data", force, &hash);
  const Dataset ds = generate(rc.generator);
  const fs::path ddir = run / "dataset";
  fs::create_directories(ddir);
  ds.save(ddir);
  std::printf("dataset: %s\n", ddir.string().c_str());
  std::printf("trials %d, voxels %d, runs %d, subjects %d\n", ds.n_trials(), ds.n_voxels(),
              ds.spec.n_runs, ds.spec.n_subjects);
  std::printf("dataset hash %s\n", dataset_hash(ddir).c_str());
  std::printf("config hash %s\n", hash.c_str());
  return 0;
}

int cmd_train(RunConfig rc, const std::string& data, bool force) {
  const fs::path ddir = resolve_dataset_dir(data);
  const Dataset ds = Dataset::load(ddir);
  check_dataset_matches(ds, rc);
  std::string hash;
  const fs::path run = prepare_run_dir(rc, "train", force, &hash);
  const TrainedArtifacts art = run_training_mode(rc, ds, run);
  write_scores(rc, ds, run, art.model_id, art.test_pred, hash);
  std::printf("run: %s\n", run.string().c_str());
  return 0;
}

int cmd_distill(RunConfig rc, const std::string& data, const std::string& teacher_dir,
                bool force) {
  const fs::path ddir = resolve_dataset_dir(data);
  const Dataset ds = Dataset::load(ddir);
  check_dataset_matches(ds, rc);

  const fs::path tdir(teacher_dir);
  const RunConfig trc = load_run_config(tdir / "config.json");
  check_dataset_matches(ds, trc);
  const ModelConfig tmc = trc.model_config();
  const std::vector<int> train_trials = ds.trials_in_split(kSplitTrain);
  std::vector<double> teacher_pred;
  std::string teacher_kind;
  if (fs::exists(tdir / "zoo")) {
    const EnsembleModel zoo = EnsembleModel::load(tmc, ds.voxels, tdir / "zoo");
    teacher_pred = ensemble_predict(zoo, ds, train_trials, trc.recipe.input_mask);
    teacher_kind = "ensemble";
  } else if (fs::exists(tdir / "model")) {
    EncodingModel teacher(tmc, ds.voxels);
    teacher.load(tdir / "model");
    teacher_pred = teacher.predict(ds, train_trials, trc.recipe.input_mask);
    teacher_kind = "naive";
  } else {
    throw IoError("no model artifacts (model/ or zoo/) under " + tdir.string());
  }

  std::string hash;
  const fs::path run = prepare_run_dir(rc, "distill", force, &hash);
  EncodingModel student(rc.model_config(), ds.voxels);
  const TrainResult tr = distill(student, ds, teacher_pred, rc.recipe, run / "history.jsonl");
  student.save(run / "model");
  std::printf("distilled student: best val r %.4f\n", tr.best_checkpoint_r);

  json meta;
  meta["teacher_dir"] = tdir.string();
  meta["teacher_kind"] = teacher_kind;
  meta["teacher_config_hash"] = config_hash(trc);
  write_text_file(run / "distill.json", meta.dump(2) + "\n");

  const std::vector<int> test = ds.trials_in_split(kSplitTest);
  const std::vector<double> pred = student.predict(ds, test, rc.recipe.input_mask);
  write_scores(rc, ds, run, "distilled", pred, hash);
  std::printf("run: %s\n", run.string().c_str());
  return 0;
}

void print_period_rois(const json& rep);

int cmd_track(RunConfig rc, const std::string& data, bool force) {
  const fs::path ddir = resolve_dataset_dir(data);
  const Dataset ds = Dataset::load(ddir);
  check_dataset_matches(ds, rc);
  std::string hash;
  const fs::path run = prepare_run_dir(rc, "track", force, &hash);
  const LagSweepResult sweep = lag_sweep(ds, rc.tracker, run);
  write_sweep_csv(sweep, run / "curve.csv");
  write_period_report(sweep, rc.tracker, run / "period_report.json");
  write_sweep_svg(sweep, rc.tracker, run);

  const json rep = json::parse(read_text_file(run / "period_report.json"));
  std::printf("lag sweep over %d lags, %zu rois\n", sweep.t_mem, sweep.roi_names.size());
  print_period_rois(rep);
  std::printf("run: %s\n", run.string().c_str());
  return 0;
}

void print_period_rois(const json& rep) {
  for (const auto& roi : rep.at("rois")) {
    const std::string name = roi.at("roi_name").get<std::string>();
    if (roi.at("found").get<bool>())
      std::printf("  %-16s period %d (strength %.3f)\n", name.c_str(),
                  roi.at("period").get<int>(), roi.at("strength").get<double>());
    else
      std::printf("  %-16s none (best candidate %d, strength %.3f)\n", name.c_str(),
                  roi.at("candidate_period").get<int>(), roi.at("strength").get<double>());
  }
  const json& verdict = rep.at("verdict");
  if (verdict.at("found").get<bool>())
    std::printf("verdict: period %d (strength %.3f)\n", verdict.at("period").get<int>(),
                verdict.at("strength").get<double>());
  else
    std::printf("verdict: none\n");
  if (rep.contains("rand_control_mean_r"))
    std::printf("shuffled-time control mean r %.4f\n",
                rep.at("rand_control_mean_r").get<double>());
}

ScoreTable read_scores_csv(const fs::path& csv_path, const json& sj) {
  std::istringstream in(read_text_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty scores csv: " + csv_path.string());
  ScoreTable t;
  std::map<int, std::string> names;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(row, field, ',')) cols.push_back(field);
    if (cols.size() != 6) throw IoError("malformed scores csv row: " + line);
    const int roi = std::stoi(cols[1]);
    t.roi.push_back(roi);
    names[roi] = cols[2];
    t.r.push_back(std::stod(cols[3]));
    t.r2.push_back(std::stod(cols[4]));
    if (cols[5] != "NA") t.nc.push_back(std::stod(cols[5]));
  }
  int max_roi = 0;
  for (int r : t.roi) max_roi = std::max(max_roi, r);
  t.roi_names.resize(static_cast<std::size_t>(max_roi) + 1);
  for (const auto& [roi, name] : names) t.roi_names[static_cast<std::size_t>(roi)] = name;
  t.mean_r = sj.at("mean_r").get<double>();
  t.challenge = sj.at("challenge").get<double>();
  t.challenge_fallback = sj.at("challenge_fallback").get<bool>();
  t.model_id = sj.at("model_id").get<std::string>();
  t.input_mask = sj.at("input_mask").get<std::string>();
  t.config_hash = sj.at("config_hash").get<std::string>();
  return t;
}

void report_scores(const fs::path& run, bool svg) {
  const json sj = json::parse(read_text_file(run / "scores.json"));
  const ScoreTable t = read_scores_csv(run / "scores.csv", sj);
  std::printf("model %s  (mask: %s)\n", t.model_id.c_str(), t.input_mask.c_str());
  std::printf("test mean r %.4f, challenge %.2f%s, noise ceiling %s\n", t.mean_r, t.challenge,
              t.challenge_fallback ? " (single-trial fallback)" : "",
              t.nc.empty() ? "unavailable" : "available");
  print_roi_table(t);
  if (!svg) return;
  const auto rows = roi_aggregate(t.r, t.roi, static_cast<int>(t.roi_names.size()));
  std::vector<std::string> labels;
  std::vector<double> means;
  for (const auto& row : rows) {
    if (!row.available) continue;
    labels.push_back(t.roi_names[static_cast<std::size_t>(row.roi)]);
    means.push_back(row.mean);
  }
  SvgChart chart(640, 360, "test r by roi (" + t.model_id + ")");
  chart.set_axis_labels("roi", "mean r");
  chart.add_bars(labels, means, "mean r");
  fs::create_directories(run / "report");
  chart.write(run / "report" / "roi_mean_r.svg");
  std::printf("wrote %s\n", (run / "report" / "roi_mean_r.svg").string().c_str());
}

void report_track(const fs::path& run) {
  const json rep = json::parse(read_text_file(run / "period_report.json"));
  std::printf("lag sweep report (threshold %.3f, lag_min %d)\n",
              rep.at("threshold").get<double>(), rep.at("lag_min").get<int>());
  print_period_rois(rep);
  for (const char* f : {"lag_curves.svg", "period_strength.svg", "curve.csv"})
    if (fs::exists(run / f)) std::printf("artifact: %s\n", (run / f).string().c_str());
}

int cmd_report(const std::string& run_arg, bool svg) {
  const fs::path run(run_arg);
  if (!fs::exists(run / "config.json")) throw IoError("no config.json under " + run.string());
  bool printed = false;
  if (fs::exists(run / "scores.json")) {
    report_scores(run, svg);
    printed = true;
  }
  if (fs::exists(run / "period_report.json")) {
    report_track(run);
    printed = true;
  }
  if (fs::exists(run / "dataset" / "manifest.json")) {
    const json m = json::parse(read_text_file(run / "dataset" / "manifest.json"));
    std::printf("dataset: %zu trials, %d voxels\n", m.at("image_id").size(),
                m.at("spec").at("n_voxels").get<int>());
    std::printf("dataset hash %s\n", dataset_hash(run / "dataset").c_str());
    printed = true;
  }
  if (!printed) throw IoError("nothing to report under " + run.string());
  return 0;
}

int cmd_calibrate(const RunConfig& rc, int n_null, double alpha) {
  const double thr = calibrate_threshold(rc.generator.t_mem, n_null, alpha, rc.tracker.seed,
                                         rc.tracker.lag_min);
  std::printf("calibrated threshold %s (t_mem %d, n_null %d, alpha %g)\n",
              format_double(thr).c_str(), rc.generator.t_mem, n_null, alpha);
  std::printf("configured tracker threshold %s\n",
              format_double(rc.tracker.period_threshold).c_str());
  return 0;
}

struct CliOptions {
  std::string config, data, out, mask, recipe, teacher, run;
  std::uint64_t seed = 0;
  int steps = 0, jobs = 0, n_null = 200;
  double alpha = 0.02;
  bool force = false, svg = false;
};

bool option_given(const CLI::App* cmd, const std::string& name) {
  const CLI::Option* opt = cmd->get_option_no_throw(name);
  return opt && opt->count() > 0;
}

RunConfig load_with_overrides(const CliOptions& o, const CLI::App* cmd) {
  RunConfig rc = load_run_config(o.config);
  if (option_given(cmd, "--seed")) override_seed(rc, o.seed);
  if (option_given(cmd, "--out")) rc.output_dir = o.out;
  if (option_given(cmd, "--mask")) rc.recipe.input_mask = parse_mask(o.mask);
  if (option_given(cmd, "--recipe")) {
    if (o.recipe != "naive" && o.recipe != "ensemble")
      throw ConfigError("--recipe must be naive or ensemble");
    rc.recipe.mode = o.recipe;
  }
  if (option_given(cmd, "--steps")) {
    if (o.steps < 1) throw ConfigError("--steps must be >= 1");
    rc.recipe.steps = o.steps;
    rc.tracker.steps = o.steps;
  }
  if (option_given(cmd, "--jobs")) {
    if (o.jobs < 1) throw ConfigError("--jobs must be >= 1");
    rc.tracker.jobs = o.jobs;
  }
  rc.validate();
  return rc;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"memory encoding model pipeline"};
  app.require_subcommand(1);
  CliOptions o;

  auto add_common = [&](CLI::App* cmd, bool needs_data) {
    cmd->add_option("--config", o.config, "run config json")->required();
    cmd->add_option("--out", o.out, "output root (overrides output_dir)");
    cmd->add_option("--seed", o.seed, "master seed override");
    cmd->add_flag("--force", o.force, "redo an existing run directory");
    if (needs_data)
      cmd->add_option("--data", o.data, "dataset dir (or a generate run dir)")->required();
  };

  CLI::App* cgen = app.add_subcommand("generate", "synthesize a dataset");
  add_common(cgen, false);

  CLI::App* ctrain = app.add_subcommand("train", "train a naive model or an ensemble");
  add_common(ctrain, true);
  ctrain->add_option("--mask", o.mask, "input mask, e.g. frames=current,condM");
  ctrain->add_option("--recipe", o.recipe, "naive or ensemble (overrides config)");
  ctrain->add_option("--steps", o.steps, "training steps override");

  CLI::App* cdist = app.add_subcommand("distill", "distill a trained run into one student");
  add_common(cdist, true);
  cdist->add_option("--teacher", o.teacher, "teacher run directory")->required();
  cdist->add_option("--steps", o.steps, "training steps override");

  CLI::App* ctrack = app.add_subcommand("track", "per-lag information tracking sweep");
  add_common(ctrack, true);
  ctrack->add_option("--jobs", o.jobs, "worker threads for the sweep");
  ctrack->add_option("--steps", o.steps, "per-lag training steps override");

  CLI::App* crep = app.add_subcommand("report", "summarize a finished run directory");
  crep->add_option("--run", o.run, "run directory")->required();
  crep->add_flag("--svg", o.svg, "also write report charts");

  CLI::App* ccal = app.add_subcommand("calibrate", "monte-carlo period threshold");
  ccal->add_option("--config", o.config, "run config json")->required();
  ccal->add_option("--n", o.n_null, "null curves to draw");
  ccal->add_option("--alpha", o.alpha, "target false-positive rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (cgen->parsed()) return cmd_generate(load_with_overrides(o, cgen), o.force);
  if (ctrain->parsed()) return cmd_train(load_with_overrides(o, ctrain), o.data, o.force);
  if (cdist->parsed())
    return cmd_distill(load_with_overrides(o, cdist), o.data, o.teacher, o.force);
  if (ctrack->parsed()) return cmd_track(load_with_overrides(o, ctrack), o.data, o.force);
  if (crep->parsed()) return cmd_report(o.run, o.svg);
  if (ccal->parsed()) return cmd_calibrate(load_run_config(o.config), o.n_null, o.alpha);
  return 2;
}

}  // namespace
}  // namespace memenc

int main(int argc, char** argv) {
  try {
    return memenc::dispatch(argc, argv);
  } catch (const memenc::ConfigError& e) {
    std::fprintf(stderr, "memenc: config error: %s\n", e.what());
    return 2;
  } catch (const memenc::LookupError& e) {
    std::fprintf(stderr, "memenc: lookup error: %s\n", e.what());
    return 2;
  } catch (const memenc::IoError& e) {
    std::fprintf(stderr, "memenc: io error: %s\n", e.what());
    return 2;
  } catch (const memenc::NumericError& e) {
    std::fprintf(stderr, "memenc: numeric error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "memenc: error: %s\n", e.what());
    return 4;
  }
}
