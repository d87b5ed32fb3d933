#include "memenc/runconfig.hpp"

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"
#include "memenc/hashing.hpp"

namespace memenc {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: section '" + where + "' must be an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("config: unknown key '" + where + "." + item.key() + "'");
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value type for '") + key + "'");
  }
}

InputMask mask_from_json(const json& j, const std::string& where) {
  check_keys(j, {"frames", "lag", "condM", "condB", "condT", "shuffle_seed"}, where);
  InputMask m;
  const std::string frames = get_or<std::string>(j, "frames", "all");
  if (frames == "all") {
    m.frames = InputMask::Frames::All;
  } else if (frames == "current") {
    m.frames = InputMask::Frames::CurrentOnly;
  } else if (frames == "lag") {
    m.frames = InputMask::Frames::SingleLag;
  } else if (frames == "shuffled") {
    m.frames = InputMask::Frames::ShuffledTime;
  } else {
    throw ConfigError("config: unknown frames mode '" + frames + "' (all|current|lag|shuffled)");
  }
  m.lag = get_or<int>(j, "lag", 0);
  m.condM = get_or<bool>(j, "condM", false);
  m.condB = get_or<bool>(j, "condB", false);
  m.condT = get_or<bool>(j, "condT", false);
  m.shuffle_seed = get_or<std::uint64_t>(j, "shuffle_seed", 99);
  return m;
}

json mask_to_json(const InputMask& m) {
  const char* frames = "all";
  switch (m.frames) {
    case InputMask::Frames::All: frames = "all"; break;
    case InputMask::Frames::CurrentOnly: frames = "current"; break;
    case InputMask::Frames::SingleLag: frames = "lag"; break;
    case InputMask::Frames::ShuffledTime: frames = "shuffled"; break;
  }
  return json{{"frames", frames}, {"lag", m.lag},           {"condM", m.condM},
              {"condB", m.condB}, {"condT", m.condT},       {"shuffle_seed", m.shuffle_seed}};
}

const char* kMixKeys[6] = {"retinotopic", "depth", "behavior", "time", "memory", "noise"};

}  // namespace

void MetricsConfig::validate() const {
  if (nc_splits < 1) throw ConfigError("metrics: nc_splits must be >= 1");
  if (nc_min_groups < 2) throw ConfigError("metrics: nc_min_groups must be >= 2");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.backbone = backbone;
  mc.backbone.image_size = generator.image_size;
  mc.backbone.n_subjects = generator.n_subjects;
  mc.heads = heads;
  mc.memory = memory;
  mc.memory.t_mem = generator.t_mem;
  mc.memory_enabled = memory_enabled;
  mc.backbone_mode = backbone_mode;
  mc.seed = seed;
  return mc;
}

void RunConfig::validate() const {
  generator.validate();
  recipe.validate();
  metrics.validate();
  tracker.validate();
  model_config().validate();
  if (output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
}

void override_seed(RunConfig& rc, std::uint64_t seed) {
  rc.seed = seed;
  rc.generator.seed = seed;
  rc.recipe.seed = seed;
  rc.tracker.seed = seed;
}

RunConfig parse_run_config(const json& j) {
  check_keys(j,
             {"generator", "backbone", "heads", "memory", "recipe", "metrics", "tracker",
              "output_dir", "seed"},
             "root");
  RunConfig rc;
  rc.seed = get_or<std::uint64_t>(j, "seed", 1);
  rc.output_dir = get_or<std::string>(j, "output_dir", "runs");

  if (j.contains("generator")) {
    const json& g = j.at("generator");
    check_keys(g,
               {"n_voxels", "n_runs", "trials_per_run", "n_subjects", "repeat_fraction",
                "noise_std", "mix", "replay_period", "replay_lags", "t_mem", "image_size",
                "seed", "backbone_seed"},
               "generator");
    GeneratorSpec& s = rc.generator;
    s.n_voxels = get_or<int>(g, "n_voxels", s.n_voxels);
    s.n_runs = get_or<int>(g, "n_runs", s.n_runs);
    s.trials_per_run = get_or<int>(g, "trials_per_run", s.trials_per_run);
    s.n_subjects = get_or<int>(g, "n_subjects", s.n_subjects);
    s.repeat_fraction = get_or<double>(g, "repeat_fraction", s.repeat_fraction);
    s.noise_std = get_or<double>(g, "noise_std", s.noise_std);
    if (g.contains("mix")) {
      check_keys(g.at("mix"), {kMixKeys[0], kMixKeys[1], kMixKeys[2], kMixKeys[3], kMixKeys[4],
                               kMixKeys[5]},
                 "generator.mix");
      for (int i = 0; i < 6; ++i) {
        s.voxel_mix[static_cast<std::size_t>(i)] =
            get_or<double>(g.at("mix"), kMixKeys[i], s.voxel_mix[static_cast<std::size_t>(i)]);
      }
    }
    s.replay_period = get_or<int>(g, "replay_period", s.replay_period);
    s.replay_lags = get_or<std::vector<int>>(g, "replay_lags", s.replay_lags);
    s.t_mem = get_or<int>(g, "t_mem", s.t_mem);
    s.image_size = get_or<int>(g, "image_size", s.image_size);
    s.seed = get_or<std::uint64_t>(g, "seed", rc.seed);
    s.backbone_seed = get_or<std::uint64_t>(g, "backbone_seed", s.backbone_seed);
  } else {
    rc.generator.seed = rc.seed;
  }

  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    check_keys(b,
               {"patch_size", "depth", "width", "heads", "mlp_hidden", "tap_layers", "lora_rank",
                "adaln_enabled", "subj_proj_dim", "embed_dim", "mode"},
               "backbone");
    BackboneConfig& c = rc.backbone;
    c.patch_size = get_or<int>(b, "patch_size", c.patch_size);
    c.depth = get_or<int>(b, "depth", c.depth);
    c.width = get_or<int>(b, "width", c.width);
    c.heads = get_or<int>(b, "heads", c.heads);
    c.mlp_hidden = get_or<int>(b, "mlp_hidden", c.mlp_hidden);
    if (b.contains("tap_layers")) {
      const auto taps = b.at("tap_layers").get<std::vector<int>>();
      if (taps.size() != 4) throw ConfigError("config: backbone.tap_layers needs 4 entries");
      for (int i = 0; i < 4; ++i) c.tap_layers[static_cast<std::size_t>(i)] = taps[static_cast<std::size_t>(i)];
    }
    c.lora_rank = get_or<int>(b, "lora_rank", c.lora_rank);
    c.adaln_enabled = get_or<bool>(b, "adaln_enabled", c.adaln_enabled);
    c.subj_proj_dim = get_or<int>(b, "subj_proj_dim", c.subj_proj_dim);
    c.embed_dim = get_or<int>(b, "embed_dim", c.embed_dim);
    rc.backbone_mode = get_or<std::string>(b, "mode", rc.backbone_mode);
  }

  if (j.contains("heads")) {
    const json& h = j.at("heads");
    check_keys(h, {"pe_octaves", "d_fuse", "sigma", "mapper_hidden"}, "heads");
    rc.heads.pe_octaves = get_or<int>(h, "pe_octaves", rc.heads.pe_octaves);
    rc.heads.d_fuse = get_or<int>(h, "d_fuse", rc.heads.d_fuse);
    rc.heads.sigma = get_or<double>(h, "sigma", rc.heads.sigma);
    rc.heads.mapper_hidden = get_or<int>(h, "mapper_hidden", rc.heads.mapper_hidden);
  }

  if (j.contains("memory")) {
    const json& m = j.at("memory");
    check_keys(m, {"enabled", "te_octaves", "d_t", "d_qbar", "d_m", "frame_hidden", "agg_hidden"},
               "memory");
    rc.memory_enabled = get_or<bool>(m, "enabled", rc.memory_enabled);
    rc.memory.te_octaves = get_or<int>(m, "te_octaves", rc.memory.te_octaves);
    rc.memory.d_t = get_or<int>(m, "d_t", rc.memory.d_t);
    rc.memory.d_qbar = get_or<int>(m, "d_qbar", rc.memory.d_qbar);
    rc.memory.d_m = get_or<int>(m, "d_m", rc.memory.d_m);
    rc.memory.frame_hidden = get_or<int>(m, "frame_hidden", rc.memory.frame_hidden);
    rc.memory.agg_hidden = get_or<int>(m, "agg_hidden", rc.memory.agg_hidden);
  }

  if (j.contains("recipe")) {
    const json& r = j.at("recipe");
    check_keys(r,
               {"mode", "atlases", "rois_per_atlas", "steps", "lr", "batch", "lambda_ent",
                "ent_schedule", "mask", "soup_k", "eval_every", "fixed_atlas", "seed"},
               "recipe");
    RecipeConfig& c = rc.recipe;
    c.mode = get_or<std::string>(r, "mode", c.mode);
    c.atlases = get_or<int>(r, "atlases", c.atlases);
    c.rois_per_atlas = get_or<int>(r, "rois_per_atlas", c.rois_per_atlas);
    c.steps = get_or<int>(r, "steps", c.steps);
    c.lr = get_or<double>(r, "lr", c.lr);
    c.batch = get_or<int>(r, "batch", c.batch);
    c.lambda_ent = get_or<double>(r, "lambda_ent", c.lambda_ent);
    c.ent_schedule = get_or<std::string>(r, "ent_schedule", c.ent_schedule);
    if (r.contains("mask")) c.input_mask = mask_from_json(r.at("mask"), "recipe.mask");
    c.soup_k = get_or<int>(r, "soup_k", c.soup_k);
    c.eval_every = get_or<int>(r, "eval_every", c.eval_every);
    c.fixed_atlas = get_or<bool>(r, "fixed_atlas", c.fixed_atlas);
    c.seed = get_or<std::uint64_t>(r, "seed", rc.seed);
  } else {
    rc.recipe.seed = rc.seed;
  }

  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    check_keys(m, {"nc_splits", "nc_seed", "nc_min_groups"}, "metrics");
    rc.metrics.nc_splits = get_or<int>(m, "nc_splits", rc.metrics.nc_splits);
    rc.metrics.nc_seed = get_or<std::uint64_t>(m, "nc_seed", rc.metrics.nc_seed);
    rc.metrics.nc_min_groups = get_or<int>(m, "nc_min_groups", rc.metrics.nc_min_groups);
  }

  if (j.contains("tracker")) {
    const json& t = j.at("tracker");
    check_keys(t,
               {"depth", "width", "attn_heads", "mlp_hidden", "d_fuse", "steps", "lr", "batch",
                "lambda_ent", "eval_every", "jobs", "rand_control", "lag_min",
                "period_threshold", "seed"},
               "tracker");
    TrackerConfig& c = rc.tracker;
    c.depth = get_or<int>(t, "depth", c.depth);
    c.width = get_or<int>(t, "width", c.width);
    c.attn_heads = get_or<int>(t, "attn_heads", c.attn_heads);
    c.mlp_hidden = get_or<int>(t, "mlp_hidden", c.mlp_hidden);
    c.d_fuse = get_or<int>(t, "d_fuse", c.d_fuse);
    c.steps = get_or<int>(t, "steps", c.steps);
    c.lr = get_or<double>(t, "lr", c.lr);
    c.batch = get_or<int>(t, "batch", c.batch);
    c.lambda_ent = get_or<double>(t, "lambda_ent", c.lambda_ent);
    c.eval_every = get_or<int>(t, "eval_every", c.eval_every);
    c.jobs = get_or<int>(t, "jobs", c.jobs);
    c.rand_control = get_or<bool>(t, "rand_control", c.rand_control);
    c.lag_min = get_or<int>(t, "lag_min", c.lag_min);
    c.period_threshold = get_or<double>(t, "period_threshold", c.period_threshold);
    c.seed = get_or<std::uint64_t>(t, "seed", rc.seed);
  } else {
    rc.tracker.seed = rc.seed;
  }

  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  json j;
  try {
    j = json::parse(read_text_file(file));
  } catch (const json::exception& e) {
    throw ConfigError("config file " + file.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json resolved_json(const RunConfig& rc) {
  json j;
  j["seed"] = rc.seed;
  j["output_dir"] = rc.output_dir;

  const GeneratorSpec& s = rc.generator;
  json mix;
  for (int i = 0; i < 6; ++i) mix[kMixKeys[i]] = s.voxel_mix[static_cast<std::size_t>(i)];
  j["generator"] = {{"n_voxels", s.n_voxels},
                    {"n_runs", s.n_runs},
                    {"trials_per_run", s.trials_per_run},
                    {"n_subjects", s.n_subjects},
                    {"repeat_fraction", s.repeat_fraction},
                    {"noise_std", s.noise_std},
                    {"mix", mix},
                    {"replay_period", s.replay_period},
                    {"replay_lags", s.replay_lags},
                    {"t_mem", s.t_mem},
                    {"image_size", s.image_size},
                    {"seed", s.seed},
                    {"backbone_seed", s.backbone_seed}};

  const BackboneConfig& b = rc.backbone;
  j["backbone"] = {{"patch_size", b.patch_size},
                   {"depth", b.depth},
                   {"width", b.width},
                   {"heads", b.heads},
                   {"mlp_hidden", b.mlp_hidden},
                   {"tap_layers", std::vector<int>(b.tap_layers.begin(), b.tap_layers.end())},
                   {"lora_rank", b.lora_rank},
                   {"adaln_enabled", b.adaln_enabled},
                   {"subj_proj_dim", b.subj_proj_dim},
                   {"embed_dim", b.embed_dim},
                   {"mode", rc.backbone_mode}};

  j["heads"] = {{"pe_octaves", rc.heads.pe_octaves},
                {"d_fuse", rc.heads.d_fuse},
                {"sigma", rc.heads.sigma},
                {"mapper_hidden", rc.heads.mapper_hidden}};

  j["memory"] = {{"enabled", rc.memory_enabled},
                 {"te_octaves", rc.memory.te_octaves},
                 {"d_t", rc.memory.d_t},
                 {"d_qbar", rc.memory.d_qbar},
                 {"d_m", rc.memory.d_m},
                 {"frame_hidden", rc.memory.frame_hidden},
                 {"agg_hidden", rc.memory.agg_hidden}};

  const RecipeConfig& r = rc.recipe;
  j["recipe"] = {{"mode", r.mode},
                 {"atlases", r.atlases},
                 {"rois_per_atlas", r.rois_per_atlas},
                 {"steps", r.steps},
                 {"lr", r.lr},
                 {"batch", r.batch},
                 {"lambda_ent", r.lambda_ent},
                 {"ent_schedule", r.ent_schedule},
                 {"mask", mask_to_json(r.input_mask)},
                 {"soup_k", r.soup_k},
                 {"eval_every", r.eval_every},
                 {"fixed_atlas", r.fixed_atlas},
                 {"seed", r.seed}};

  j["metrics"] = {{"nc_splits", rc.metrics.nc_splits},
                  {"nc_seed", rc.metrics.nc_seed},
                  {"nc_min_groups", rc.metrics.nc_min_groups}};

  const TrackerConfig& t = rc.tracker;
  j["tracker"] = {{"depth", t.depth},
                  {"width", t.width},
                  {"attn_heads", t.attn_heads},
                  {"mlp_hidden", t.mlp_hidden},
                  {"d_fuse", t.d_fuse},
                  {"steps", t.steps},
                  {"lr", t.lr},
                  {"batch", t.batch},
                  {"lambda_ent", t.lambda_ent},
                  {"eval_every", t.eval_every},
                  {"jobs", t.jobs},
                  {"rand_control", t.rand_control},
                  {"lag_min", t.lag_min},
                  {"period_threshold", t.period_threshold},
                  {"seed", t.seed}};
  return j;
}

std::string config_hash(const RunConfig& rc) {
  return sha256_hex(resolved_json(rc).dump());
}

void write_resolved(const RunConfig& rc, const std::filesystem::path& file) {
  write_text_file(file, resolved_json(rc).dump(2) + "\n");
}

InputMask parse_mask(const std::string& spec) {
  InputMask m;
  if (spec.empty()) return m;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', pos), spec.size());
    const std::string tok = spec.substr(pos, comma - pos);
    pos = comma + 1;
    if (tok.empty()) continue;
    if (tok == "condM") {
      m.condM = true;
    } else if (tok == "condB") {
      m.condB = true;
    } else if (tok == "condT") {
      m.condT = true;
    } else if (tok.rfind("shuffle_seed=", 0) == 0) {
      m.shuffle_seed = std::stoull(tok.substr(13));
    } else if (tok.rfind("frames=", 0) == 0) {
      const std::string v = tok.substr(7);
      if (v == "all") {
        m.frames = InputMask::Frames::All;
      } else if (v == "current") {
        m.frames = InputMask::Frames::CurrentOnly;
      } else if (v == "shuffled") {
        m.frames = InputMask::Frames::ShuffledTime;
      } else if (v.rfind("lag:", 0) == 0) {
        m.frames = InputMask::Frames::SingleLag;
        m.lag = std::stoi(v.substr(4));
      } else {
        throw ConfigError("mask: unknown frames value '" + v + "'");
      }
    } else {
      throw ConfigError("mask: unknown token '" + tok + "'");
    }
  }
  return m;
}

}  // namespace memenc
