#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"
#include "memenc/model.hpp"
#include "memenc/nn.hpp"
#include "memenc/runconfig.hpp"
#include "memenc/synthgen.hpp"
#include "memenc/training.hpp"

using namespace memenc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* leaf) {
  const fs::path p = fs::temp_directory_path() / "memenc_io_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

GeneratorSpec tiny_spec() {
  GeneratorSpec s;
  s.n_voxels = 20;
  s.n_runs = 3;
  s.trials_per_run = 18;
  s.t_mem = 6;
  s.replay_period = 3;
  s.replay_lags = {3};
  s.noise_std = 0.1;
  s.voxel_mix = {0.5, 0.1, 0.1, 0.1, 0.1, 0.1};
  s.seed = 88;
  return s;
}

ModelConfig tiny_model(const GeneratorSpec& s, std::uint64_t seed) {
  ModelConfig mc;
  mc.backbone.image_size = s.image_size;
  mc.backbone.depth = 4;
  mc.backbone.width = 16;
  mc.backbone.heads = 2;
  mc.backbone.mlp_hidden = 24;
  mc.backbone.tap_layers = {1, 2, 3, 4};
  mc.backbone.n_subjects = s.n_subjects;
  mc.heads.d_fuse = 16;
  mc.heads.mapper_hidden = 16;
  mc.memory.t_mem = s.t_mem;
  mc.memory.d_t = 8;
  mc.memory.d_qbar = 8;
  mc.memory.d_m = 12;
  mc.memory.frame_hidden = 16;
  mc.memory.agg_hidden = 24;
  mc.memory_enabled = false;
  mc.seed = seed;
  return mc;
}

}  // namespace

TEST_CASE("dataset round trips through its on-disk layout") {
  const Dataset ds = generate(tiny_spec());
  const fs::path dir = scratch_dir("dataset");
  ds.save(dir);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "images.bin"));
  CHECK(fs::exists(dir / "responses.bin"));
  CHECK(fs::exists(dir / "clean.bin"));
  CHECK(fs::exists(dir / "conditions.bin"));
  CHECK(fs::exists(dir / "coords.bin"));

  const Dataset back = Dataset::load(dir);
  CHECK(back.spec.seed == ds.spec.seed);
  CHECK(back.spec.n_voxels == ds.spec.n_voxels);
  CHECK(back.spec.replay_lags == ds.spec.replay_lags);
  CHECK(back.responses == ds.responses);
  CHECK(back.clean == ds.clean);
  CHECK(back.conditions == ds.conditions);
  CHECK(back.image_id == ds.image_id);
  CHECK(back.split == ds.split);
  CHECK(back.subject_of == ds.subject_of);
  CHECK(back.repeat_pairs == ds.repeat_pairs);
  CHECK(back.voxels.roi_label == ds.voxels.roi_label);
  CHECK(back.voxels.coords.data() == ds.voxels.coords.data());
  REQUIRE(back.gt.size() == ds.gt.size());
  for (std::size_t i = 0; i < ds.gt.size(); ++i) {
    CHECK(back.gt[i].archetype == ds.gt[i].archetype);
    CHECK(back.gt[i].vx == ds.gt[i].vx);
    CHECK(back.gt[i].tap == ds.gt[i].tap);
  }
  REQUIRE(back.images.size() == ds.images.size());
  CHECK(back.images.front().data() == ds.images.front().data());
  CHECK(back.images.back().data() == ds.images.back().data());

  CHECK_THROWS_AS(Dataset::load(dir / "nope"), IoError);
}

TEST_CASE("encoding model save and load preserve predictions") {
  const Dataset ds = generate(tiny_spec());
  EncodingModel model(tiny_model(ds.spec, 31), ds.voxels);
  RecipeConfig recipe;
  recipe.steps = 15;
  recipe.batch = 8;
  recipe.eval_every = 5;
  recipe.soup_k = 2;
  recipe.seed = 3;
  train_one(model, ds, recipe);

  const fs::path dir = scratch_dir("model");
  model.save(dir);
  EncodingModel back(tiny_model(ds.spec, 31), ds.voxels);
  back.load(dir);
  CHECK(back.snapshot() == model.snapshot());
  const std::vector<int> test = ds.trials_in_split(kSplitTest);
  CHECK(back.predict(ds, test) == model.predict(ds, test));
}

TEST_CASE("ensemble zoo save and load preserve predictions") {
  const Dataset ds = generate(tiny_spec());
  RecipeConfig recipe;
  recipe.mode = "ensemble";
  recipe.atlases = 2;
  recipe.rois_per_atlas = 2;
  recipe.steps = 10;
  recipe.batch = 8;
  recipe.eval_every = 5;
  recipe.soup_k = 2;
  recipe.seed = 4;
  const EnsembleModel zoo = train_ensemble(tiny_model(ds.spec, 33), ds.voxels, ds, recipe);

  const fs::path dir = scratch_dir("zoo");
  zoo.save(dir);
  CHECK(fs::exists(dir / "zoo.json"));
  const EnsembleModel back = EnsembleModel::load(tiny_model(ds.spec, 33), ds.voxels, dir);
  REQUIRE(back.members.size() == zoo.members.size());
  const std::vector<int> test = ds.trials_in_split(kSplitTest);
  CHECK(ensemble_predict(back, ds, test) == ensemble_predict(zoo, ds, test));
}

TEST_CASE("param store binary round trip") {
  ParamStore store;
  CounterRng rng(5, "params");
  store.create_gaussian("alpha.w", {3, 4}, rng, 0.5);
  store.create_gaussian("alpha.b", {4}, rng, 0.5);
  const fs::path dir = scratch_dir("params");
  store.save(dir);
  CHECK(fs::exists(dir / "weights.bin"));
  CHECK(fs::exists(dir / "manifest.json"));

  ParamStore other;
  other.create("alpha.w", {3, 4});
  other.create("alpha.b", {4});
  other.load(dir);
  CHECK(other.snapshot() == store.snapshot());
  CHECK(other.weight_hash() == store.weight_hash());

  ParamStore mismatched;
  mismatched.create("alpha.w", {3, 4});
  CHECK_THROWS_AS(mismatched.load(dir), ShapeError);
}

TEST_CASE("run config materializes defaults and rejects unknown keys") {
  nlohmann::json j = {
      {"seed", 9},
      {"generator", {{"n_voxels", 40}, {"t_mem", 8}, {"replay_lags", {4}}}},
  };
  const RunConfig rc = parse_run_config(j);
  CHECK(rc.seed == 9);
  CHECK(rc.generator.n_voxels == 40);
  CHECK(rc.generator.t_mem == 8);
  const ModelConfig mc = rc.model_config();
  CHECK(mc.memory.t_mem == 8);  // follows the generator
  CHECK(mc.backbone.image_size == rc.generator.image_size);
  CHECK(rc.recipe.steps == 2000);  // default materialized

  nlohmann::json bad = j;
  bad["generatr"] = nlohmann::json::object();
  CHECK_THROWS_WITH_AS(parse_run_config(bad), doctest::Contains("unknown key"),
                       ConfigError);
  nlohmann::json bad2 = j;
  bad2["recipe"] = {{"step", 10}};
  CHECK_THROWS_AS(parse_run_config(bad2), ConfigError);
}

TEST_CASE("resolved config is a fixpoint with an order-insensitive hash") {
  nlohmann::json j = {
      {"seed", 12},
      {"output_dir", "/tmp/x"},
      {"generator", {{"n_voxels", 24}, {"noise_std", 0.2}}},
      {"recipe", {{"steps", 50}, {"lr", 0.001}}},
  };
  const RunConfig rc = parse_run_config(j);
  const nlohmann::json resolved = resolved_json(rc);
  const RunConfig rc2 = parse_run_config(resolved);
  CHECK(resolved_json(rc2) == resolved);
  CHECK(config_hash(rc2) == config_hash(rc));

  // nlohmann objects sort keys, so insertion order cannot leak into the hash.
  nlohmann::json j2 = {
      {"recipe", {{"lr", 0.001}, {"steps", 50}}},
      {"generator", {{"noise_std", 0.2}, {"n_voxels", 24}}},
      {"output_dir", "/tmp/x"},
      {"seed", 12},
  };
  CHECK(config_hash(parse_run_config(j2)) == config_hash(rc));

  const fs::path dir = scratch_dir("config");
  write_resolved(rc, dir / "config.json");
  const RunConfig rc3 = load_run_config(dir / "config.json");
  CHECK(config_hash(rc3) == config_hash(rc));
}

TEST_CASE("master seed feeds the sections unless they pin their own") {
  const RunConfig rc = parse_run_config(nlohmann::json{{"seed", 9}});
  CHECK(rc.generator.seed == 9);
  CHECK(rc.recipe.seed == 9);
  CHECK(rc.tracker.seed == 9);

  const nlohmann::json pinned = {{"seed", 9}, {"generator", {{"seed", 7}}}};
  RunConfig rp = parse_run_config(pinned);
  CHECK(rp.generator.seed == 7);
  CHECK(rp.recipe.seed == 9);

  // the --seed override stomps every section, pinned or not
  override_seed(rp, 42);
  CHECK(rp.seed == 42);
  CHECK(rp.generator.seed == 42);
  CHECK(rp.recipe.seed == 42);
  CHECK(rp.tracker.seed == 42);
}

TEST_CASE("input mask specs parse") {
  const InputMask none = parse_mask("");
  CHECK(none.frames == InputMask::Frames::All);
  CHECK_FALSE(none.condM);  // nothing zeroed by default
  CHECK_FALSE(none.condB);
  CHECK_FALSE(none.condT);
  CHECK(none.describe() == "all");

  const InputMask lag = parse_mask("frames=lag:6,condB");
  CHECK(lag.frames == InputMask::Frames::SingleLag);
  CHECK(lag.lag == 6);
  CHECK(lag.condB);  // condB zeroed
  CHECK_FALSE(lag.condM);
  CHECK_FALSE(lag.condT);
  CHECK(lag.describe() == "single-lag(6)+condB");

  const InputMask cur = parse_mask("frames=current,condM,condT");
  CHECK(cur.frames == InputMask::Frames::CurrentOnly);
  CHECK(cur.condM);
  CHECK(cur.condT);
  CHECK_FALSE(cur.condB);

  const InputMask shuf = parse_mask("frames=shuffled,shuffle_seed=123");
  CHECK(shuf.frames == InputMask::Frames::ShuffledTime);
  CHECK(shuf.shuffle_seed == 123);

  CHECK_THROWS_AS(parse_mask("frames=nonsense"), ConfigError);
  CHECK_THROWS_AS(parse_mask("condZ"), ConfigError);
}

TEST_CASE("training history lines are self-describing JSON") {
  const Dataset ds = generate(tiny_spec());
  EncodingModel model(tiny_model(ds.spec, 35), ds.voxels);
  RecipeConfig recipe;
  recipe.steps = 10;
  recipe.batch = 8;
  recipe.eval_every = 5;
  recipe.soup_k = 2;
  recipe.seed = 6;
  const fs::path dir = scratch_dir("history");
  train_one(model, ds, recipe, dir / "history.jsonl");

  std::ifstream in(dir / "history.jsonl");
  REQUIRE(in.good());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("step"));
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("val_r"));
    CHECK(j.contains("eta_entropy"));
    ++n;
  }
  CHECK(n >= 2);
}
