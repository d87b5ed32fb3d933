#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "memenc/backbone.hpp"
#include "memenc/error.hpp"
#include "memenc/memory.hpp"
#include "memenc/rng.hpp"

using namespace memenc;

namespace {

BackboneConfig tiny_backbone() {
  BackboneConfig cfg;
  cfg.image_size = 16;
  cfg.patch_size = 4;
  cfg.depth = 4;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.mlp_hidden = 24;
  cfg.tap_layers = {1, 2, 3, 4};
  return cfg;
}

MemoryConfig tiny_memory() {
  MemoryConfig cfg;
  cfg.t_mem = 5;
  cfg.d_t = 8;
  cfg.d_qbar = 10;
  cfg.d_m = 12;
  cfg.frame_hidden = 16;
  cfg.agg_hidden = 20;
  return cfg;
}

Tensor random_image(std::uint64_t seed) {
  CounterRng rng(seed, "img");
  std::vector<double> v(16 * 16 * 3);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data({16, 16, 3}, v);
}

MemoryWindow make_window(const BackboneConfig& bc, const MemoryConfig& mc, int blanks) {
  MemoryWindow w;
  std::vector<double> cond(static_cast<std::size_t>(mc.t_mem) * bc.cond_dim);
  CounterRng rng(31, "cond");
  for (double& x : cond) x = rng.uniform(-1.0, 1.0);
  w.conditions = Tensor::from_data({mc.t_mem, bc.cond_dim}, cond);
  for (int t = 0; t < mc.t_mem; ++t) {
    const bool blank = t < blanks;
    w.blank_mask.push_back(blank);
    w.frames.push_back(blank ? Tensor{} : random_image(50 + static_cast<std::uint64_t>(t)));
  }
  return w;
}

}  // namespace

TEST_CASE("time embedding is injective over the window") {
  ParamStore ps;
  CounterRng rng(32, "mem");
  const BackboneConfig bc = tiny_backbone();
  const MemoryConfig mc = tiny_memory();
  MemoryCompressor comp(ps, mc, bc.width, bc.cond_dim, bc.embed_dim, 1, rng);
  std::vector<std::vector<double>> rows;
  for (int t = -mc.t_mem; t <= -1; ++t) {
    const Tensor te = comp.time_embed(t, 0);
    REQUIRE(te.shape() == Shape{1, mc.d_t});
    for (const auto& prev : rows) CHECK(prev != te.data());
    rows.push_back(te.data());
  }
  CHECK_THROWS_AS(comp.time_embed(0, 0), PreconditionError);
  CHECK_THROWS_AS(comp.time_embed(-mc.t_mem - 1, 0), PreconditionError);
}

TEST_CASE("compress yields a fixed-size memory feature") {
  ParamStore ps;
  CounterRng rng(33, "mem");
  const BackboneConfig bc = tiny_backbone();
  const MemoryConfig mc = tiny_memory();
  Backbone bb(bc, 77);
  MemoryCompressor comp(ps, mc, bc.width, bc.cond_dim, bc.embed_dim, 1, rng);
  const MemoryWindow w = make_window(bc, mc, 2);
  const Tensor h = comp.compress(w, 0, bb, bb.cond());
  REQUIRE(h.shape() == Shape{mc.d_m});
  for (double v : h.data()) CHECK(std::isfinite(v));
}

TEST_CASE("blank slots enter as zero images, not skipped slots") {
  ParamStore ps;
  CounterRng rng(34, "mem");
  const BackboneConfig bc = tiny_backbone();
  const MemoryConfig mc = tiny_memory();
  Backbone bb(bc, 78);
  MemoryCompressor comp(ps, mc, bc.width, bc.cond_dim, bc.embed_dim, 1, rng);

  MemoryWindow blanked = make_window(bc, mc, 1);
  MemoryWindow explicit_zero = blanked;
  explicit_zero.blank_mask[0] = false;
  explicit_zero.frames[0] = Tensor::zeros({16, 16, 3});

  const Tensor a = comp.compress(blanked, 0, bb, bb.cond());
  const Tensor b = comp.compress(explicit_zero, 0, bb, bb.cond());
  for (std::size_t i = 0; i < a.data().size(); ++i)
    CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
}

TEST_CASE("token cache serves exact tokens and counts hits") {
  const BackboneConfig bc = tiny_backbone();
  Backbone bb(bc, 79);
  TokenCache cache(TokenCache::Mode::Exact);
  const Tensor img = random_image(9);
  const Tensor t1 = cache.token_for(img, bb);
  const Tensor t2 = cache.token_for(img, bb);
  CHECK(cache.misses() == 1);
  CHECK(cache.hits() == 1);
  CHECK(t1.data() == t2.data());
  const Tensor direct = bb.forward(img).cls;
  CHECK(t1.data() == direct.data());
}

TEST_CASE("window validation catches malformed shapes") {
  const BackboneConfig bc = tiny_backbone();
  const MemoryConfig mc = tiny_memory();
  MemoryWindow w = make_window(bc, mc, 0);
  w.frames.pop_back();
  w.blank_mask.pop_back();
  CHECK_THROWS_AS(w.validate(mc.t_mem), ShapeError);
}

TEST_CASE("memory config validation") {
  MemoryConfig cfg = tiny_memory();
  cfg.t_mem = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_memory();
  cfg.d_m = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
