#include <benchmark/benchmark.h>

#include "memenc/backbone.hpp"
#include "memenc/memory.hpp"
#include "memenc/model.hpp"
#include "memenc/rng.hpp"
#include "memenc/synthgen.hpp"
#include "memenc/tensor.hpp"

using namespace memenc;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  CounterRng rng(seed);
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.gaussian();
  return Tensor::from_data(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  NoGradGuard off;
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b).data().data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

void BM_MatmulBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Tensor a = random_tensor({n, n}, 1).set_requires_grad(true);
    Tensor b = random_tensor({n, n}, 2).set_requires_grad(true);
    Tensor loss = sum(matmul(a, b));
    backward(loss);
    benchmark::DoNotOptimize(a.grad().data());
  }
}

void BM_BackboneForward(benchmark::State& state) {
  BackboneConfig cfg;
  Backbone bb(cfg, 1);
  Tensor img = random_tensor({cfg.image_size, cfg.image_size, 3}, 3);
  NoGradGuard off;
  for (auto _ : state) {
    BackboneOutput out = bb.forward(img);
    benchmark::DoNotOptimize(out.cls.data().data());
  }
}

void BM_CompressWindow(benchmark::State& state) {
  BackboneConfig bcfg;
  MemoryConfig mcfg;
  ParamStore ps;
  CounterRng rng(7);
  MemoryCompressor comp(ps, mcfg, bcfg.width, bcfg.cond_dim, bcfg.embed_dim, 1, rng);
  CondEmbed cond(ps, bcfg, rng);
  const int batch = 8;
  Tensor tokens = random_tensor({mcfg.t_mem * batch, bcfg.width}, 4);
  Tensor conds = random_tensor({mcfg.t_mem * batch, bcfg.cond_dim}, 5);
  NoGradGuard off;
  for (auto _ : state) {
    Tensor e = cond.embed_memory(conds, 0);
    Tensor h = comp.compress_from_tokens(tokens, e, 0, batch);
    benchmark::DoNotOptimize(h.data().data());
  }
}

void BM_EncodingForwardCached(benchmark::State& state) {
  GeneratorSpec spec;
  spec.n_voxels = 96;
  spec.n_runs = 2;
  spec.trials_per_run = 40;
  Dataset ds = generate(spec);
  ModelConfig mc;
  mc.backbone.n_subjects = spec.n_subjects;
  mc.seed = 11;
  EncodingModel model(mc, ds.voxels);
  std::vector<int> trials{40, 41, 42, 43, 44, 45, 46, 47};
  model.predict(ds, trials);  // warm the feature cache
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict(ds, trials).data());
  }
}

}  // namespace

BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(128);
BENCHMARK(BM_BackboneForward);
BENCHMARK(BM_CompressWindow);
BENCHMARK(BM_EncodingForwardCached);

BENCHMARK_MAIN();
