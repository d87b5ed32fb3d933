#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "memenc/rng.hpp"
#include "memenc/tensor.hpp"

namespace memenc {

// Flat registry of named leaf parameters. Modules register tensors here at
// construction; optimizers, checkpoint IO, soup averaging and weight hashing
// all operate on the store rather than on individual modules.
class ParamStore {
 public:
  // Creates a parameter (requires_grad=true) and registers it. Names must be
  // unique within the store.
  Tensor create(const std::string& name, Shape shape, double fill = 0.0);
  Tensor create_gaussian(const std::string& name, Shape shape, CounterRng& rng, double stddev);

  bool has(const std::string& name) const;
  Tensor get(const std::string& name) const;

  struct Item {
    std::string name;
    Tensor tensor;
  };
  const std::vector<Item>& items() const { return items_; }
  std::int64_t total_params() const;

  // Parameters whose requires_grad flag is set.
  std::vector<Tensor> trainable() const;
  void freeze_prefix(const std::string& prefix);

  void zero_grads();

  // Digest over (name, shape, data) in registration order. Any weight change
  // changes the hash; used to key feature caches.
  std::string weight_hash() const;

  // Flat copy of every parameter's values in registration order.
  std::vector<double> snapshot() const;
  void restore(const std::vector<double>& flat);

  // Blob+manifest checkpoint: <dir>/weights.bin plus <dir>/manifest.json
  // listing name/shape/offset per parameter.
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  std::vector<Item> items_;
  std::map<std::string, std::size_t> index_;
};

// Fully connected layer y = x W + b with W: [in,out].
struct Linear {
  Tensor w, b;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int in, int out, CounterRng& rng);
  Tensor forward(const Tensor& x) const;
};

// Linear with a low-rank LoRA delta: W_eff = W + A B. A is small-gaussian,
// B starts at zero, so the layer is bit-exactly the base layer at init.
// Training typically freezes w/b and updates only a/bm.
struct LinearLoRA {
  Tensor w, b;   // base
  Tensor a, bm;  // delta factors, a: [in,r], bm: [r,out]

  LinearLoRA() = default;
  LinearLoRA(ParamStore& ps, const std::string& prefix, int in, int out, int rank,
             CounterRng& rng);
  Tensor effective_weight() const;
  Tensor forward(const Tensor& x) const;
};

// Stack of Linear layers with an activation between them (none after the
// last). activation: "gelu" or "tanh".
struct MLP {
  std::vector<Linear> layers;
  std::string activation = "gelu";

  MLP() = default;
  MLP(ParamStore& ps, const std::string& prefix, const std::vector<int>& dims,
      CounterRng& rng, std::string activation = "gelu");
  Tensor forward(const Tensor& x) const;
};

// Adam over a fixed list of leaf parameters.
class Adam {
 public:
  struct Config {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Tensor> params, Config cfg);

  // Applies one update from the accumulated grads, then clears them.
  void step();
  void zero_grads();
  std::int64_t step_count() const { return t_; }
  Config& config() { return cfg_; }

 private:
  std::vector<Tensor> params_;
  Config cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace memenc
