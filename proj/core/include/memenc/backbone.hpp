#pragma once

#include <array>
#include <string>
#include <vector>

#include "memenc/nn.hpp"
#include "memenc/rng.hpp"
#include "memenc/tensor.hpp"

namespace memenc {

struct BackboneConfig {
  int image_size = 32;
  int patch_size = 4;
  int depth = 8;
  int width = 64;        // D'
  int heads = 4;
  int mlp_hidden = 128;
  std::array<int, 4> tap_layers = {2, 4, 6, 8};  // 1-indexed block outputs
  int lora_rank = 0;     // 0 disables LoRA
  bool adaln_enabled = true;
  int n_subjects = 1;
  int cond_dim = 6;
  int subj_proj_dim = 16;
  int embed_dim = 32;    // conditioning embedding e

  int grid_side() const { return image_size / patch_size; }
  int patch_dim() const { return patch_size * patch_size * 3; }
  int n_patches() const { return grid_side() * grid_side(); }
  void validate() const;
};

// Turns an [H,W,3] image into the [n_patches, patch_dim] matrix the backbone
// consumes. Pure data movement; the result is a constant leaf (images never
// need gradients).
Tensor patchify(const Tensor& image, const BackboneConfig& cfg);

// Subject-aware condition embedding, Eq-style e = MLP(GeLU(c w_s)) with a
// per-subject linear and a shared MLP. The memory module uses the same shared
// MLP through its own per-subject transform.
struct CondEmbed {
  Tensor w_subj;      // [n_subjects, cond_dim * subj_proj_dim], one matrix per row
  Tensor w_subj_mem;  // memory-specific per-subject transform
  MLP shared;
  int cond_dim = 0, proj_dim = 0, n_subjects = 0;

  CondEmbed() = default;
  CondEmbed(ParamStore& ps, const BackboneConfig& cfg, CounterRng& rng);

  // c: [n, cond_dim] -> e: [n, embed_dim]
  Tensor embed(const Tensor& c, int subject) const;
  Tensor embed_memory(const Tensor& c, int subject) const;

 private:
  Tensor apply(const Tensor& c, int subject, const Tensor& table) const;
};

struct BackboneOutput {
  std::array<Tensor, 4> taps;  // each [H', W', D'] after its ConvBlock
  Tensor cls;                  // [D'] final-layer class token (post final LN)
};

// Toy pre-LN ViT. Weights are a fixed-seed random stand-in for a pretrained
// model; training either freezes them, runs LoRA deltas, or updates all.
class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, std::uint64_t seed);

  const BackboneConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

  // e: [1, embed_dim] row or undefined Tensor when conditioning is off.
  BackboneOutput forward(const Tensor& image, const Tensor& e = {}) const;

  // Exposed for tests: modulated pre-norm at one site. site 0 = pre-attention,
  // site 1 = pre-MLP. Throws StateError when AdaLN is disabled.
  Tensor adaln_modulate(const Tensor& tokens, const Tensor& e, int block, int site) const;

  // Adds LoRA deltas to every attention/MLP matrix and freezes the bases.
  // Callable once; construction calls it when cfg.lora_rank > 0.
  void apply_lora(int rank);
  bool lora_active() const { return lora_rank_ > 0; }

  void freeze_all();
  const CondEmbed& cond() const { return cond_; }
  CondEmbed& cond() { return cond_; }

 private:
  struct AdaptedLinear {
    Tensor w, b;
    Tensor a, bm;  // LoRA factors, defined only when active
    Tensor forward(const Tensor& x) const;
  };
  struct Block {
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor mod1_w, mod1_b, mod2_w, mod2_b;  // AdaLN maps e -> [scale;shift]
    AdaptedLinear wq, wk, wv, wo, fc1, fc2;
  };

  Tensor pre_norm(const Block& blk, int site, const Tensor& tokens, const Tensor& e) const;
  Tensor block_forward(const Block& blk, const Tensor& tokens, const Tensor& e) const;

  BackboneConfig cfg_;
  ParamStore ps_;
  CondEmbed cond_;
  Tensor cls_token_;  // [1, D']
  Tensor pos_embed_;  // [n_patches+1, D']
  Linear patch_proj_;
  std::vector<Block> blocks_;
  std::array<Linear, 4> conv_blocks_;
  Tensor final_ln_g_, final_ln_b_;
  int lora_rank_ = 0;
  std::uint64_t seed_ = 0;
};

}  // namespace memenc
