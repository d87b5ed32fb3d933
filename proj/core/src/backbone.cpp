#include "memenc/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "memenc/error.hpp"

namespace memenc {

void BackboneConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw ConfigError("backbone: image_size " + std::to_string(image_size) +
                      " not tiled by patch_size " + std::to_string(patch_size));
  }
  if (depth < 1) throw ConfigError("backbone: depth must be >= 1");
  if (width < 1 || heads < 1 || width % heads != 0) {
    throw ConfigError("backbone: width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (mlp_hidden < 1) throw ConfigError("backbone: mlp_hidden must be >= 1");
  for (std::size_t i = 0; i < tap_layers.size(); ++i) {
    if (tap_layers[i] < 1 || tap_layers[i] > depth) {
      throw ConfigError("backbone: tap layer " + std::to_string(tap_layers[i]) +
                        " outside 1.." + std::to_string(depth));
    }
    if (i > 0 && tap_layers[i] <= tap_layers[i - 1]) {
      throw ConfigError("backbone: tap layers must be strictly increasing");
    }
  }
  if (lora_rank < 0) throw ConfigError("backbone: negative lora_rank");
  if (n_subjects < 1) throw ConfigError("backbone: n_subjects must be >= 1");
  if (cond_dim < 1 || subj_proj_dim < 1 || embed_dim < 1) {
    throw ConfigError("backbone: conditioning dims must be positive");
  }
}

Tensor patchify(const Tensor& image, const BackboneConfig& cfg) {
  const int s = cfg.image_size, p = cfg.patch_size, g = cfg.grid_side();
  if (image.rank() != 3 || image.dim(0) != s || image.dim(1) != s || image.dim(2) != 3) {
    throw ShapeError("patchify: expected [" + std::to_string(s) + "," + std::to_string(s) +
                     ",3], got " + shape_str(image.shape()));
  }
  const auto& px = image.data();
  std::vector<double> out(static_cast<std::size_t>(cfg.n_patches()) * cfg.patch_dim());
  std::size_t o = 0;
  for (int pi = 0; pi < g; ++pi) {
    for (int pj = 0; pj < g; ++pj) {
      for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
          const std::size_t base = ((static_cast<std::size_t>(pi * p + r)) * s + (pj * p + c)) * 3;
          out[o++] = px[base];
          out[o++] = px[base + 1];
          out[o++] = px[base + 2];
        }
      }
    }
  }
  return Tensor::from_data({cfg.n_patches(), cfg.patch_dim()}, std::move(out));
}

CondEmbed::CondEmbed(ParamStore& ps, const BackboneConfig& cfg, CounterRng& rng)
    : cond_dim(cfg.cond_dim), proj_dim(cfg.subj_proj_dim), n_subjects(cfg.n_subjects) {
  const double std = 1.0 / std::sqrt(static_cast<double>(cond_dim));
  w_subj = ps.create_gaussian("cond.w_subj", {n_subjects, cond_dim * proj_dim}, rng, std);
  w_subj_mem = ps.create_gaussian("cond.w_subj_mem", {n_subjects, cond_dim * proj_dim}, rng, std);
  shared = MLP(ps, "cond.mlp", {proj_dim, 32, cfg.embed_dim}, rng);
}

Tensor CondEmbed::apply(const Tensor& c, int subject, const Tensor& table) const {
  if (subject < 0 || subject >= n_subjects) {
    throw LookupError("condition_embed: unknown subject " + std::to_string(subject));
  }
  if (c.rank() != 2 || c.dim(1) != cond_dim) {
    throw ShapeError("condition_embed: expected [n," + std::to_string(cond_dim) + "], got " +
                     shape_str(c.shape()));
  }
  Tensor ws = reshape(slice(table, 0, subject, 1), {cond_dim, proj_dim});
  return shared.forward(gelu(matmul(c, ws)));
}

Tensor CondEmbed::embed(const Tensor& c, int subject) const { return apply(c, subject, w_subj); }

Tensor CondEmbed::embed_memory(const Tensor& c, int subject) const {
  return apply(c, subject, w_subj_mem);
}

Tensor Backbone::AdaptedLinear::forward(const Tensor& x) const {
  Tensor weight = a.defined() ? add(w, matmul(a, bm)) : w;
  return add_bias(matmul(x, weight), b);
}

Backbone::Backbone(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  CounterRng rng(seed, "backbone");
  const int d = cfg_.width;
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));

  cls_token_ = ps_.create_gaussian("cls_token", {1, d}, rng, 0.02);
  pos_embed_ = ps_.create_gaussian("pos_embed", {cfg_.n_patches() + 1, d}, rng, 0.02);
  patch_proj_ = Linear(ps_, "patch_proj", cfg_.patch_dim(), d, rng);

  blocks_.resize(static_cast<std::size_t>(cfg_.depth));
  for (int i = 0; i < cfg_.depth; ++i) {
    Block& blk = blocks_[static_cast<std::size_t>(i)];
    const std::string p = "blk" + std::to_string(i);
    blk.ln1_g = ps_.create(p + ".ln1.g", {d}, 1.0);
    blk.ln1_b = ps_.create(p + ".ln1.b", {d});
    blk.ln2_g = ps_.create(p + ".ln2.g", {d}, 1.0);
    blk.ln2_b = ps_.create(p + ".ln2.b", {d});
    if (cfg_.adaln_enabled) {
      blk.mod1_w = ps_.create(p + ".mod1.w", {cfg_.embed_dim, 2 * d});
      blk.mod1_b = ps_.create(p + ".mod1.b", {2 * d});
      blk.mod2_w = ps_.create(p + ".mod2.w", {cfg_.embed_dim, 2 * d});
      blk.mod2_b = ps_.create(p + ".mod2.b", {2 * d});
    }
    auto make = [&](const char* name, int in, int out) {
      AdaptedLinear l;
      l.w = ps_.create_gaussian(p + "." + name + ".w", {in, out}, rng,
                                1.0 / std::sqrt(static_cast<double>(in)));
      l.b = ps_.create(p + "." + name + ".b", {out});
      return l;
    };
    blk.wq = make("q", d, d);
    blk.wk = make("k", d, d);
    blk.wv = make("v", d, d);
    blk.wo = make("o", d, d);
    blk.fc1 = make("fc1", d, cfg_.mlp_hidden);
    blk.fc2 = make("fc2", cfg_.mlp_hidden, d);
    (void)ws;
  }
  for (int t = 0; t < 4; ++t) {
    conv_blocks_[static_cast<std::size_t>(t)] =
        Linear(ps_, "conv" + std::to_string(t), d, d, rng);
  }
  final_ln_g_ = ps_.create("final_ln.g", {d}, 1.0);
  final_ln_b_ = ps_.create("final_ln.b", {d});
  cond_ = CondEmbed(ps_, cfg_, rng);

  if (cfg_.lora_rank > 0) apply_lora(cfg_.lora_rank);
}

Tensor Backbone::pre_norm(const Block& blk, int site, const Tensor& tokens,
                          const Tensor& e) const {
  const Tensor& g = site == 0 ? blk.ln1_g : blk.ln2_g;
  const Tensor& b = site == 0 ? blk.ln1_b : blk.ln2_b;
  Tensor normed = layernorm(tokens, g, b);
  if (!cfg_.adaln_enabled || !e.defined()) return normed;
  const Tensor& mw = site == 0 ? blk.mod1_w : blk.mod2_w;
  const Tensor& mb = site == 0 ? blk.mod1_b : blk.mod2_b;
  if (e.rank() != 2 || e.dim(0) != 1 || e.dim(1) != cfg_.embed_dim) {
    throw ShapeError("adaln: e must be [1," + std::to_string(cfg_.embed_dim) + "], got " +
                     shape_str(e.shape()));
  }
  const int d = cfg_.width;
  const int n = tokens.dim(0);
  Tensor ms = add_bias(matmul(e, mw), mb);
  Tensor scale = reshape(slice(ms, 1, 0, d), {d});
  Tensor shift = reshape(slice(ms, 1, d, d), {d});
  Tensor scaled = mul(normed, repeat_row(add_scalar(scale, 1.0), n));
  return add(scaled, repeat_row(shift, n));
}

Tensor Backbone::adaln_modulate(const Tensor& tokens, const Tensor& e, int block,
                                int site) const {
  if (!cfg_.adaln_enabled) throw StateError("adaln_modulate: AdaLN disabled in config");
  if (block < 0 || block >= cfg_.depth) throw ConfigError("adaln_modulate: bad block index");
  if (site != 0 && site != 1) throw ConfigError("adaln_modulate: site must be 0 or 1");
  if (!e.defined()) throw StateError("adaln_modulate: e required");
  return pre_norm(blocks_[static_cast<std::size_t>(block)], site, tokens, e);
}

Tensor Backbone::block_forward(const Block& blk, const Tensor& tokens, const Tensor& e) const {
  Tensor t1 = pre_norm(blk, 0, tokens, e);
  Tensor wq = blk.wq.a.defined() ? add(blk.wq.w, matmul(blk.wq.a, blk.wq.bm)) : blk.wq.w;
  Tensor wk = blk.wk.a.defined() ? add(blk.wk.w, matmul(blk.wk.a, blk.wk.bm)) : blk.wk.w;
  Tensor wv = blk.wv.a.defined() ? add(blk.wv.w, matmul(blk.wv.a, blk.wv.bm)) : blk.wv.w;
  Tensor wo = blk.wo.a.defined() ? add(blk.wo.w, matmul(blk.wo.a, blk.wo.bm)) : blk.wo.w;
  Tensor attn = multihead_attention(t1, wq, blk.wq.b, wk, blk.wk.b, wv, blk.wv.b, wo, blk.wo.b,
                                    cfg_.heads);
  Tensor x = add(tokens, attn);
  Tensor t2 = pre_norm(blk, 1, x, e);
  Tensor h = blk.fc2.forward(gelu(blk.fc1.forward(t2)));
  return add(x, h);
}

BackboneOutput Backbone::forward(const Tensor& image, const Tensor& e) const {
  Tensor patches = patchify(image, cfg_);
  Tensor tokens = add(concat({cls_token_, patch_proj_.forward(patches)}, 0), pos_embed_);

  BackboneOutput out;
  const int g = cfg_.grid_side();
  for (int i = 0; i < cfg_.depth; ++i) {
    tokens = block_forward(blocks_[static_cast<std::size_t>(i)], tokens, e);
    for (int t = 0; t < 4; ++t) {
      if (cfg_.tap_layers[static_cast<std::size_t>(t)] == i + 1) {
        Tensor grid_tokens = slice(tokens, 0, 1, cfg_.n_patches());
        Tensor m = gelu(conv_blocks_[static_cast<std::size_t>(t)].forward(grid_tokens));
        out.taps[static_cast<std::size_t>(t)] = reshape(m, {g, g, cfg_.width});
      }
    }
  }
  Tensor final = layernorm(tokens, final_ln_g_, final_ln_b_);
  out.cls = reshape(slice(final, 0, 0, 1), {cfg_.width});
  return out;
}

void Backbone::apply_lora(int rank) {
  if (lora_rank_ > 0) throw StateError("apply_lora: already applied");
  const int min_dim = std::min(cfg_.width, cfg_.mlp_hidden);
  if (rank < 1 || rank >= min_dim) {
    throw ConfigError("apply_lora: rank " + std::to_string(rank) +
                      " must sit strictly below min matrix dim " + std::to_string(min_dim));
  }
  CounterRng rng(seed_, "lora");
  for (int i = 0; i < cfg_.depth; ++i) {
    Block& blk = blocks_[static_cast<std::size_t>(i)];
    const std::string p = "blk" + std::to_string(i);
    auto adapt = [&](AdaptedLinear& l, const char* name) {
      l.w.set_requires_grad(false);
      l.b.set_requires_grad(false);
      const int in = l.w.dim(0), out = l.w.dim(1);
      l.a = ps_.create_gaussian(p + "." + name + ".lora_a", {in, rank}, rng, 0.02);
      l.bm = ps_.create(p + "." + name + ".lora_b", {rank, out});
    };
    adapt(blk.wq, "q");
    adapt(blk.wk, "k");
    adapt(blk.wv, "v");
    adapt(blk.wo, "o");
    adapt(blk.fc1, "fc1");
    adapt(blk.fc2, "fc2");
  }
  lora_rank_ = rank;
}

void Backbone::freeze_all() { ps_.freeze_prefix(""); }

}  // namespace memenc
