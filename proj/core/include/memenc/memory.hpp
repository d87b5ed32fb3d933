#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "memenc/backbone.hpp"
#include "memenc/nn.hpp"
#include "memenc/tensor.hpp"

namespace memenc {

struct MemoryConfig {
  int t_mem = 32;       // window length ("previous 32 frames")
  int te_octaves = 6;   // raw sinusoid dims = 2 * octaves
  int d_t = 24;         // time embedding after per-subject linear
  int d_qbar = 32;      // per-frame compressed vector
  int d_m = 64;         // final memory feature
  int frame_hidden = 64;
  int agg_hidden = 128;

  void validate() const;
};

// One trial's lookback. Frames run oldest first (lags -T_mem..-1); an
// undefined Tensor marks a padded blank slot (an all-zero image as far as
// the backbone is concerned).
struct MemoryWindow {
  std::vector<Tensor> frames;
  Tensor conditions;  // [T_mem, cond_dim]
  std::vector<bool> blank_mask;

  void validate(int t_mem) const;
};

// Content-addressed class-token cache keyed by (image hash, backbone weight
// hash). Exact mode re-hashes the weights on every lookup; Epoch mode trusts
// the hash captured at the last refresh(), which bounds staleness to one
// epoch during LoRA training.
class TokenCache {
 public:
  enum class Mode { Exact, Epoch };

  explicit TokenCache(Mode mode = Mode::Epoch) : mode_(mode) {}

  void set_mode(Mode mode) { mode_ = mode; }
  void refresh(const Backbone& bb);

  // Returns the class token as a fresh constant leaf [D'].
  Tensor token_for(const Tensor& image, const Backbone& bb);

  std::int64_t hits() const { return hits_; }
  std::int64_t misses() const { return misses_; }
  std::size_t size() const { return entries_.size(); }

  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  Mode mode_;
  std::string weight_hash_;
  std::unordered_map<std::string, std::vector<double>> entries_;
  std::int64_t hits_ = 0, misses_ = 0;
};

// Eq. (6): per-frame q_bar = MLP(q_t, e_t, t_check), aggregated by an MLP
// over the ordered concatenation of all T_mem frames.
class MemoryCompressor {
 public:
  MemoryCompressor() = default;
  MemoryCompressor(ParamStore& ps, const MemoryConfig& cfg, int backbone_width, int cond_dim,
                   int cond_embed_dim, int n_subjects, CounterRng& rng);

  const MemoryConfig& config() const { return cfg_; }

  // t in {-T_mem..-1}; returns [1, d_t]. Injective over the window because
  // the base octave is strictly monotone in |t|/T_mem.
  Tensor time_embed(int t, int subject) const;

  // Batched core: tokens [T*B, D'] and cond embeddings e [T*B, embed] laid
  // out trial-major (row b*T + t, oldest first), -> h_bar [B, d_m].
  Tensor compress_from_tokens(const Tensor& tokens, const Tensor& cond_embeds, int subject,
                              int batch) const;

  // Single-window convenience path used by tests and the public op.
  Tensor compress(const MemoryWindow& window, int subject, const Backbone& bb,
                  const CondEmbed& cond, TokenCache* cache = nullptr) const;

 private:
  Tensor te_rows(int subject) const;  // [T_mem, d_t], oldest first

  MemoryConfig cfg_;
  int n_subjects_ = 0;
  Tensor w_time_;  // [n_subjects, 2*octaves * d_t]
  MLP frame_mlp_;
  MLP agg_mlp_;
};

}  // namespace memenc
