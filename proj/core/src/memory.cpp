#include "memenc/memory.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numbers>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"
#include "memenc/hashing.hpp"

namespace memenc {

using nlohmann::json;

void MemoryConfig::validate() const {
  if (t_mem < 1) throw ConfigError("memory: t_mem must be >= 1");
  if (te_octaves < 1 || d_t < 1 || d_qbar < 1 || d_m < 1) {
    throw ConfigError("memory: dims must be positive");
  }
}

void MemoryWindow::validate(int t_mem) const {
  if (static_cast<int>(frames.size()) != t_mem ||
      static_cast<int>(blank_mask.size()) != t_mem) {
    throw ShapeError("memory window: expected " + std::to_string(t_mem) + " frames, got " +
                     std::to_string(frames.size()));
  }
  if (!conditions.defined() || conditions.rank() != 2 || conditions.dim(0) != t_mem) {
    throw ShapeError("memory window: conditions must be [" + std::to_string(t_mem) + ",d_c]");
  }
  for (int t = 0; t < t_mem; ++t) {
    if (blank_mask[static_cast<std::size_t>(t)] != !frames[static_cast<std::size_t>(t)].defined()) {
      throw StateError("memory window: blank_mask disagrees with frame slots");
    }
  }
}

void TokenCache::refresh(const Backbone& bb) { weight_hash_ = bb.params().weight_hash(); }

Tensor TokenCache::token_for(const Tensor& image, const Backbone& bb) {
  if (mode_ == Mode::Exact || weight_hash_.empty()) refresh(bb);
  const std::string key = sha256_hex_f64(image.data()) + ":" + weight_hash_;
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    ++misses_;
    NoGradGuard ng;
    Tensor cls = bb.forward(image).cls;
    it = entries_.emplace(key, cls.data()).first;
  } else {
    ++hits_;
  }
  return Tensor::from_data({static_cast<int>(it->second.size())},
                           std::vector<double>(it->second));
}

void TokenCache::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  // Deterministic layout: entries sorted by key.
  std::vector<std::pair<std::string, const std::vector<double>*>> sorted;
  sorted.reserve(entries_.size());
  for (const auto& [k, v] : entries_) sorted.emplace_back(k, &v);
  std::sort(sorted.begin(), sorted.end());

  json manifest;
  manifest["format"] = "memenc-tokens-v1";
  manifest["entries"] = json::array();
  std::vector<double> blob;
  for (const auto& [k, v] : sorted) {
    json e;
    e["key"] = k;
    e["offset"] = blob.size();
    e["dim"] = v->size();
    manifest["entries"].push_back(std::move(e));
    blob.insert(blob.end(), v->begin(), v->end());
  }
  write_f64_blob(dir / "tokens.bin", blob);
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

void TokenCache::load(const std::filesystem::path& dir) {
  json manifest = json::parse(read_text_file(dir / "manifest.json"));
  if (manifest.value("format", "") != "memenc-tokens-v1") {
    throw IoError(dir.string() + ": not a token cache");
  }
  std::vector<double> blob = read_f64_blob(dir / "tokens.bin");
  entries_.clear();
  for (const json& e : manifest.at("entries")) {
    const std::size_t off = e.at("offset").get<std::size_t>();
    const std::size_t dim = e.at("dim").get<std::size_t>();
    if (off + dim > blob.size()) throw IoError("token cache: manifest overruns blob");
    entries_.emplace(e.at("key").get<std::string>(),
                     std::vector<double>(blob.begin() + static_cast<std::ptrdiff_t>(off),
                                         blob.begin() + static_cast<std::ptrdiff_t>(off + dim)));
  }
}

MemoryCompressor::MemoryCompressor(ParamStore& ps, const MemoryConfig& cfg, int backbone_width,
                                   int cond_dim, int cond_embed_dim, int n_subjects,
                                   CounterRng& rng)
    : cfg_(cfg), n_subjects_(n_subjects) {
  (void)cond_dim;
  cfg_.validate();
  const int raw = 2 * cfg_.te_octaves;
  w_time_ = ps.create_gaussian("mem.w_time", {n_subjects, raw * cfg_.d_t}, rng,
                               1.0 / std::sqrt(static_cast<double>(raw)));
  const int frame_in = backbone_width + cond_embed_dim + cfg_.d_t;
  frame_mlp_ = MLP(ps, "mem.frame", {frame_in, cfg_.frame_hidden, cfg_.d_qbar}, rng);
  agg_mlp_ = MLP(ps, "mem.agg", {cfg_.t_mem * cfg_.d_qbar, cfg_.agg_hidden, cfg_.d_m}, rng);
}

namespace {

std::vector<double> te_raw(int t, int t_mem, int octaves) {
  if (t < -t_mem || t > -1) {
    throw PreconditionError("time_embed: lag " + std::to_string(t) + " outside [-" +
                            std::to_string(t_mem) + ",-1]");
  }
  const double tn = static_cast<double>(-t) / t_mem;
  std::vector<double> row(static_cast<std::size_t>(2 * octaves));
  for (int k = 0; k < octaves; ++k) {
    const double arg = std::ldexp(std::numbers::pi, k) * tn;
    row[static_cast<std::size_t>(2 * k)] = std::sin(arg);
    row[static_cast<std::size_t>(2 * k) + 1] = std::cos(arg);
  }
  return row;
}

}  // namespace

Tensor MemoryCompressor::time_embed(int t, int subject) const {
  if (subject < 0 || subject >= n_subjects_) {
    throw LookupError("time_embed: unknown subject " + std::to_string(subject));
  }
  const int raw = 2 * cfg_.te_octaves;
  Tensor te = Tensor::from_data({1, raw}, te_raw(t, cfg_.t_mem, cfg_.te_octaves));
  Tensor ws = reshape(slice(w_time_, 0, subject, 1), {raw, cfg_.d_t});
  return matmul(te, ws);
}

Tensor MemoryCompressor::te_rows(int subject) const {
  const int raw = 2 * cfg_.te_octaves;
  std::vector<double> rows;
  rows.reserve(static_cast<std::size_t>(cfg_.t_mem * raw));
  for (int t = -cfg_.t_mem; t <= -1; ++t) {
    auto r = te_raw(t, cfg_.t_mem, cfg_.te_octaves);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  Tensor te = Tensor::from_data({cfg_.t_mem, raw}, std::move(rows));
  Tensor ws = reshape(slice(w_time_, 0, subject, 1), {raw, cfg_.d_t});
  return matmul(te, ws);
}

Tensor MemoryCompressor::compress_from_tokens(const Tensor& tokens, const Tensor& cond_embeds,
                                              int subject, int batch) const {
  if (batch < 1) throw ShapeError("compress: batch must be >= 1");
  const int rows = cfg_.t_mem * batch;
  if (tokens.rank() != 2 || tokens.dim(0) != rows) {
    throw ShapeError("compress: tokens must be [" + std::to_string(rows) + ",D'], got " +
                     shape_str(tokens.shape()));
  }
  if (cond_embeds.rank() != 2 || cond_embeds.dim(0) != rows) {
    throw ShapeError("compress: cond embeddings row count mismatch");
  }
  Tensor te = te_rows(subject);  // [T, d_t]
  Tensor te_tiled = te;
  if (batch > 1) {
    std::vector<Tensor> copies(static_cast<std::size_t>(batch), te);
    te_tiled = concat(copies, 0);
  }
  Tensor in = concat({tokens, cond_embeds, te_tiled}, 1);
  Tensor qbar = frame_mlp_.forward(in);  // [T*B, d_qbar]
  Tensor qcat = reshape(qbar, {batch, cfg_.t_mem * cfg_.d_qbar});
  return agg_mlp_.forward(qcat);  // [B, d_m]
}

Tensor MemoryCompressor::compress(const MemoryWindow& window, int subject, const Backbone& bb,
                                  const CondEmbed& cond, TokenCache* cache) const {
  window.validate(cfg_.t_mem);
  const int w = bb.config().width;
  Tensor blank_image;
  std::vector<Tensor> token_rows;
  token_rows.reserve(static_cast<std::size_t>(cfg_.t_mem));
  for (int t = 0; t < cfg_.t_mem; ++t) {
    Tensor img = window.frames[static_cast<std::size_t>(t)];
    if (!img.defined()) {
      if (!blank_image.defined()) {
        blank_image = Tensor::zeros({bb.config().image_size, bb.config().image_size, 3});
      }
      img = blank_image;
    }
    Tensor tok;
    if (cache) {
      tok = cache->token_for(img, bb);
    } else {
      NoGradGuard ng;
      tok = Tensor::from_data({w}, bb.forward(img).cls.data());
    }
    token_rows.push_back(reshape(tok, {1, w}));
  }
  Tensor tokens = concat(token_rows, 0);
  Tensor e = cond.embed_memory(window.conditions, subject);
  return reshape(compress_from_tokens(tokens, e, subject, 1), {cfg_.d_m});
}

}  // namespace memenc
