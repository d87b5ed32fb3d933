#include "memenc/model.hpp"

#include <algorithm>
#include <numeric>

#include "memenc/error.hpp"
#include "memenc/hashing.hpp"

namespace memenc {

void ModelConfig::validate() const {
  backbone.validate();
  memory.validate();
  if (backbone_mode != "frozen" && backbone_mode != "lora" && backbone_mode != "full") {
    throw ConfigError("model: backbone_mode must be frozen|lora|full, got '" + backbone_mode +
                      "'");
  }
  if (backbone_mode == "lora" && backbone.lora_rank < 1) {
    throw ConfigError("model: lora mode needs backbone.lora_rank >= 1");
  }
  if (heads.d_fuse < 1 || heads.sigma < 0.0) throw ConfigError("model: bad heads config");
}

std::string InputMask::describe() const {
  std::string s;
  switch (frames) {
    case Frames::All: s = "all"; break;
    case Frames::CurrentOnly: s = "current-only"; break;
    case Frames::SingleLag: s = "single-lag(" + std::to_string(lag) + ")"; break;
    case Frames::ShuffledTime: s = "shuffled"; break;
  }
  if (condM) s += "+condM";
  if (condB) s += "+condB";
  if (condT) s += "+condT";
  return s;
}

void FeatureCache::refresh(const Backbone& bb) { weight_hash_ = bb.params().weight_hash(); }

const FeatureCache::Entry& FeatureCache::entry_for(const Tensor& image, const Backbone& bb) {
  if (mode_ == Mode::Exact || weight_hash_.empty()) refresh(bb);
  const std::string key = sha256_hex_f64(image.data()) + ":" + weight_hash_;
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    ++misses_;
    NoGradGuard ng;
    BackboneOutput out = bb.forward(image);
    Entry e;
    for (int j = 0; j < 4; ++j) e.taps[static_cast<std::size_t>(j)] =
        out.taps[static_cast<std::size_t>(j)].data();
    e.cls = out.cls.data();
    it = entries_.emplace(key, std::move(e)).first;
  } else {
    ++hits_;
  }
  return it->second;
}

namespace {

// Modulation-free frozen path is exact only while the AdaLN maps and LoRA
// deltas sit at their zero init; recipes that train them must run live or
// refresh per epoch.
constexpr const char* kLoraDefaultNote = "";

}  // namespace

EncodingModel::EncodingModel(const ModelConfig& cfg, const VoxelSet& voxels)
    : cfg_(cfg),
      voxels_(voxels),
      backbone_([&] {
        BackboneConfig bc = cfg.backbone;
        bc.lora_rank = 0;  // applied below so the bases freeze first
        return bc;
      }(), cfg.seed) {
  (void)kLoraDefaultNote;
  cfg_.validate();
  voxels_.validate();

  if (cfg_.backbone_mode == "frozen") {
    backbone_.freeze_all();
    // The memory/conditioning pathway stays trainable.
    for (const auto& item : backbone_.params().items()) {
      if (item.name.rfind("cond.", 0) == 0) {
        Tensor t = item.tensor;
        t.set_requires_grad(true);
      }
    }
  } else if (cfg_.backbone_mode == "lora") {
    backbone_.freeze_all();
    for (const auto& item : backbone_.params().items()) {
      const bool modulation = item.name.find(".mod") != std::string::npos;
      const bool conditioning = item.name.rfind("cond.", 0) == 0;
      if (modulation || conditioning) {
        Tensor t = item.tensor;
        t.set_requires_grad(true);
      }
    }
    backbone_.apply_lora(cfg_.backbone.lora_rank);
  }

  CounterRng rng(cfg_.effective_head_seed(), "heads");
  retina_ = RetinaMapper(head_ps_, cfg_.heads, rng);
  selector_ = LayerSelector(head_ps_, cfg_.heads, rng);
  fuser_ = FeatureFuser(head_ps_, cfg_.backbone.width, cfg_.heads, rng);
  compressor_ = MemoryCompressor(head_ps_, cfg_.memory, cfg_.backbone.width,
                                 cfg_.backbone.cond_dim, cfg_.backbone.embed_dim,
                                 cfg_.backbone.n_subjects, rng);
  const int d_total = cfg_.heads.d_fuse + (cfg_.memory_enabled ? cfg_.memory.d_m : 0);
  readout_ = VoxelReadout(head_ps_, "readout", voxels_.n_voxels, d_total, rng);
  pe_ = positional_encode(voxels_.coords, cfg_.heads.pe_octaves);
}

std::vector<Tensor> EncodingModel::trainable_params() const {
  std::vector<Tensor> out = backbone_.params().trainable();
  std::vector<Tensor> heads = head_ps_.trainable();
  out.insert(out.end(), heads.begin(), heads.end());
  return out;
}

Tensor EncodingModel::masked_conditions(const Dataset& ds, int trial,
                                        const InputMask& mask) const {
  auto c = ds.conditions[static_cast<std::size_t>(trial)];
  if (mask.frames == InputMask::Frames::SingleLag ||
      mask.frames == InputMask::Frames::ShuffledTime) {
    c.fill(0.0);  // lag probes isolate the stimulus pathway
  } else {
    if (mask.condM) c[0] = c[1] = 0.0;
    if (mask.condB) c[2] = c[3] = 0.0;
    if (mask.condT) c[4] = c[5] = 0.0;
  }
  return Tensor::from_data({1, kCondDim}, std::vector<double>(c.begin(), c.end()));
}

EncodingModel::TrialFeatures EncodingModel::current_features(const Dataset& ds, int trial,
                                                             const ForwardOptions& opt,
                                                             const Tensor& zero_image) {
  Tensor image;
  switch (opt.mask.frames) {
    case InputMask::Frames::All:
    case InputMask::Frames::CurrentOnly:
      image = ds.images[static_cast<std::size_t>(trial)];
      break;
    case InputMask::Frames::SingleLag:
      image = ds.frame_at(trial, opt.mask.lag);
      if (!image.defined()) image = zero_image;
      break;
    case InputMask::Frames::ShuffledTime: {
      if (shuffle_map_.empty() || shuffle_map_seed_ != opt.mask.shuffle_seed ||
          static_cast<int>(shuffle_map_.size()) != ds.n_trials()) {
        // Seeded derangement: shuffle the trial list, then shift by one along
        // the shuffled cycle so no trial keeps its own image.
        const int n = ds.n_trials();
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        CounterRng rng(opt.mask.shuffle_seed, "shuffle");
        for (int k = n; k > 1; --k) {
          std::swap(order[static_cast<std::size_t>(k - 1)],
                    order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(k)))]);
        }
        shuffle_map_.assign(static_cast<std::size_t>(n), 0);
        for (int k = 0; k < n; ++k) {
          shuffle_map_[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] =
              order[static_cast<std::size_t>((k + 1) % n)];
        }
        shuffle_map_seed_ = opt.mask.shuffle_seed;
      }
      image = ds.images[static_cast<std::size_t>(shuffle_map_[static_cast<std::size_t>(trial)])];
      break;
    }
  }

  TrialFeatures out;
  if (opt.use_cache) {
    const FeatureCache::Entry& e = cache_.entry_for(image, backbone_);
    const int g = cfg_.backbone.grid_side();
    for (int j = 0; j < 4; ++j) {
      out.taps[static_cast<std::size_t>(j)] = Tensor::from_data(
          {g, g, cfg_.backbone.width}, std::vector<double>(e.taps[static_cast<std::size_t>(j)]));
    }
    out.cls = Tensor::from_data({cfg_.backbone.width}, std::vector<double>(e.cls));
  } else {
    Tensor e_cur;
    if (cfg_.backbone.adaln_enabled) {
      e_cur = backbone_.cond().embed(masked_conditions(ds, trial, opt.mask),
                                     ds.subject_of[static_cast<std::size_t>(trial)]);
    }
    BackboneOutput bo = backbone_.forward(image, e_cur);
    out.taps = bo.taps;
    out.cls = bo.cls;
  }
  return out;
}

Tensor EncodingModel::memory_feature(const Dataset& ds, const std::vector<int>& trials,
                                     const ForwardOptions& opt, const Tensor& zero_image) {
  const int b = static_cast<int>(trials.size());
  const int t_mem = cfg_.memory.t_mem;
  const int w = cfg_.backbone.width;

  if (opt.mask.frames != InputMask::Frames::All) {
    return Tensor::zeros({b, cfg_.memory.d_m});  // masked memory is exactly zero
  }

  // Group the batch by subject so the per-subject parameter slices batch.
  std::vector<std::pair<int, int>> subj_of;  // (subject, position in batch)
  subj_of.reserve(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    subj_of.emplace_back(ds.subject_of[static_cast<std::size_t>(trials[static_cast<std::size_t>(i)])],
                         i);
  }
  std::stable_sort(subj_of.begin(), subj_of.end());

  std::vector<Tensor> rows_by_batch_pos(static_cast<std::size_t>(b));
  std::size_t start = 0;
  while (start < subj_of.size()) {
    std::size_t end = start;
    while (end < subj_of.size() && subj_of[end].first == subj_of[start].first) ++end;
    const int subject = subj_of[start].first;
    const int group_n = static_cast<int>(end - start);

    std::vector<Tensor> token_rows;
    token_rows.reserve(static_cast<std::size_t>(group_n * t_mem));
    std::vector<double> conds(static_cast<std::size_t>(group_n * t_mem) * kCondDim, 0.0);
    for (int gi = 0; gi < group_n; ++gi) {
      const int trial = trials[static_cast<std::size_t>(subj_of[start + gi].second)];
      const std::vector<int> ids = window_trial_ids(ds, trial, t_mem);
      for (int k = 0; k < t_mem; ++k) {
        const int id = ids[static_cast<std::size_t>(k)];
        Tensor img = id < 0 ? zero_image : ds.images[static_cast<std::size_t>(id)];
        Tensor tok;
        if (opt.use_cache) {
          const FeatureCache::Entry& e = cache_.entry_for(img, backbone_);
          tok = Tensor::from_data({1, w}, std::vector<double>(e.cls));
        } else {
          tok = reshape(backbone_.forward(img).cls, {1, w});
        }
        token_rows.push_back(std::move(tok));
        if (id >= 0) {
          auto c = ds.conditions[static_cast<std::size_t>(id)];
          if (opt.mask.condM) c[0] = c[1] = 0.0;
          if (opt.mask.condB) c[2] = c[3] = 0.0;
          if (opt.mask.condT) c[4] = c[5] = 0.0;
          for (int j = 0; j < kCondDim; ++j) {
            conds[(static_cast<std::size_t>(gi) * t_mem + k) * kCondDim + j] = c[static_cast<std::size_t>(j)];
          }
        }
      }
    }
    Tensor tokens = concat(token_rows, 0);  // [group_n * t_mem, w]
    Tensor cond_mat = Tensor::from_data({group_n * t_mem, kCondDim}, std::move(conds));
    Tensor e = backbone_.cond().embed_memory(cond_mat, subject);
    Tensor h = compressor_.compress_from_tokens(tokens, e, subject, group_n);  // [group_n, d_m]
    for (int gi = 0; gi < group_n; ++gi) {
      rows_by_batch_pos[static_cast<std::size_t>(subj_of[start + gi].second)] =
          slice(h, 0, gi, 1);
    }
    start = end;
  }
  return concat(rows_by_batch_pos, 0);  // [b, d_m]
}

BatchOutput EncodingModel::forward_batch(const Dataset& ds, const std::vector<int>& trials,
                                         const ForwardOptions& opt) {
  if (trials.empty()) throw PreconditionError("forward_batch: empty trial list");
  const int n = voxels_.n_voxels;
  const Tensor zero_image =
      Tensor::zeros({cfg_.backbone.image_size, cfg_.backbone.image_size, 3});

  Tensor u = retina_.forward(pe_);
  Tensor eta = selector_.forward(pe_);
  Tensor jitter;
  if (opt.train_mode && cfg_.heads.sigma > 0.0) {
    CounterRng jrng(cfg_.effective_head_seed(), "jitter", static_cast<std::uint64_t>(opt.step));
    jitter = make_jitter(n, cfg_.heads.sigma, jrng);
  }

  Tensor h_mem;  // [B, d_m]
  if (cfg_.memory_enabled) h_mem = memory_feature(ds, trials, opt, zero_image);

  std::vector<Tensor> preds;
  preds.reserve(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    TrialFeatures feats = current_features(ds, trials[i], opt, zero_image);
    Tensor h_tilde = fuser_.fuse(feats.taps, u, eta, jitter);
    Tensor feat = h_tilde;
    if (cfg_.memory_enabled) {
      Tensor h_row = reshape(slice(h_mem, 0, static_cast<int>(i), 1), {cfg_.memory.d_m});
      feat = concat({h_tilde, repeat_row(h_row, n)}, 1);
    }
    preds.push_back(readout_.forward(feat));
  }
  BatchOutput out;
  out.pred = preds.size() == 1 ? preds[0] : concat(preds, 0);
  out.eta = eta;
  return out;
}

std::vector<double> EncodingModel::predict(const Dataset& ds, const std::vector<int>& trials,
                                           const InputMask& mask, bool use_cache) {
  NoGradGuard ng;
  ForwardOptions opt;
  opt.train_mode = false;
  opt.mask = mask;
  opt.use_cache = use_cache;
  std::vector<double> out;
  out.reserve(trials.size() * static_cast<std::size_t>(voxels_.n_voxels));
  // Chunk to keep eval graphs small.
  const std::size_t chunk = 32;
  for (std::size_t i = 0; i < trials.size(); i += chunk) {
    std::vector<int> part(trials.begin() + static_cast<std::ptrdiff_t>(i),
                          trials.begin() + static_cast<std::ptrdiff_t>(
                                               std::min(i + chunk, trials.size())));
    BatchOutput bo = forward_batch(ds, part, opt);
    out.insert(out.end(), bo.pred.data().begin(), bo.pred.data().end());
  }
  return out;
}

Tensor EncodingModel::routing_u() const {
  NoGradGuard ng;
  return retina_.forward(pe_);
}

Tensor EncodingModel::routing_eta() const {
  NoGradGuard ng;
  return selector_.forward(pe_);
}

std::vector<double> EncodingModel::snapshot() const {
  std::vector<double> flat = backbone_.params().snapshot();
  std::vector<double> heads = head_ps_.snapshot();
  flat.insert(flat.end(), heads.begin(), heads.end());
  return flat;
}

void EncodingModel::restore(const std::vector<double>& flat) {
  const std::size_t nb = static_cast<std::size_t>(backbone_.params().total_params());
  const std::size_t nh = static_cast<std::size_t>(head_ps_.total_params());
  if (flat.size() != nb + nh) throw ShapeError("model restore: snapshot size mismatch");
  backbone_.params().restore(std::vector<double>(flat.begin(),
                                                 flat.begin() + static_cast<std::ptrdiff_t>(nb)));
  head_ps_.restore(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(nb),
                                       flat.end()));
}

void EncodingModel::save(const std::filesystem::path& dir) const {
  backbone_.params().save(dir / "backbone");
  head_ps_.save(dir / "heads");
}

void EncodingModel::load(const std::filesystem::path& dir) {
  backbone_.params().load(dir / "backbone");
  head_ps_.load(dir / "heads");
  refresh_caches();
}

void EncodingModel::refresh_caches() { cache_.refresh(backbone_); }

}  // namespace memenc
