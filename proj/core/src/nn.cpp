#include "memenc/nn.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"
#include "memenc/hashing.hpp"

namespace memenc {

using nlohmann::json;

Tensor ParamStore::create(const std::string& name, Shape shape, double fill) {
  if (index_.count(name)) throw ConfigError("parameter '" + name + "' already registered");
  Tensor t = Tensor::full(std::move(shape), fill, /*requires_grad=*/true);
  index_[name] = items_.size();
  items_.push_back({name, t});
  return t;
}

Tensor ParamStore::create_gaussian(const std::string& name, Shape shape, CounterRng& rng,
                                   double stddev) {
  Tensor t = create(name, std::move(shape));
  for (double& v : t.mutable_data()) v = rng.gaussian(0.0, stddev);
  return t;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter '" + name + "'");
  return items_[it->second].tensor;
}

std::int64_t ParamStore::total_params() const {
  std::int64_t n = 0;
  for (const Item& it : items_) n += it.tensor.numel();
  return n;
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const Item& it : items_)
    if (it.tensor.requires_grad()) out.push_back(it.tensor);
  return out;
}

void ParamStore::freeze_prefix(const std::string& prefix) {
  for (Item& it : items_) {
    if (it.name.rfind(prefix, 0) == 0) it.tensor.set_requires_grad(false);
  }
}

void ParamStore::zero_grads() {
  for (Item& it : items_) it.tensor.zero_grad();
}

std::string ParamStore::weight_hash() const {
  Sha256 h;
  for (const Item& it : items_) {
    h.update(it.name);
    h.update("\0", 1);
    h.update(shape_str(it.tensor.shape()));
    h.update("\0", 1);
    h.update_f64(it.tensor.data());
  }
  return h.hex();
}

std::vector<double> ParamStore::snapshot() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(total_params()));
  for (const Item& it : items_)
    flat.insert(flat.end(), it.tensor.data().begin(), it.tensor.data().end());
  return flat;
}

void ParamStore::restore(const std::vector<double>& flat) {
  if (static_cast<std::int64_t>(flat.size()) != total_params()) {
    throw ShapeError("restore: snapshot has " + std::to_string(flat.size()) +
                     " values, store holds " + std::to_string(total_params()));
  }
  std::size_t off = 0;
  for (Item& it : items_) {
    auto& data = it.tensor.node()->data;
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), data.size(), data.begin());
    off += data.size();
  }
}

void ParamStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format"] = "memenc-params-v1";
  manifest["params"] = json::array();
  std::int64_t offset = 0;
  for (const Item& it : items_) {
    json p;
    p["name"] = it.name;
    p["shape"] = it.tensor.shape();
    p["offset"] = offset;
    p["frozen"] = !it.tensor.requires_grad();
    manifest["params"].push_back(std::move(p));
    offset += it.tensor.numel();
  }
  write_f64_blob(dir / "weights.bin", snapshot());
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

void ParamStore::load(const std::filesystem::path& dir) {
  json manifest = json::parse(read_text_file(dir / "manifest.json"));
  if (manifest.value("format", "") != "memenc-params-v1") {
    throw IoError(dir.string() + ": not a parameter checkpoint");
  }
  const auto& plist = manifest.at("params");
  if (plist.size() != items_.size()) {
    throw ShapeError("checkpoint has " + std::to_string(plist.size()) + " params, store has " +
                     std::to_string(items_.size()));
  }
  std::vector<double> flat = read_f64_blob(dir / "weights.bin", total_params());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const json& p = plist[i];
    if (p.at("name").get<std::string>() != items_[i].name ||
        p.at("shape").get<Shape>() != items_[i].tensor.shape()) {
      throw ShapeError("checkpoint layout mismatch at '" + items_[i].name + "'");
    }
  }
  restore(flat);
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int in, int out, CounterRng& rng) {
  if (in <= 0 || out <= 0) throw ConfigError(prefix + ": non-positive layer dims");
  w = ps.create_gaussian(prefix + ".w", {in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  b = ps.create(prefix + ".b", {out});
}

Tensor Linear::forward(const Tensor& x) const { return add_bias(matmul(x, w), b); }

LinearLoRA::LinearLoRA(ParamStore& ps, const std::string& prefix, int in, int out, int rank,
                       CounterRng& rng) {
  if (rank <= 0 || rank >= std::min(in, out)) {
    throw ConfigError(prefix + ": LoRA rank " + std::to_string(rank) +
                      " must sit strictly below min(" + std::to_string(in) + "," +
                      std::to_string(out) + ")");
  }
  w = ps.create_gaussian(prefix + ".w", {in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  b = ps.create(prefix + ".b", {out});
  a = ps.create_gaussian(prefix + ".lora_a", {in, rank}, rng, 0.02);
  bm = ps.create(prefix + ".lora_b", {rank, out});
}

Tensor LinearLoRA::effective_weight() const { return add(w, matmul(a, bm)); }

Tensor LinearLoRA::forward(const Tensor& x) const {
  return add_bias(matmul(x, effective_weight()), b);
}

MLP::MLP(ParamStore& ps, const std::string& prefix, const std::vector<int>& dims,
         CounterRng& rng, std::string act)
    : activation(std::move(act)) {
  if (dims.size() < 2) throw ConfigError(prefix + ": MLP needs at least in/out dims");
  if (activation != "gelu" && activation != "tanh") {
    throw ConfigError(prefix + ": unknown activation '" + activation + "'");
  }
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers.emplace_back(ps, prefix + ".l" + std::to_string(i), dims[i], dims[i + 1], rng);
  }
}

Tensor MLP::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = activation == "gelu" ? gelu(h) : tanh_op(h);
  }
  return h;
}

Adam::Adam(std::vector<Tensor> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].data().size(), 0.0);
    v_[i].assign(params_[i].data().size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;  // parameter untouched by this loss
    const auto& g = p.grad();
    auto& data = p.node()->data;
    for (std::size_t k = 0; k < data.size(); ++k) {
      m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g[k];
      v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      data[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  zero_grads();
}

void Adam::zero_grads() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace memenc
