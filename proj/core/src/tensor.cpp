#include "memenc/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "memenc/error.hpp"

namespace memenc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

thread_local int g_no_grad_depth = 0;

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

void check_shape_valid(const Shape& s) {
  for (int d : s) {
    if (d <= 0) throw ShapeError("invalid dimension in shape " + shape_str(s));
  }
}

bool node_wants_grad(const TensorNode& n) {
  return n.requires_grad || static_cast<bool>(n.backward_fn);
}

// Accumulate g into parent's grad buffer if the parent participates in
// differentiation.
void accum(TensorNode& parent, const std::vector<double>& g) {
  if (!node_wants_grad(parent)) return;
  parent.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
}

struct OpBuilder {
  std::string name;
  Shape out_shape;
  std::vector<Tensor> inputs;

  Tensor make(std::vector<double> values,
              std::function<void(TensorNode&, std::vector<TensorNode*>&)> bw) const {
    auto node = std::make_shared<TensorNode>();
    node->shape = out_shape;
    node->data = std::move(values);
    bool track = grad_enabled();
    bool any_grad = false;
    if (track) {
      for (const Tensor& t : inputs) {
        if (t.node() && node_wants_grad(*t.node())) { any_grad = true; break; }
      }
    }
    if (track && any_grad) {
      node->op = name;
      node->requires_grad = true;
      for (const Tensor& t : inputs) node->parents.push_back(t.node());
      node->backward_fn = [fn = std::move(bw)](TensorNode& self) {
        std::vector<TensorNode*> ps;
        ps.reserve(self.parents.size());
        for (auto& p : self.parents) ps.push_back(p.get());
        fn(self, ps);
      };
    }
    return Tensor::wrap(std::move(node));
  }
};

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

double gauss_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)); }

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::int64_t TensorNode::numel() const { return shape_numel(shape); }

void TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape_valid(shape);
  auto node = std::make_shared<TensorNode>();
  node->data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->data.begin(), t.node()->data.end(), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape_valid(shape);
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("from_data: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::dim(int axis) const { return node_->shape.at(static_cast<std::size_t>(axis)); }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
std::int64_t Tensor::numel() const { return node_->numel(); }

const std::vector<double>& Tensor::data() const { return node_->data; }

std::vector<double>& Tensor::mutable_data() {
  if (!is_leaf()) throw StateError("mutable_data: tensor is an op output, not a leaf");
  return node_->data;
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (!is_leaf() && !value) throw StateError("cannot drop grad on an op output");
  node_->requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw StateError("grad accessed before backward populated it");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
  return node_->data[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size()) throw ShapeError("at: rank mismatch for " + shape_str(s));
  std::int64_t flat = 0;
  std::size_t k = 0;
  for (int i : idx) {
    if (i < 0 || i >= s[k]) throw ShapeError("at: index out of range in " + shape_str(s));
    flat = flat * s[k] + i;
    ++k;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

bool Tensor::is_leaf() const { return node_->op.empty(); }
const std::string& Tensor::op() const { return node_->op; }

Graph Graph::from(const Tensor& root) {
  Graph g;
  if (!root.defined()) return g;
  // Iterative post-order DFS; parents end up before consumers.
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      g.topo_order.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw StateError("backward: undefined tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  TensorNode* root = loss.node().get();
  if (!node_wants_grad(*root)) {
    throw StateError("backward: loss is not connected to any tracked tensor");
  }
  if (root->backward_done) {
    throw StateError("backward: already ran on this graph; rebuild it before calling again");
  }
  root->backward_done = true;

  Graph g = Graph::from(loss);
  root->ensure_grad();
  root->grad[0] += 1.0;
  // Reverse topological order: every consumer runs before its inputs.
  for (auto it = g.topo_order.rbegin(); it != g.topo_order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

// ---------------------------------------------------------------------------
// elementwise

namespace {

Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double),
                          void (*bwd)(double ga, double x, double y, double& da, double& db)) {
  require_same_shape(name, a, b);
  const auto& xa = a.data();
  const auto& xb = b.data();
  std::vector<double> out(xa.size());
  for (std::size_t i = 0; i < xa.size(); ++i) out[i] = fwd(xa[i], xb[i]);
  OpBuilder op{name, a.shape(), {a, b}};
  return op.make(std::move(out), [bwd](TensorNode& self, std::vector<TensorNode*>& ps) {
    const auto& xa = ps[0]->data;
    const auto& xb = ps[1]->data;
    std::vector<double> da(xa.size()), db(xb.size());
    for (std::size_t i = 0; i < xa.size(); ++i) bwd(self.grad[i], xa[i], xb[i], da[i], db[i]);
    accum(*ps[0], da);
    accum(*ps[1], db);
  });
}

Tensor unary_elementwise(const char* name, const Tensor& x, double (*fwd)(double),
                         double (*dfdx_from)(double x, double y)) {
  const auto& xs = x.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = fwd(xs[i]);
  OpBuilder op{name, x.shape(), {x}};
  return op.make(std::move(out), [dfdx_from](TensorNode& self, std::vector<TensorNode*>& ps) {
    const auto& xs = ps[0]->data;
    std::vector<double> dx(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      dx[i] = self.grad[i] * dfdx_from(xs[i], self.data[i]);
    }
    accum(*ps[0], dx);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double x, double y, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  const auto& xs = a.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] + s;
  OpBuilder op{"add_scalar", a.shape(), {a}};
  return op.make(std::move(out), [](TensorNode& self, std::vector<TensorNode*>& ps) {
    accum(*ps[0], self.grad);
  });
}

Tensor mul_scalar(const Tensor& a, double s) {
  const auto& xs = a.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] * s;
  OpBuilder op{"mul_scalar", a.shape(), {a}};
  return op.make(std::move(out), [s](TensorNode& self, std::vector<TensorNode*>& ps) {
    std::vector<double> dx(self.grad.size());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = self.grad[i] * s;
    accum(*ps[0], dx);
  });
}

Tensor tanh_op(const Tensor& x) {
  return unary_elementwise(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& x) {
  return unary_elementwise(
      "gelu", x, [](double v) { return v * norm_cdf(v); },
      [](double v, double) { return norm_cdf(v) + v * gauss_pdf(v); });
}

Tensor xlogx(const Tensor& x) {
  return unary_elementwise(
      "xlogx", x, [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; },
      [](double v, double) { return v > 0.0 ? std::log(v) + 1.0 : 0.0; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lo > hi");
  const auto& xs = x.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = std::min(std::max(xs[i], lo), hi);
  OpBuilder op{"clamp", x.shape(), {x}};
  return op.make(std::move(out), [lo, hi](TensorNode& self, std::vector<TensorNode*>& ps) {
    const auto& xs = ps[0]->data;
    std::vector<double> dx(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      dx[i] = (xs[i] > lo && xs[i] < hi) ? self.grad[i] : 0.0;
    }
    accum(*ps[0], dx);
  });
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  {
    ConstMatMap A(a.data().data(), m, k);
    ConstMatMap B(b.data().data(), k, n);
    MatMap C(out.data(), m, n);
    C.noalias() = A * B;
  }
  OpBuilder op{"matmul", {m, n}, {a, b}};
  return op.make(std::move(out), [m, k, n](TensorNode& self, std::vector<TensorNode*>& ps) {
    ConstMatMap G(self.grad.data(), m, n);
    ConstMatMap A(ps[0]->data.data(), m, k);
    ConstMatMap B(ps[1]->data.data(), k, n);
    if (node_wants_grad(*ps[0])) {
      ps[0]->ensure_grad();
      MatMap(ps[0]->grad.data(), m, k).noalias() += G * B.transpose();
    }
    if (node_wants_grad(*ps[1])) {
      ps[1]->ensure_grad();
      MatMap(ps[1]->grad.data(), k, n).noalias() += A.transpose() * G;
    }
  });
}

Tensor add_bias(const Tensor& m, const Tensor& bias) {
  if (m.rank() != 2 || bias.rank() != 1 || m.dim(1) != bias.dim(0)) {
    throw ShapeError("add_bias: incompatible shapes " + shape_str(m.shape()) + " + " +
                     shape_str(bias.shape()));
  }
  const int rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(m.data());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(i) * cols + j] += bias.data()[j];
  OpBuilder op{"add_bias", m.shape(), {m, bias}};
  return op.make(std::move(out), [rows, cols](TensorNode& self, std::vector<TensorNode*>& ps) {
    accum(*ps[0], self.grad);
    if (node_wants_grad(*ps[1])) {
      ps[1]->ensure_grad();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          ps[1]->grad[j] += self.grad[static_cast<std::size_t>(i) * cols + j];
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected 2-D, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = a.data()[static_cast<std::size_t>(i) * n + j];
  OpBuilder op{"transpose", {n, m}, {a}};
  return op.make(std::move(out), [m, n](TensorNode& self, std::vector<TensorNode*>& ps) {
    if (!node_wants_grad(*ps[0])) return;
    ps[0]->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        ps[0]->grad[static_cast<std::size_t>(i) * n + j] +=
            self.grad[static_cast<std::size_t>(j) * m + i];
  });
}

// ---------------------------------------------------------------------------
// shape ops

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape_valid(shape);
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  OpBuilder op{"reshape", shape, {x}};
  return op.make(std::vector<double>(x.data()),
                 [](TensorNode& self, std::vector<TensorNode*>& ps) { accum(*ps[0], self.grad); });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  const int rank = static_cast<int>(s0.size());
  if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != rank) {
      throw ShapeError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
    }
    for (int d = 0; d < rank; ++d) {
      if (d != axis && s[d] != s0[d]) {
        throw ShapeError("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(s));
      }
    }
    out_shape[axis] += s[axis];
  }
  // outer: product of dims before axis; inner: product after.
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  for (int d = axis + 1; d < rank; ++d) inner *= s0[d];

  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const std::int64_t out_axis_stride = out_shape[axis] * inner;
  std::int64_t offset_in_axis = 0;
  for (const Tensor& p : parts) {
    const std::int64_t len = p.dim(axis) * inner;
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().begin() + o * len, len,
                  out.begin() + o * out_axis_stride + offset_in_axis * inner);
    }
    offset_in_axis += p.dim(axis);
  }
  OpBuilder op{"concat", out_shape, parts};
  return op.make(std::move(out), [outer, inner, out_axis_stride](TensorNode& self,
                                                                 std::vector<TensorNode*>& ps) {
    std::int64_t offset = 0;
    for (TensorNode* p : ps) {
      const std::int64_t axis_len = p->numel() / (outer * inner);
      const std::int64_t len = axis_len * inner;
      if (node_wants_grad(*p)) {
        p->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * out_axis_stride + offset * inner;
          double* dst = p->grad.data() + o * len;
          for (std::int64_t i = 0; i < len; ++i) dst[i] += src[i];
        }
      }
      offset += axis_len;
    }
  });
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  const Shape& s = x.shape();
  const int rank = static_cast<int>(s.size());
  if (axis < 0 || axis >= rank) throw ShapeError("slice: bad axis");
  if (start < 0 || len <= 0 || start + len > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[axis] = len;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (int d = axis + 1; d < rank; ++d) inner *= s[d];
  const std::int64_t in_axis_stride = s[axis] * inner;
  const std::int64_t out_len = len * inner;

  std::vector<double> out(static_cast<std::size_t>(outer * out_len));
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().begin() + o * in_axis_stride + start * inner, out_len,
                out.begin() + o * out_len);
  }
  OpBuilder op{"slice", out_shape, {x}};
  return op.make(std::move(out), [outer, inner, in_axis_stride, start, out_len](
                                     TensorNode& self, std::vector<TensorNode*>& ps) {
    if (!node_wants_grad(*ps[0])) return;
    ps[0]->ensure_grad();
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* src = self.grad.data() + o * out_len;
      double* dst = ps[0]->grad.data() + o * in_axis_stride + start * inner;
      for (std::int64_t i = 0; i < out_len; ++i) dst[i] += src[i];
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  OpBuilder op{"sum", {1}, {x}};
  return op.make({acc}, [](TensorNode& self, std::vector<TensorNode*>& ps) {
    if (!node_wants_grad(*ps[0])) return;
    ps[0]->ensure_grad();
    const double g = self.grad[0];
    for (double& d : ps[0]->grad) d += g;
  });
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  OpBuilder op{"mean", {1}, {x}};
  return op.make({acc * inv}, [inv](TensorNode& self, std::vector<TensorNode*>& ps) {
    if (!node_wants_grad(*ps[0])) return;
    ps[0]->ensure_grad();
    const double g = self.grad[0] * inv;
    for (double& d : ps[0]->grad) d += g;
  });
}

namespace {

Tensor reduce_axis_2d(const char* name, const Tensor& x, int axis, bool take_mean) {
  if (x.rank() != 2) throw ShapeError(std::string(name) + ": expected 2-D, got " + shape_str(x.shape()));
  if (axis != 0 && axis != 1) throw ShapeError(std::string(name) + ": bad axis");
  const int rows = x.dim(0), cols = x.dim(1);
  const int out_len = axis == 0 ? cols : rows;
  const double scale = take_mean ? 1.0 / static_cast<double>(axis == 0 ? rows : cols) : 1.0;
  std::vector<double> out(static_cast<std::size_t>(out_len), 0.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out[axis == 0 ? j : i] += x.data()[static_cast<std::size_t>(i) * cols + j];
  if (take_mean)
    for (double& v : out) v *= scale;
  OpBuilder op{name, {out_len}, {x}};
  return op.make(std::move(out), [rows, cols, axis, scale](TensorNode& self,
                                                           std::vector<TensorNode*>& ps) {
    if (!node_wants_grad(*ps[0])) return;
    ps[0]->ensure_grad();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        ps[0]->grad[static_cast<std::size_t>(i) * cols + j] +=
            self.grad[axis == 0 ? j : i] * scale;
  });
}

}  // namespace

Tensor sum_axis(const Tensor& x, int axis) { return reduce_axis_2d("sum_axis", x, axis, false); }
Tensor mean_axis(const Tensor& x, int axis) { return reduce_axis_2d("mean_axis", x, axis, true); }

// ---------------------------------------------------------------------------
// structured ops

Tensor softmax(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  const int rank = static_cast<int>(s.size());
  if (axis < 0 || axis >= rank) throw ShapeError("softmax: bad axis for " + shape_str(s));
  const std::int64_t n = s[axis];
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (int d = axis + 1; d < rank; ++d) inner *= s[d];

  std::vector<double> out(x.data().size());
  const auto& xs = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      double mx = xs[base];
      for (std::int64_t k = 1; k < n; ++k) mx = std::max(mx, xs[base + k * inner]);
      if (!std::isfinite(mx)) throw NumericError("softmax: non-finite input");
      double denom = 0.0;
      for (std::int64_t k = 0; k < n; ++k) {
        const double e = std::exp(xs[base + k * inner] - mx);
        out[base + k * inner] = e;
        denom += e;
      }
      for (std::int64_t k = 0; k < n; ++k) out[base + k * inner] /= denom;
    }
  }
  OpBuilder op{"softmax", s, {x}};
  return op.make(std::move(out), [outer, inner, n](TensorNode& self,
                                                   std::vector<TensorNode*>& ps) {
    if (!node_wants_grad(*ps[0])) return;
    ps[0]->ensure_grad();
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::int64_t k = 0; k < n; ++k)
          dot += self.grad[base + k * inner] * self.data[base + k * inner];
        for (std::int64_t k = 0; k < n; ++k) {
          const std::int64_t idx = base + k * inner;
          ps[0]->grad[idx] += self.data[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("layernorm: scalar input");
  const int d = s.back();
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
    throw ShapeError("layernorm: affine params " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match feature dim of " + shape_str(s));
  }
  if (!(eps > 0.0)) throw ConfigError("layernorm: eps must be positive");
  const std::int64_t rows = x.numel() / d;
  std::vector<double> out(x.data().size());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  std::vector<double> xhat(x.data().size());
  const auto& xs = x.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (int j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gamma.data()[j] + beta.data()[j];
    }
  }
  OpBuilder op{"layernorm", s, {x, gamma, beta}};
  return op.make(std::move(out), [rows, d, inv_std = std::move(inv_std),
                                  xhat = std::move(xhat)](TensorNode& self,
                                                          std::vector<TensorNode*>& ps) {
    TensorNode& xn = *ps[0];
    TensorNode& gn = *ps[1];
    TensorNode& bn = *ps[2];
    const std::vector<double>& g = self.grad;
    if (node_wants_grad(gn)) {
      gn.ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) gn.grad[j] += g[r * d + j] * xhat[r * d + j];
    }
    if (node_wants_grad(bn)) {
      bn.ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) bn.grad[j] += g[r * d + j];
    }
    if (node_wants_grad(xn)) {
      xn.ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;  // mean(gy), mean(gy*xhat)
        for (int j = 0; j < d; ++j) {
          const double gy = g[r * d + j] * gn.data[j];
          m1 += gy;
          m2 += gy * xhat[r * d + j];
        }
        m1 /= d;
        m2 /= d;
        const double is = inv_std[static_cast<std::size_t>(r)];
        for (int j = 0; j < d; ++j) {
          const double gy = g[r * d + j] * gn.data[j];
          xn.grad[r * d + j] += is * (gy - m1 - xhat[r * d + j] * m2);
        }
      }
    }
  });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be 2-D");
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= v) throw LookupError("embedding: row " + std::to_string(id) +
                                             " out of table " + shape_str(table.shape()));
  }
  const int n = static_cast<int>(ids.size());
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    std::copy_n(table.data().begin() + static_cast<std::size_t>(ids[i]) * d, d,
                out.begin() + static_cast<std::size_t>(i) * d);
  OpBuilder op{"embedding", {n, d}, {table}};
  return op.make(std::move(out), [ids, d](TensorNode& self, std::vector<TensorNode*>& ps) {
    if (!node_wants_grad(*ps[0])) return;
    ps[0]->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < d; ++j)
        ps[0]->grad[static_cast<std::size_t>(ids[i]) * d + j] += self.grad[i * d + j];
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_same_shape("rowwise_dot", a, b);
  if (a.rank() != 2) throw ShapeError("rowwise_dot: expected 2-D, got " + shape_str(a.shape()));
  const int n = a.dim(0), d = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[i] += a.data()[static_cast<std::size_t>(i) * d + j] *
                b.data()[static_cast<std::size_t>(i) * d + j];
  OpBuilder op{"rowwise_dot", {n}, {a, b}};
  return op.make(std::move(out), [n, d](TensorNode& self, std::vector<TensorNode*>& ps) {
    for (int side = 0; side < 2; ++side) {
      TensorNode& dst = *ps[side];
      TensorNode& other = *ps[1 - side];
      if (!node_wants_grad(dst)) continue;
      dst.ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          dst.grad[static_cast<std::size_t>(i) * d + j] +=
              self.grad[i] * other.data[static_cast<std::size_t>(i) * d + j];
    }
  });
}

Tensor scale_rows(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.dim(0) != v.dim(0)) {
    throw ShapeError("scale_rows: incompatible shapes " + shape_str(m.shape()) + " * " +
                     shape_str(v.shape()));
  }
  const int n = m.dim(0), d = m.dim(1);
  std::vector<double> out(m.data().size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i) * d + j] =
          m.data()[static_cast<std::size_t>(i) * d + j] * v.data()[i];
  OpBuilder op{"scale_rows", m.shape(), {m, v}};
  return op.make(std::move(out), [n, d](TensorNode& self, std::vector<TensorNode*>& ps) {
    if (node_wants_grad(*ps[0])) {
      ps[0]->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          ps[0]->grad[static_cast<std::size_t>(i) * d + j] +=
              self.grad[static_cast<std::size_t>(i) * d + j] * ps[1]->data[i];
    }
    if (node_wants_grad(*ps[1])) {
      ps[1]->ensure_grad();
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j)
          acc += self.grad[static_cast<std::size_t>(i) * d + j] *
                 ps[0]->data[static_cast<std::size_t>(i) * d + j];
        ps[1]->grad[i] += acc;
      }
    }
  });
}

Tensor repeat_row(const Tensor& v, int n) {
  if (v.rank() != 1) throw ShapeError("repeat_row: expected 1-D, got " + shape_str(v.shape()));
  if (n <= 0) throw ShapeError("repeat_row: n must be positive");
  const int d = v.dim(0);
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) std::copy_n(v.data().begin(), d, out.begin() + static_cast<std::size_t>(i) * d);
  OpBuilder op{"repeat_row", {n, d}, {v}};
  return op.make(std::move(out), [n, d](TensorNode& self, std::vector<TensorNode*>& ps) {
    if (!node_wants_grad(*ps[0])) return;
    ps[0]->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        ps[0]->grad[j] += self.grad[static_cast<std::size_t>(i) * d + j];
  });
}

// ---------------------------------------------------------------------------
// sampling / pooling

namespace {

struct CellCoord {
  int i0, j0;       // low corner
  double fx, fy;    // fractions along W and H
};

// Align-corners cell lookup; x along W, y along H. Right/bottom edges use
// the last interior cell so the in-cell derivative stays defined.
CellCoord locate(double ux, double uy, int h, int w) {
  const double gx = (ux + 1.0) * 0.5 * (w - 1);
  const double gy = (uy + 1.0) * 0.5 * (h - 1);
  CellCoord c;
  c.j0 = w >= 2 ? std::min(static_cast<int>(std::floor(gx)), w - 2) : 0;
  c.i0 = h >= 2 ? std::min(static_cast<int>(std::floor(gy)), h - 2) : 0;
  c.fx = w >= 2 ? gx - c.j0 : 0.0;
  c.fy = h >= 2 ? gy - c.i0 : 0.0;
  return c;
}

void check_grid(const Tensor& grid) {
  if (grid.rank() != 3) {
    throw ShapeError("sample: grid must be [H,W,C], got " + shape_str(grid.shape()));
  }
}

void check_point_range(double ux, double uy) {
  if (!(ux >= -1.0 && ux <= 1.0 && uy >= -1.0 && uy <= 1.0)) {
    throw PreconditionError("sample: point (" + std::to_string(ux) + "," + std::to_string(uy) +
                            ") outside [-1,1]^2");
  }
}

}  // namespace

Tensor grid_sample(const Tensor& grid, const Tensor& points) {
  check_grid(grid);
  if (points.rank() != 2 || points.dim(1) != 2) {
    throw ShapeError("grid_sample: points must be [N,2], got " + shape_str(points.shape()));
  }
  const int h = grid.dim(0), w = grid.dim(1), ch = grid.dim(2), n = points.dim(0);
  std::vector<double> out(static_cast<std::size_t>(n) * ch);
  const auto& gd = grid.data();
  for (int p = 0; p < n; ++p) {
    const double ux = points.data()[static_cast<std::size_t>(p) * 2];
    const double uy = points.data()[static_cast<std::size_t>(p) * 2 + 1];
    check_point_range(ux, uy);
    const CellCoord c = locate(ux, uy, h, w);
    const int i1 = h >= 2 ? c.i0 + 1 : c.i0;
    const int j1 = w >= 2 ? c.j0 + 1 : c.j0;
    const double w00 = (1 - c.fy) * (1 - c.fx), w01 = (1 - c.fy) * c.fx;
    const double w10 = c.fy * (1 - c.fx), w11 = c.fy * c.fx;
    const double* g00 = gd.data() + (static_cast<std::size_t>(c.i0) * w + c.j0) * ch;
    const double* g01 = gd.data() + (static_cast<std::size_t>(c.i0) * w + j1) * ch;
    const double* g10 = gd.data() + (static_cast<std::size_t>(i1) * w + c.j0) * ch;
    const double* g11 = gd.data() + (static_cast<std::size_t>(i1) * w + j1) * ch;
    double* o = out.data() + static_cast<std::size_t>(p) * ch;
    for (int k = 0; k < ch; ++k) o[k] = w00 * g00[k] + w01 * g01[k] + w10 * g10[k] + w11 * g11[k];
  }
  OpBuilder op{"grid_sample", {n, ch}, {grid, points}};
  return op.make(std::move(out), [h, w, ch, n](TensorNode& self, std::vector<TensorNode*>& ps) {
    TensorNode& gn = *ps[0];
    TensorNode& pn = *ps[1];
    const bool want_grid = node_wants_grad(gn);
    const bool want_pts = node_wants_grad(pn);
    if (want_grid) gn.ensure_grad();
    if (want_pts) pn.ensure_grad();
    for (int p = 0; p < n; ++p) {
      const double ux = pn.data[static_cast<std::size_t>(p) * 2];
      const double uy = pn.data[static_cast<std::size_t>(p) * 2 + 1];
      const CellCoord c = locate(ux, uy, h, w);
      const int i1 = h >= 2 ? c.i0 + 1 : c.i0;
      const int j1 = w >= 2 ? c.j0 + 1 : c.j0;
      const double w00 = (1 - c.fy) * (1 - c.fx), w01 = (1 - c.fy) * c.fx;
      const double w10 = c.fy * (1 - c.fx), w11 = c.fy * c.fx;
      const std::size_t b00 = (static_cast<std::size_t>(c.i0) * w + c.j0) * ch;
      const std::size_t b01 = (static_cast<std::size_t>(c.i0) * w + j1) * ch;
      const std::size_t b10 = (static_cast<std::size_t>(i1) * w + c.j0) * ch;
      const std::size_t b11 = (static_cast<std::size_t>(i1) * w + j1) * ch;
      const double* g = self.grad.data() + static_cast<std::size_t>(p) * ch;
      if (want_grid) {
        for (int k = 0; k < ch; ++k) {
          gn.grad[b00 + k] += g[k] * w00;
          gn.grad[b01 + k] += g[k] * w01;
          gn.grad[b10 + k] += g[k] * w10;
          gn.grad[b11 + k] += g[k] * w11;
        }
      }
      if (want_pts) {
        double dx = 0.0, dy = 0.0;
        for (int k = 0; k < ch; ++k) {
          const double v00 = gn.data[b00 + k], v01 = gn.data[b01 + k];
          const double v10 = gn.data[b10 + k], v11 = gn.data[b11 + k];
          dx += g[k] * ((1 - c.fy) * (v01 - v00) + c.fy * (v11 - v10));
          dy += g[k] * ((1 - c.fx) * (v10 - v00) + c.fx * (v11 - v01));
        }
        pn.grad[static_cast<std::size_t>(p) * 2] += dx * 0.5 * (w - 1);
        pn.grad[static_cast<std::size_t>(p) * 2 + 1] += dy * 0.5 * (h - 1);
      }
    }
  });
}

Tensor bilinear_sample(const Tensor& grid, const Tensor& u) {
  check_grid(grid);
  if (u.rank() != 1 || u.dim(0) != 2) {
    throw ShapeError("bilinear_sample: u must be [2], got " + shape_str(u.shape()));
  }
  Tensor pts = reshape(u, {1, 2});
  Tensor sampled = grid_sample(grid, pts);
  return reshape(sampled, {grid.dim(2)});
}

Tensor avgmaxpool(const Tensor& grid) {
  check_grid(grid);
  const int h = grid.dim(0), w = grid.dim(1), ch = grid.dim(2);
  const int hw = h * w;
  std::vector<double> out(static_cast<std::size_t>(2) * ch);
  std::vector<int> argmax(static_cast<std::size_t>(ch), 0);
  const auto& gd = grid.data();
  for (int k = 0; k < ch; ++k) {
    double acc = 0.0;
    double best = gd[k];
    int best_idx = 0;
    for (int s = 0; s < hw; ++s) {
      const double v = gd[static_cast<std::size_t>(s) * ch + k];
      acc += v;
      if (v > best) {  // strict: ties keep the first row-major element
        best = v;
        best_idx = s;
      }
    }
    out[k] = acc / hw;
    out[ch + k] = best;
    argmax[k] = best_idx;
  }
  OpBuilder op{"avgmaxpool", {2 * ch}, {grid}};
  return op.make(std::move(out), [hw, ch, argmax = std::move(argmax)](
                                     TensorNode& self, std::vector<TensorNode*>& ps) {
    if (!node_wants_grad(*ps[0])) return;
    ps[0]->ensure_grad();
    for (int k = 0; k < ch; ++k) {
      const double ga = self.grad[k] / hw;
      for (int s = 0; s < hw; ++s) ps[0]->grad[static_cast<std::size_t>(s) * ch + k] += ga;
      ps[0]->grad[static_cast<std::size_t>(argmax[k]) * ch + k] += self.grad[ch + k];
    }
  });
}

// ---------------------------------------------------------------------------
// composed

Tensor multihead_attention(const Tensor& x, const Tensor& wq, const Tensor& bq,
                           const Tensor& wk, const Tensor& bk, const Tensor& wv,
                           const Tensor& bv, const Tensor& wo, const Tensor& bo, int heads) {
  if (x.rank() != 2) throw ShapeError("attention: tokens must be 2-D");
  const int d = x.dim(1);
  if (heads <= 0 || d % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const int dh = d / heads;
  Tensor q = add_bias(matmul(x, wq), bq);
  Tensor k = add_bias(matmul(x, wk), bk);
  Tensor v = add_bias(matmul(x, wv), bv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int hh = 0; hh < heads; ++hh) {
    Tensor qh = slice(q, 1, hh * dh, dh);
    Tensor kh = slice(k, 1, hh * dh, dh);
    Tensor vh = slice(v, 1, hh * dh, dh);
    Tensor scores = mul_scalar(matmul(qh, transpose(kh)), scale);
    Tensor attn = softmax(scores, 1);
    head_outs.push_back(matmul(attn, vh));
  }
  Tensor merged = concat(head_outs, 1);
  return add_bias(matmul(merged, wo), bo);
}

}  // namespace memenc
