#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace memenc {

// Dense float64 tensor with reverse-mode autodiff. A Tensor is a cheap
// handle to a shared node; ops record the graph as they execute and
// backward() replays it in reverse topological order. Everything is
// single-threaded per graph and bit-reproducible: no broadcasting beyond
// the row-wise bias add, fixed loop orders, no fast-math.

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation

  // Recorded operation (empty op == leaf).
  std::string op;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;
  bool backward_done = false;  // set on a root once backward() ran

  std::int64_t numel() const;
  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int axis) const;
  int rank() const;
  std::int64_t numel() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();  // leaves only; bypasses the graph

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;              // scalar tensors
  double at(std::initializer_list<int> idx) const;

  bool is_leaf() const;
  const std::string& op() const;

  std::shared_ptr<TensorNode> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<TensorNode> node) { Tensor t; t.node_ = std::move(node); return t; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Snapshot of the recorded graph reachable from a root. topo_order is a
// valid evaluation order (parents strictly before consumers).
struct Graph {
  std::vector<TensorNode*> topo_order;
  static Graph from(const Tensor& root);
};

// Populates grads of every tensor that requires grad and is reachable
// from `loss`. Loss must be scalar; calling twice on the same root
// without rebuilding the graph is a StateError.
void backward(const Tensor& loss);

// While alive, newly created ops record no graph (outputs are plain
// leaves). Used for evaluation and feature caching.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// ---- elementwise and scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor tanh_op(const Tensor& x);
Tensor gelu(const Tensor& x);       // exact erf form x * Phi(x)
Tensor xlogx(const Tensor& x);      // x*ln(x) with 0*ln(0) := 0
Tensor clamp(const Tensor& x, double lo, double hi);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k]x[k,n]
Tensor add_bias(const Tensor& m, const Tensor& bias);     // [n,d]+[d] rowwise
Tensor transpose(const Tensor& a);                        // 2-D

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);   // 2-D only
Tensor mean_axis(const Tensor& x, int axis);  // 2-D only

// ---- structured ----
Tensor softmax(const Tensor& x, int axis);
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor rowwise_dot(const Tensor& a, const Tensor& b);     // [n,d],[n,d]->[n]
Tensor scale_rows(const Tensor& m, const Tensor& v);      // [n,d]*[n] rowwise
Tensor repeat_row(const Tensor& v, int n);                // [d]->[n,d]

// ---- sampling and pooling ----
// Grid is [H,W,C] row-major with align-corners convention: u=(-1,-1) is
// the (0,0) corner, u=(+1,+1) the (H-1,W-1) corner; u = (x,y) where x
// runs along W and y along H. Points outside [-1,1]^2 are a
// PreconditionError; callers clamp first.
Tensor bilinear_sample(const Tensor& grid, const Tensor& u);   // u: [2] -> [C]
Tensor grid_sample(const Tensor& grid, const Tensor& points);  // points: [N,2] -> [N,C]
Tensor avgmaxpool(const Tensor& grid);                         // [H,W,C] -> [2C]

// ---- composed ----
// Multi-head scaled-dot-product attention over a token matrix, built
// from the primitives above (slice/matmul/softmax/concat).
Tensor multihead_attention(const Tensor& x, const Tensor& wq, const Tensor& bq,
                           const Tensor& wk, const Tensor& bk, const Tensor& wv,
                           const Tensor& bv, const Tensor& wo, const Tensor& bo,
                           int heads);

}  // namespace memenc
