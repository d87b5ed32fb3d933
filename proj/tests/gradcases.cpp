// The gradient-check catalogue: one case per differentiable op plus a few
// composites that exercise shared-leaf accumulation. Each case reduces its
// output to a scalar through a fixed random weighting so finite differences
// see every output element.
#include "oracles.hpp"

#include <cmath>

namespace oracle {
namespace {

using memenc::CounterRng;
using memenc::Shape;
using memenc::Tensor;

std::vector<double> loss_weights(std::size_t n, std::uint64_t key) {
  CounterRng rng(777, "loss-w", key);
  std::vector<double> w(n);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

// sum(out * W) with W fixed per case; keyed so no two cases share weights.
Tensor weigh(const Tensor& out, std::uint64_t key) {
  const Tensor w = Tensor::from_data(out.shape(), loss_weights(static_cast<std::size_t>(out.numel()), key));
  return memenc::sum(memenc::mul(out, w));
}

std::vector<double> positive_sample(CounterRng& rng, const Shape& shape, int) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(0.1, 2.0);
  return v;
}

// Keeps every element at least 0.05 away from the clamp bounds at +-1 so the
// finite-difference step never crosses the kink.
std::vector<double> clamp_safe_sample(CounterRng& rng, const Shape& shape, int) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) {
    do {
      x = rng.uniform(-2.0, 2.0);
    } while (std::abs(std::abs(x) - 1.0) < 0.05);
  }
  return v;
}

// Separates the per-channel top two values so the max branch of the pool has
// a stable argmax under the h = 1e-5 probe.
std::vector<double> strict_max_sample(CounterRng& rng, const Shape& shape, int which) {
  std::vector<double> v = default_sample(rng, shape, which);
  const int c = shape[2];
  const int hw = shape[0] * shape[1];
  for (int ch = 0; ch < c; ++ch) {
    int arg = 0;
    double best = v[static_cast<std::size_t>(ch)], second = -1e300;
    for (int i = 0; i < hw; ++i) {
      const double x = v[static_cast<std::size_t>(i) * c + ch];
      if (x > best) {
        second = best;
        best = x;
        arg = i;
      } else if (x > second) {
        second = x;
      }
    }
    if (best - second < 1e-3) v[static_cast<std::size_t>(arg) * c + ch] += 0.01;
  }
  return v;
}

// Sampling locations kept in cell interiors: bilinear interpolation has
// derivative kinks on grid lines, which central differences cannot cross.
std::vector<double> interior_points(CounterRng& rng, int n, int h, int w) {
  std::vector<double> v(static_cast<std::size_t>(n) * 2);
  for (int i = 0; i < n; ++i) {
    const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - 1)));
    const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - 1)));
    v[static_cast<std::size_t>(i) * 2] = -1.0 + (cx + rng.uniform(0.1, 0.9)) * 2.0 / (w - 1);
    v[static_cast<std::size_t>(i) * 2 + 1] = -1.0 + (cy + rng.uniform(0.1, 0.9)) * 2.0 / (h - 1);
  }
  return v;
}

}  // namespace

std::vector<GradCase> gradient_cases() {
  using namespace memenc;
  std::vector<GradCase> cases;
  auto push = [&](std::string name, std::vector<Shape> shapes,
                  std::function<Tensor(const std::vector<Tensor>&)> fn,
                  decltype(GradCase::sample) sample = nullptr) {
    GradCase c;
    c.name = std::move(name);
    c.shapes = std::move(shapes);
    c.fn = std::move(fn);
    c.sample = std::move(sample);
    cases.push_back(std::move(c));
  };

  push("add", {{3, 4}, {3, 4}},
       [](const std::vector<Tensor>& t) { return weigh(add(t[0], t[1]), 1); });
  push("sub", {{3, 4}, {3, 4}},
       [](const std::vector<Tensor>& t) { return weigh(sub(t[0], t[1]), 2); });
  push("mul", {{3, 4}, {3, 4}},
       [](const std::vector<Tensor>& t) { return weigh(mul(t[0], t[1]), 3); });
  push("add_scalar", {{5}},
       [](const std::vector<Tensor>& t) { return weigh(add_scalar(t[0], 1.3), 4); });
  push("mul_scalar", {{5}},
       [](const std::vector<Tensor>& t) { return weigh(mul_scalar(t[0], -0.7), 5); });
  push("tanh", {{7}}, [](const std::vector<Tensor>& t) { return weigh(tanh_op(t[0]), 6); });
  push("gelu", {{7}}, [](const std::vector<Tensor>& t) { return weigh(gelu(t[0]), 7); });
  push("xlogx", {{6}}, [](const std::vector<Tensor>& t) { return weigh(xlogx(t[0]), 8); },
       positive_sample);
  push("clamp", {{8}},
       [](const std::vector<Tensor>& t) { return weigh(clamp(t[0], -1.0, 1.0), 9); },
       clamp_safe_sample);

  push("matmul", {{3, 4}, {4, 2}},
       [](const std::vector<Tensor>& t) { return weigh(matmul(t[0], t[1]), 10); });
  push("add_bias", {{4, 3}, {3}},
       [](const std::vector<Tensor>& t) { return weigh(add_bias(t[0], t[1]), 11); });
  push("transpose", {{3, 5}},
       [](const std::vector<Tensor>& t) { return weigh(transpose(t[0]), 12); });

  push("reshape", {{2, 6}},
       [](const std::vector<Tensor>& t) { return weigh(reshape(t[0], {3, 4}), 13); });
  push("concat_axis0", {{2, 3}, {1, 3}, {2, 3}}, [](const std::vector<Tensor>& t) {
    return weigh(concat({t[0], t[1], t[2]}, 0), 14);
  });
  push("concat_axis1", {{3, 2}, {3, 1}}, [](const std::vector<Tensor>& t) {
    return weigh(concat({t[0], t[1]}, 1), 15);
  });
  push("slice_axis0", {{4, 5}},
       [](const std::vector<Tensor>& t) { return weigh(slice(t[0], 0, 1, 2), 16); });
  push("slice_axis1", {{4, 5}},
       [](const std::vector<Tensor>& t) { return weigh(slice(t[0], 1, 2, 3), 17); });

  push("sum", {{3, 3}}, [](const std::vector<Tensor>& t) { return sum(t[0]); });
  push("mean", {{3, 3}}, [](const std::vector<Tensor>& t) { return mean(t[0]); });
  push("sum_axis0", {{3, 4}},
       [](const std::vector<Tensor>& t) { return weigh(sum_axis(t[0], 0), 18); });
  push("sum_axis1", {{3, 4}},
       [](const std::vector<Tensor>& t) { return weigh(sum_axis(t[0], 1), 19); });
  push("mean_axis0", {{3, 4}},
       [](const std::vector<Tensor>& t) { return weigh(mean_axis(t[0], 0), 20); });
  push("mean_axis1", {{3, 4}},
       [](const std::vector<Tensor>& t) { return weigh(mean_axis(t[0], 1), 21); });

  push("softmax_axis1", {{3, 5}},
       [](const std::vector<Tensor>& t) { return weigh(softmax(t[0], 1), 22); });
  push("softmax_axis0", {{4, 3}},
       [](const std::vector<Tensor>& t) { return weigh(softmax(t[0], 0), 23); });
  push("layernorm", {{4, 6}, {6}, {6}}, [](const std::vector<Tensor>& t) {
    return weigh(layernorm(t[0], t[1], t[2]), 24);
  });
  push("embedding", {{7, 3}}, [](const std::vector<Tensor>& t) {
    return weigh(embedding(t[0], {2, 0, 6, 2}), 25);
  });
  push("rowwise_dot", {{4, 3}, {4, 3}},
       [](const std::vector<Tensor>& t) { return weigh(rowwise_dot(t[0], t[1]), 26); });
  push("scale_rows", {{4, 3}, {4}},
       [](const std::vector<Tensor>& t) { return weigh(scale_rows(t[0], t[1]), 27); });
  push("repeat_row", {{5}},
       [](const std::vector<Tensor>& t) { return weigh(repeat_row(t[0], 3), 28); });

  push(
      "bilinear_sample", {{4, 5, 2}, {2}},
      [](const std::vector<Tensor>& t) { return weigh(bilinear_sample(t[0], t[1]), 29); },
      [](CounterRng& rng, const Shape& shape, int which) {
        if (which == 0) return default_sample(rng, shape, which);
        return interior_points(rng, 1, 4, 5);
      });
  push(
      "grid_sample", {{5, 4, 3}, {6, 2}},
      [](const std::vector<Tensor>& t) { return weigh(grid_sample(t[0], t[1]), 30); },
      [](CounterRng& rng, const Shape& shape, int which) {
        if (which == 0) return default_sample(rng, shape, which);
        return interior_points(rng, 6, 5, 4);
      });
  push("avgmaxpool", {{3, 4, 2}},
       [](const std::vector<Tensor>& t) { return weigh(avgmaxpool(t[0]), 31); },
       strict_max_sample);

  push("attention", {{4, 8}, {8, 8}, {8}, {8, 8}, {8}, {8, 8}, {8}, {8, 8}, {8}},
       [](const std::vector<Tensor>& t) {
         return weigh(multihead_attention(t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7], t[8], 2),
                      32);
       });

  // Shared-leaf accumulation: x feeds two branches that later recombine.
  push("diamond", {{3, 3}, {3, 3}, {3, 3}}, [](const std::vector<Tensor>& t) {
    const Tensor left = mul(t[0], t[1]);
    const Tensor right = matmul(t[0], t[2]);
    return weigh(add(left, right), 33);
  });
  // A transformer-flavoured chain to catch interactions between ops.
  push("mlp_chain", {{4, 6}, {6, 6}, {6}, {6}, {6}}, [](const std::vector<Tensor>& t) {
    const Tensor z = gelu(add_bias(matmul(t[0], t[1]), t[2]));
    const Tensor n = layernorm(z, t[3], t[4]);
    return weigh(softmax(n, 1), 34);
  });

  return cases;
}

}  // namespace oracle
