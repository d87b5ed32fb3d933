#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "memenc/error.hpp"
#include "memenc/rng.hpp"
#include "memenc/tensor.hpp"
#include "oracles.hpp"

using namespace memenc;

TEST_CASE("gradient checks pass per op") {
  for (const oracle::GradCase& c : oracle::gradient_cases()) {
    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
      CAPTURE(c.name);
      CAPTURE(seed);
      CHECK(oracle::check_case(c, seed) <= 1e-4);
    }
  }
}

TEST_CASE("bilinear sampling matches the brute-force oracle") {
  CounterRng rng(401, "bilinear");
  for (int i = 0; i < 25; ++i) {
    const int h = 2 + static_cast<int>(rng.below(5));
    const int w = 2 + static_cast<int>(rng.below(5));
    const int c = 1 + static_cast<int>(rng.below(3));
    std::vector<double> g(static_cast<std::size_t>(h) * w * c);
    for (double& v : g) v = rng.uniform(-2.0, 2.0);
    const double x = rng.uniform(-1.0, 1.0);
    const double y = rng.uniform(-1.0, 1.0);
    const Tensor grid = Tensor::from_data({h, w, c}, g);
    const Tensor u = Tensor::from_data({2}, {x, y});
    const Tensor out = bilinear_sample(grid, u);
    const std::vector<double> want = oracle::bilinear(g, h, w, c, x, y);
    for (int ch = 0; ch < c; ++ch)
      CHECK(std::abs(out.data()[static_cast<std::size_t>(ch)] -
                     want[static_cast<std::size_t>(ch)]) <= 1e-12);
  }
}

TEST_CASE("avgmaxpool matches the brute-force oracle") {
  CounterRng rng(402, "pool");
  for (int i = 0; i < 25; ++i) {
    const int h = 1 + static_cast<int>(rng.below(5));
    const int w = 1 + static_cast<int>(rng.below(5));
    const int c = 1 + static_cast<int>(rng.below(4));
    std::vector<double> g(static_cast<std::size_t>(h) * w * c);
    for (double& v : g) v = rng.uniform(-3.0, 3.0);
    const Tensor out = avgmaxpool(Tensor::from_data({h, w, c}, g));
    const std::vector<double> want = oracle::avgmaxpool(g, h, w, c);
    REQUIRE(out.numel() == 2 * c);
    for (int k = 0; k < 2 * c; ++k)
      CHECK(std::abs(out.data()[static_cast<std::size_t>(k)] -
                     want[static_cast<std::size_t>(k)]) <= 1e-12);
  }
}

TEST_CASE("softmax matches the brute-force oracle row by row") {
  CounterRng rng(403, "softmax");
  for (int i = 0; i < 25; ++i) {
    const int n = 1 + static_cast<int>(rng.below(4));
    const int d = 2 + static_cast<int>(rng.below(6));
    std::vector<double> x(static_cast<std::size_t>(n) * d);
    for (double& v : x) v = rng.uniform(-8.0, 8.0);
    const Tensor out = softmax(Tensor::from_data({n, d}, x), 1);
    for (int r = 0; r < n; ++r) {
      const std::vector<double> row(x.begin() + static_cast<std::ptrdiff_t>(r) * d,
                                    x.begin() + static_cast<std::ptrdiff_t>(r + 1) * d);
      const std::vector<double> want = oracle::softmax(row);
      for (int j = 0; j < d; ++j)
        CHECK(std::abs(out.data()[static_cast<std::size_t>(r) * d + j] -
                       want[static_cast<std::size_t>(j)]) <= 1e-12);
    }
  }
}

TEST_CASE("xlogx pins 0 log 0 to zero with zero gradient") {
  const Tensor x = Tensor::from_data({3}, {0.0, 1.0, 2.0}, true);
  const Tensor y = xlogx(x);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == doctest::Approx(0.0));
  backward(sum(y));
  CHECK(x.grad()[0] == 0.0);  // defined subgradient at the pinned point
  CHECK(x.grad()[1] == doctest::Approx(1.0));
  CHECK(x.grad()[2] == doctest::Approx(std::log(2.0) + 1.0));
}

TEST_CASE("shape and state errors") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(concat({a, Tensor::zeros({2, 2})}, 0), ShapeError);
  CHECK_THROWS_AS(slice(a, 1, 2, 5), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2}).item(), ShapeError);

  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), StateError);

  const Tensor grid = Tensor::from_data({2, 2, 1}, {1.0, 2.0, 3.0, 4.0});
  CHECK_THROWS_AS(bilinear_sample(grid, Tensor::from_data({2}, {1.5, 0.0})), PreconditionError);
  CHECK_THROWS_AS(grid_sample(grid, Tensor::from_data({1, 2}, {0.0, -1.001})), PreconditionError);
}

TEST_CASE("backward accumulates across reuse of the same leaf") {
  // y = x.x + sum(x) => dy/dx_i = 2 x_i + 1
  Tensor x = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  Tensor y = add(sum(mul(x, x)), sum(x));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(3.0));
  CHECK(x.grad()[1] == doctest::Approx(-3.0));
  CHECK(x.grad()[2] == doctest::Approx(2.0));
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    Tensor y = mul(x, x);
    CHECK(y.is_leaf());
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
  CHECK_FALSE(mul(x, x).is_leaf());
}

TEST_CASE("clamp passes gradient only through the interior") {
  Tensor x = Tensor::from_data({4}, {-2.0, -0.5, 0.5, 2.0}, true);
  backward(sum(clamp(x, -1.0, 1.0)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);
  CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("embedding backward accumulates repeated ids") {
  Tensor table = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(embedding(table, {1, 1, 0})));
  CHECK(table.grad()[0] == 1.0);  // id 0 used once
  CHECK(table.grad()[2] == 2.0);  // id 1 used twice
  CHECK(table.grad()[4] == 0.0);  // id 2 unused
  CHECK_THROWS_AS(embedding(table, {3}), LookupError);
}

TEST_CASE("grid_sample gradients flow into both grid and points") {
  std::vector<double> g(5 * 4 * 2);
  CounterRng rng(405, "gs");
  for (double& v : g) v = rng.uniform(-1.0, 1.0);
  Tensor grid = Tensor::from_data({5, 4, 2}, g, true);
  Tensor pts = Tensor::from_data({2, 2}, {0.21, -0.37, -0.55, 0.12}, true);
  backward(sum(grid_sample(grid, pts)));
  REQUIRE(grid.has_grad());
  REQUIRE(pts.has_grad());
  double grid_mass = 0.0;
  for (double v : grid.grad()) grid_mass += std::abs(v);
  CHECK(grid_mass > 0.0);
}
