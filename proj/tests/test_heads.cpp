#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "memenc/error.hpp"
#include "memenc/heads.hpp"
#include "memenc/rng.hpp"

using namespace memenc;

namespace {

Tensor random_coords(int n, std::uint64_t seed) {
  CounterRng rng(seed, "coords");
  std::vector<double> v(static_cast<std::size_t>(n) * 3);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data({n, 3}, v);
}

HeadsConfig small_heads() {
  HeadsConfig cfg;
  cfg.d_fuse = 12;
  cfg.mapper_hidden = 16;
  return cfg;
}

}  // namespace

TEST_CASE("positional encoding has the documented layout") {
  const Tensor p = Tensor::from_data({1, 3}, {0.25, -0.5, 1.0});
  const Tensor pe = positional_encode(p, 6);
  REQUIRE(pe.shape() == Shape{1, 36});
  // Axis 0, octave 0: sin(pi * 0.25), cos(pi * 0.25)
  CHECK(pe.at({0, 0}) == doctest::Approx(std::sin(M_PI * 0.25)));
  CHECK(pe.at({0, 1}) == doctest::Approx(std::cos(M_PI * 0.25)));
  // Axis 0, octave 2: sin(4 pi * 0.25) = sin(pi) ~ 0
  CHECK(pe.at({0, 4}) == doctest::Approx(0.0).epsilon(1e-9));
  // Deterministic pure function
  CHECK(positional_encode(p, 6).data() == pe.data());
}

TEST_CASE("retina mapper lands in the open unit square") {
  ParamStore ps;
  CounterRng rng(21, "heads");
  HeadsConfig cfg = small_heads();
  RetinaMapper mapper(ps, cfg, rng);
  const Tensor pe = positional_encode(random_coords(40, 3), cfg.pe_octaves);
  const Tensor u = mapper.forward(pe);
  REQUIRE(u.shape() == Shape{40, 2});
  for (double v : u.data()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("layer selector rows are distributions over 4 taps") {
  ParamStore ps;
  CounterRng rng(22, "heads");
  HeadsConfig cfg = small_heads();
  LayerSelector sel(ps, cfg, rng);
  const Tensor eta = sel.forward(positional_encode(random_coords(17, 4), cfg.pe_octaves));
  REQUIRE(eta.shape() == Shape{17, 4});
  for (int i = 0; i < 17; ++i) {
    double row = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double v = eta.at({i, j});
      CHECK(v > 0.0);
      row += v;
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("entropy_reg is minimized at the uniform distribution") {
  const Tensor uniform = Tensor::full({5, 4}, 0.25);
  const double at_uniform = entropy_reg(uniform).item();
  CHECK(at_uniform == doctest::Approx(-std::log(4.0)));

  std::vector<double> peaked(5 * 4, 0.01);
  for (int i = 0; i < 5; ++i) peaked[static_cast<std::size_t>(i) * 4] = 0.97;
  CHECK(entropy_reg(Tensor::from_data({5, 4}, peaked)).item() > at_uniform);
}

TEST_CASE("fuser blends taps by eta and is linear in the readout") {
  ParamStore ps;
  CounterRng rng(23, "heads");
  HeadsConfig cfg = small_heads();
  const int width = 8, n = 6;
  FeatureFuser fuser(ps, width, cfg, rng);

  std::array<Tensor, 4> taps;
  CounterRng trng(24, "taps");
  for (auto& t : taps) {
    std::vector<double> v(static_cast<std::size_t>(3) * 3 * width);
    for (double& x : v) x = trng.uniform(-1.0, 1.0);
    t = Tensor::from_data({3, 3, width}, v);
  }
  const Tensor u = Tensor::full({n, 2}, 0.1);

  // One-hot eta selects exactly one tap's contribution.
  std::vector<double> hot(static_cast<std::size_t>(n) * 4, 0.0);
  for (int i = 0; i < n; ++i) hot[static_cast<std::size_t>(i) * 4 + 2] = 1.0;
  const Tensor eta_hot = Tensor::from_data({n, 4}, hot);
  const Tensor h_hot = fuser.fuse(taps, u, eta_hot, Tensor{});
  REQUIRE(h_hot.shape() == Shape{n, cfg.d_fuse});

  // Scaling eta by 0.5 must halve the fused feature (Eq. 4 is a weighted sum).
  std::vector<double> half(hot);
  for (double& v : half) v *= 0.5;
  const Tensor h_half = fuser.fuse(taps, u, Tensor::from_data({n, 4}, half), Tensor{});
  for (std::size_t i = 0; i < h_hot.data().size(); ++i)
    CHECK(h_half.data()[i] == doctest::Approx(0.5 * h_hot.data()[i]).epsilon(1e-12));
}

TEST_CASE("voxel readout applies one regression per row") {
  ParamStore ps;
  CounterRng rng(25, "heads");
  VoxelReadout ro(ps, "readout", 3, 4, rng);
  const Tensor feat = Tensor::from_data({3, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
  const Tensor y = ro.forward(feat);
  REQUIRE(y.shape() == Shape{3});
  for (int v = 0; v < 3; ++v)
    CHECK(y.at({v}) == doctest::Approx(ro.w.at({v, v}) + ro.b.at({v})));
}

TEST_CASE("voxel set validation") {
  VoxelSet vs;
  vs.n_voxels = 2;
  vs.coords = Tensor::from_data({2, 3}, {0, 0, 0, 1, 1, 1});
  vs.roi_label = {0};  // wrong length
  CHECK_THROWS_AS(vs.validate(), ShapeError);
  vs.roi_label = {0, 2};  // gap: roi 1 missing
  CHECK_THROWS_AS(vs.validate(), ConfigError);
  vs.roi_label = {0, 1};
  CHECK_NOTHROW(vs.validate());
  CHECK(vs.n_rois() == 2);
}
