#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "memenc/error.hpp"
#include "memenc/metrics.hpp"
#include "memenc/rng.hpp"
#include "oracles.hpp"

using namespace memenc;

TEST_CASE("pearson matches the oracle and handles degeneracy") {
  CounterRng rng(501, "p");
  for (int i = 0; i < 50; ++i) {
    const int n = 3 + static_cast<int>(rng.below(30));
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      x[static_cast<std::size_t>(j)] = rng.gaussian();
      y[static_cast<std::size_t>(j)] = 0.5 * x[static_cast<std::size_t>(j)] + rng.gaussian();
    }
    const PearsonResult got = pearson_flagged(x, y);
    CHECK_FALSE(got.degenerate);
    CHECK(std::abs(got.r - oracle::pearson(x, y)) <= 1e-12);
  }

  const std::vector<double> flat(8, 3.0);
  std::vector<double> vary(8);
  for (int i = 0; i < 8; ++i) vary[static_cast<std::size_t>(i)] = i;
  const PearsonResult deg = pearson_flagged(flat, vary);
  CHECK(deg.degenerate);
  CHECK(deg.r == 0.0);
  CHECK_THROWS_AS(pearson_flagged({1.0}, {2.0}), PreconditionError);
  CHECK_THROWS_AS(pearson_flagged({1.0, 2.0}, {1.0, 2.0, 3.0}), ShapeError);
}

namespace {

// groups[v][g][k]: per-voxel repeat table with signal variance 1 and noise
// noise_std, the generative model the split-half estimator assumes.
std::vector<std::vector<std::vector<double>>> make_groups(int n_voxels, int n_groups,
                                                          double noise_std, std::uint64_t seed) {
  std::vector<std::vector<std::vector<double>>> out(static_cast<std::size_t>(n_voxels));
  CounterRng rng(seed, "nc");
  for (int v = 0; v < n_voxels; ++v) {
    out[static_cast<std::size_t>(v)].resize(static_cast<std::size_t>(n_groups));
    for (int g = 0; g < n_groups; ++g) {
      const double signal = rng.gaussian();
      auto& reps = out[static_cast<std::size_t>(v)][static_cast<std::size_t>(g)];
      reps = {signal + noise_std * rng.gaussian(), signal + noise_std * rng.gaussian()};
    }
  }
  return out;
}

}  // namespace

TEST_CASE("noise ceiling hits 1 on noiseless repeats") {
  const auto groups = make_groups(12, 30, 0.0, 601);
  const NoiseCeiling nc = noise_ceiling(groups);
  REQUIRE(nc.available);
  for (double v : nc.nc) CHECK(std::abs(v - 1.0) <= 1e-9);
}

TEST_CASE("noise ceiling collapses on pure noise") {
  auto groups = make_groups(12, 100, 0.0, 602);
  for (auto& voxel : groups)
    for (auto& g : voxel) {
      static CounterRng rng(603, "pure");
      g = {rng.gaussian(), rng.gaussian()};  // no shared signal
    }
  const NoiseCeiling nc = noise_ceiling(groups);
  REQUIRE(nc.available);
  for (double v : nc.nc) {
    CHECK(v <= 0.1);
    CHECK(v >= 0.0);
  }
}

TEST_CASE("noise ceiling declares itself unavailable without enough groups") {
  const auto groups = make_groups(4, 9, 0.1, 604);
  CHECK_FALSE(noise_ceiling(groups, 20, 7, 10).available);
  CHECK(noise_ceiling(groups, 20, 7, 9).available);
}

TEST_CASE("noise ceiling is monotone in noise level") {
  const auto clean = make_groups(8, 60, 0.2, 605);
  const auto dirty = make_groups(8, 60, 1.5, 605);
  const NoiseCeiling a = noise_ceiling(clean);
  const NoiseCeiling b = noise_ceiling(dirty);
  double ma = 0.0, mb = 0.0;
  for (double v : a.nc) ma += v;
  for (double v : b.nc) mb += v;
  CHECK(ma / 8 > mb / 8);
}

TEST_CASE("challenge score caps per-voxel contributions at the ceiling") {
  // Perfect predictions with a tiny NC must not blow past 100.
  const int n_voxels = 3, rows = 8;
  std::vector<double> truth(static_cast<std::size_t>(rows) * n_voxels);
  CounterRng rng(606, "ch");
  for (double& v : truth) v = rng.gaussian();
  const std::vector<double> pred = truth;
  std::vector<std::vector<int>> groups;
  for (int g = 0; g < rows / 2; ++g) groups.push_back({2 * g, 2 * g + 1});
  const std::vector<double> nc(static_cast<std::size_t>(n_voxels), 0.05);
  const ChallengeScore cs = challenge_score(pred, truth, n_voxels, groups, nc);
  CHECK_FALSE(cs.fallback_single_trial);
  CHECK(cs.score == doctest::Approx(100.0));
  for (double v : cs.per_voxel) CHECK(v <= 1.0);
}

TEST_CASE("challenge score falls back without repeat groups") {
  const int n_voxels = 2, rows = 6;
  std::vector<double> truth(static_cast<std::size_t>(rows) * n_voxels);
  CounterRng rng(607, "ch2");
  for (double& v : truth) v = rng.gaussian();
  const ChallengeScore cs = challenge_score(truth, truth, n_voxels, {}, {});
  CHECK(cs.fallback_single_trial);
  CHECK(cs.score == doctest::Approx(100.0));
}

TEST_CASE("roi aggregation computes means and medians per label") {
  const std::vector<double> scores = {1.0, 2.0, 3.0, 10.0, 20.0};
  const std::vector<int> labels = {0, 0, 0, 1, 1};
  const auto rows = roi_aggregate(scores, labels, 3);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].mean == doctest::Approx(2.0));
  CHECK(rows[0].median == doctest::Approx(2.0));
  CHECK(rows[0].n == 3);
  CHECK(rows[1].mean == doctest::Approx(15.0));
  CHECK(rows[1].median == doctest::Approx(15.0));
  CHECK_FALSE(rows[2].available);
  CHECK_THROWS_AS(roi_aggregate(scores, {0, 0, 0, 1}, 2), ShapeError);
  CHECK_THROWS_AS(roi_aggregate(scores, {0, 0, 0, 1, 5}, 2), ConfigError);
}

TEST_CASE("score table files are stable and carry no volatile fields in csv") {
  ScoreTable t;
  t.r = {0.25, -0.5};
  t.r2 = {0.0625, 0.25};
  t.nc = {0.9, 0.8};
  t.roi = {0, 1};
  t.roi_names = {"alpha", "beta"};
  t.mean_r = -0.125;
  t.model_id = "unit";
  t.config_hash = "deadbeef";

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "memenc_scoretable_test";
  fs::create_directories(dir);
  t.write_csv(dir / "a.csv");
  t.write_csv(dir / "b.csv");
  std::ifstream fa(dir / "a.csv"), fb(dir / "b.csv");
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().find("deadbeef") == std::string::npos);
  CHECK(sa.str().find("alpha") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("format_double emits shortest stable decimal") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(-1.0) == "-1");
  CHECK(format_double(1e-3) == "0.001");
  CounterRng rng(608, "fmt");
  for (int i = 0; i < 200; ++i) {
    const double v = rng.uniform(-10.0, 10.0);
    CHECK(format_double(v) == format_double(v));
  }
}
