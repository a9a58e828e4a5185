#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "plencal/eval.hpp"
#include "plencal/synthgen.hpp"

using namespace plencal;

namespace {

std::vector<Pose> random_trajectory(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-500.0, 500.0);
  std::uniform_real_distribution<double> ur(-0.3, 0.3);
  std::vector<Pose> out;
  for (int i = 0; i < n; ++i) {
    out.emplace_back(quaternion_exp(Vec3(ur(rng), ur(rng), ur(rng))),
                     Vec3(u(rng), u(rng), u(rng)));
  }
  return out;
}

}  // namespace

TEST_CASE("parameter report") {
  const PlenopticIntrinsics ref = synthgen::default_camera();
  SUBCASE("identical calibrations deviate by zero") {
    for (const auto& d : eval::parameter_report(ref, ref)) {
      CHECK(d.absolute == 0.0);
      if (!d.zero_reference) CHECK(d.relative_percent == 0.0);
    }
  }
  SUBCASE("published 16 mm comparison row") {
    // Reference 16.748 mm vs estimate 16.745 mm -> 0.018 % deviation.
    CHECK(100.0 * eval::relative_deviation(16.745, 16.748) ==
          doctest::Approx(0.018).epsilon(5e-3));
  }
  SUBCASE("zero reference raises ZeroReference") {
    CHECK_THROWS_AS((void)eval::relative_deviation(1.0, 0.0), eval::ZeroReferenceError);
    PlenopticIntrinsics est = ref;
    est.distortion.k1 = 1e-15;
    PlenopticIntrinsics zref = ref;
    zref.distortion.k1 = 0.0;
    const auto report = eval::parameter_report(est, zref);
    for (const auto& d : report) {
      if (d.name == "k1") {
        CHECK(d.zero_reference);
        CHECK(std::isnan(d.relative_percent));
      }
    }
  }
  SUBCASE("three-run RMSE against hand arithmetic") {
    // Deviations 0.1 %, 0.2 %, 0.2 % -> sqrt((0.01+0.04+0.04)/3) = 0.173205 %.
    CHECK(eval::rmse_percent({0.1, 0.2, 0.2}) == doctest::Approx(std::sqrt(0.09 / 3.0)).epsilon(1e-12));
  }
}

TEST_CASE("trajectory rmse") {
  const std::vector<Pose> gt = random_trajectory(25, 8);
  SUBCASE("identical trajectories: zero error, unit scale") {
    const auto rigid = eval::trajectory_rmse(gt, gt, eval::AlignMode::kRigid);
    CHECK(rigid.rmse_mm < 1e-9);
    CHECK(rigid.scale == 1.0);
    const auto sim = eval::trajectory_rmse(gt, gt, eval::AlignMode::kSimilarity);
    CHECK(sim.rmse_mm < 1e-9);
    CHECK(sim.scale == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("a uniformly scaled trajectory is recovered by similarity alignment") {
    // Scale constant from the published SLAM comparison (Parking: 1.057).
    std::vector<Pose> scaled = gt;
    for (Pose& p : scaled) p.translation /= 1.057;  // centers scale by 1/1.057...
    const auto sim = eval::trajectory_rmse(scaled, gt, eval::AlignMode::kSimilarity);
    CHECK(sim.scale == doctest::Approx(1.057).epsilon(1e-9));
    CHECK(sim.rmse_mm < 1e-9);
    const auto rigid = eval::trajectory_rmse(scaled, gt, eval::AlignMode::kRigid);
    CHECK(rigid.rmse_mm > 1.0);  // rigid alignment cannot absorb the scale
  }
  SUBCASE("alignment invariance under a global rigid transform") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-300.0, 300.0);
    const Pose g(quaternion_exp(Vec3(0.4, -0.2, 0.9)), Vec3(u(rng), u(rng), u(rng)));
    std::vector<Pose> moved = gt;
    for (Pose& p : moved) p = p.compose(g);  // world-side motion moves all centers rigidly
    const auto a = eval::trajectory_rmse(gt, gt, eval::AlignMode::kRigid);
    const auto b = eval::trajectory_rmse(moved, gt, eval::AlignMode::kRigid);
    CHECK(std::abs(a.rmse_mm - b.rmse_mm) < 1e-9);
  }
  SUBCASE("length mismatch raises") {
    std::vector<Pose> shorter(gt.begin(), gt.end() - 1);
    CHECK_THROWS_AS((void)eval::trajectory_rmse(shorter, gt, eval::AlignMode::kRigid),
                    eval::LengthMismatchError);
  }
}

TEST_CASE("sweep csv emission") {
  eval::SweepResult result;
  eval::SweepCell cell;
  cell.num_points = 100;
  cell.num_views = 10;
  cell.attempts = 2;
  cell.successes = 2;
  cell.rmse_percent["f_L"] = 0.25;
  result.cells.push_back(cell);
  const std::string csv = eval::sweep_to_csv(result);
  CHECK(csv.find("points,views,attempts,successes,rmse_f_L_percent") != std::string::npos);
  CHECK(csv.find("100,10,2,2,0.25") != std::string::npos);
}
