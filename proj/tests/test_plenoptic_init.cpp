#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "plencal/pipeline.hpp"
#include "plencal/plenoptic_init.hpp"
#include "plencal/synthgen.hpp"

using namespace plencal;

namespace {

sfm::PinholeSolution toy_solution() {
  sfm::PinholeSolution s;
  s.camera = {3045.0, 1018.7, 1054.2, 1.0};
  s.view_ids = {0, 1};
  s.poses = {Pose::identity(), Pose(Eigen::Quaterniond::Identity(), Vec3(0.1, 0.0, 0.0))};
  s.point_ids = {0, 1, 2};
  s.points = {Vec3(0.0, 0.0, 1.0), Vec3(0.5, 0.0, 1.0), Vec3(0.0, 0.3, 1.2)};
  return s;
}

}  // namespace

TEST_CASE("metric scaling from constraints") {
  SUBCASE("single constraint is the plain ratio") {
    sfm::PinholeSolution s = toy_solution();
    // Current distance between points 0 and 1 is 0.5 units; target 1000 mm.
    const std::vector<ScaleConstraint> constraints = {{0, 1, 1000.0, 1.0}};
    const pleninit::ScaleResult r = pleninit::apply_metric_scale(s, constraints);
    CHECK(r.scale == doctest::Approx(2000.0).epsilon(1e-12));
    CHECK((s.points[1] - s.points[0]).norm() == doctest::Approx(1000.0).epsilon(1e-12));
    CHECK(s.poses[1].translation.x() == doctest::Approx(200.0).epsilon(1e-12));
    CHECK(r.residuals_mm[0] == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("two consistent constraints leave no residual") {
    sfm::PinholeSolution s = toy_solution();
    const double d01 = 0.5, d02 = (s.points[2] - s.points[0]).norm();
    const std::vector<ScaleConstraint> constraints = {{0, 1, d01 * 1700.0, 1.0},
                                                      {0, 2, d02 * 1700.0, 1.0}};
    const pleninit::ScaleResult r = pleninit::apply_metric_scale(s, constraints);
    CHECK(r.scale == doctest::Approx(1700.0).epsilon(1e-12));
    CHECK(r.residuals_mm[0] < 1e-9);
    CHECK(r.residuals_mm[1] < 1e-9);
  }
  SUBCASE("constraint between coincident points raises ZeroBaseline") {
    sfm::PinholeSolution s = toy_solution();
    s.points[1] = s.points[0];
    const std::vector<ScaleConstraint> constraints = {{0, 1, 1000.0, 1.0}};
    CHECK_THROWS_AS((void)pleninit::apply_metric_scale(s, constraints),
                    pleninit::ZeroBaselineError);
  }
}

TEST_CASE("linear init of B and b_L0") {
  SUBCASE("two exact samples pin the line") {
    // Constructed from the forward model: b_L(v) = v B + b_L0 with
    // B = 0.376, b_L0 = 15.893 -> b_L(2) = 16.645, b_L(4) = 17.397.
    const pleninit::BInit init = pleninit::fit_B_bL0({{2.0, 16.645}, {4.0, 17.397}});
    CHECK(init.B == doctest::Approx(0.376).epsilon(1e-12));
    CHECK(init.b_L0 == doctest::Approx(15.893).epsilon(1e-12));
    CHECK(init.rms_residual_mm < 1e-12);
  }
  SUBCASE("noiseless synthetic samples recover the truth to 1e-9 relative") {
    const PlenopticIntrinsics intr = synthgen::default_camera_no_distortion();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uz(900.0, 2600.0);
    std::vector<pleninit::DepthSample> samples;
    for (int i = 0; i < 400; ++i) {
      const double z = uz(rng);
      const double b_L = 1.0 / (1.0 / intr.f_L - 1.0 / z);
      samples.push_back({(b_L - intr.b_L0) / intr.B, z});
    }
    const pleninit::BInit init = pleninit::init_B_bL0(samples, intr.f_L);
    CHECK(std::abs(init.B - intr.B) / intr.B < 1e-9);
    CHECK(std::abs(init.b_L0 - intr.b_L0) / intr.b_L0 < 1e-9);
    CHECK(init.rms_residual_mm < 1e-12);
  }
  SUBCASE("equal virtual depths are rank deficient") {
    const std::vector<pleninit::DepthSample> samples = {{3.0, 1000.0}, {3.0, 1000.0}, {3.0, 999.0}};
    CHECK_THROWS_AS((void)pleninit::init_B_bL0(samples, 16.748), pleninit::RankDeficientError);
  }
  SUBCASE("negative-slope samples are rejected as non-physical") {
    const std::vector<pleninit::DepthSample> samples = {{2.0, 5000.0}, {4.0, 1e7}};
    CHECK_THROWS_AS((void)pleninit::init_B_bL0(samples, 16.748),
                    pleninit::NegativeParameterError);
  }
  SUBCASE("scale consistency: scaling depths and focal length scales the fit") {
    const double f = 16.748;
    const auto z_of_bl = [&](double bl) { return 1.0 / (1.0 / f - 1.0 / bl); };
    std::vector<pleninit::DepthSample> samples = {{3.0, z_of_bl(17.021)},
                                                  {4.0, z_of_bl(17.397)},
                                                  {5.0, z_of_bl(17.773)}};
    const pleninit::BInit base = pleninit::init_B_bL0(samples, f);
    const double s = 2.5;
    for (auto& sample : samples) sample.z_C *= s;
    const pleninit::BInit scaled = pleninit::init_B_bL0(samples, f * s);
    CHECK(scaled.B == doctest::Approx(s * base.B).epsilon(1e-12));
    CHECK(scaled.b_L0 == doctest::Approx(s * base.b_L0).epsilon(1e-12));
  }
}

TEST_CASE("seeding the plenoptic problem") {
  synthgen::SceneSpec spec;
  spec.num_points = 40;
  spec.trajectory.num_views = 4;
  spec.rng_seed = 31;
  const auto data = synthgen::generate(spec, synthgen::default_camera_no_distortion(),
                                       synthgen::default_grid());

  sfm::PinholeSolution solution;
  solution.camera = {data.intrinsics_gt.f_L / data.intrinsics_gt.s_x, data.intrinsics_gt.c_x,
                     data.intrinsics_gt.c_y, 1.0};
  for (int j = 0; j < 4; ++j) {
    solution.view_ids.push_back(j);
    Pose p = data.poses_gt[static_cast<std::size_t>(j)];
    p.translation.z() -= data.intrinsics_gt.f_L;  // pinhole-equivalent frame
    solution.poses.push_back(p);
  }
  for (std::size_t i = 0; i < data.points_gt.size(); ++i) {
    solution.point_ids.push_back(static_cast<int>(i));
    solution.points.push_back(data.points_gt[i]);
  }

  pleninit::SeedOptions options;
  const ba::CalibrationProblem problem = pleninit::seed_plenoptic_problem(
      solution, data.intrinsics_gt.B, data.intrinsics_gt.b_L0, data.intrinsics_gt, data.grid,
      data.observations, data.scale_constraints, options);

  SUBCASE("an exact pinhole solution seeds the exact plenoptic state") {
    CHECK(ba::evaluate_cost(problem).cost < 1e-18);
    CHECK(problem.intrinsics.f_L == doctest::Approx(data.intrinsics_gt.f_L).epsilon(1e-12));
    CHECK(problem.intrinsics.distortion.is_zero());
  }
  SUBCASE("full mode leaves the mask empty") {
    for (const bool b : problem.fixed.intrinsics) CHECK(!b);
    CHECK(problem.fixed.poses[0]);
  }
  SUBCASE("recalibration mode fixes exactly f_L and B") {
    pleninit::SeedOptions recalib;
    recalib.recalibration = true;
    const ba::CalibrationProblem p2 = pleninit::seed_plenoptic_problem(
        solution, data.intrinsics_gt.B, data.intrinsics_gt.b_L0, data.intrinsics_gt, data.grid,
        data.observations, {}, recalib);
    CHECK(p2.fixed.intrinsics[model::kParamFL]);
    CHECK(p2.fixed.intrinsics[model::kParamB]);
    int fixed_count = 0;
    for (const bool b : p2.fixed.intrinsics) fixed_count += b ? 1 : 0;
    CHECK(fixed_count == 2);
  }
  SUBCASE("anisotropic pixel sizes propagate") {
    PlenopticIntrinsics config = data.intrinsics_gt;
    config.s_y = config.s_x * 1.5;
    const ba::CalibrationProblem p3 = pleninit::seed_plenoptic_problem(
        solution, data.intrinsics_gt.B, data.intrinsics_gt.b_L0, config, data.grid,
        data.observations, {}, options);
    CHECK(p3.intrinsics.s_y == doctest::Approx(config.s_x * 1.5));
  }
}

TEST_CASE("implicit metric scale from virtual depths (recalibration path)") {
  synthgen::SceneSpec spec;
  spec.num_points = 60;
  spec.trajectory.num_views = 5;
  spec.rng_seed = 32;
  const auto data = synthgen::generate(spec, synthgen::default_camera_no_distortion(),
                                       synthgen::default_grid());
  const auto meas = sfm::virtual_track_centroids(data.observations, data.grid, data.intrinsics_gt);

  // A pinhole solution at a wrong global scale.
  const double wrong = 0.4;
  sfm::PinholeSolution solution;
  solution.camera = {data.intrinsics_gt.f_L / data.intrinsics_gt.s_x, data.intrinsics_gt.c_x,
                     data.intrinsics_gt.c_y, 1.0};
  for (int j = 0; j < 5; ++j) {
    solution.view_ids.push_back(j);
    Pose p = data.poses_gt[static_cast<std::size_t>(j)];
    p.translation.z() -= data.intrinsics_gt.f_L;
    p.translation *= wrong;
    solution.poses.push_back(p);
  }
  for (std::size_t i = 0; i < data.points_gt.size(); ++i) {
    solution.point_ids.push_back(static_cast<int>(i));
    solution.points.push_back(wrong * data.points_gt[i]);
  }
  const pleninit::ImplicitScaleResult r = pleninit::implicit_metric_scale(
      solution, meas, data.intrinsics_gt.f_L, data.intrinsics_gt.B);
  // Exact on noiseless data: the estimator accounts for the focal-point
  // offset of the pinhole-equivalent frame.
  CHECK(r.scale == doctest::Approx(1.0 / wrong).epsilon(1e-7));
  CHECK(r.b_L0 == doctest::Approx(data.intrinsics_gt.b_L0).epsilon(1e-7));
}
