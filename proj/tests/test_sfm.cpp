#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "plencal/eval.hpp"
#include "plencal/model.hpp"
#include "plencal/sfm.hpp"
#include "plencal/synthgen.hpp"

using namespace plencal;

namespace {

synthgen::SyntheticDataset make_dataset(int points, int views, double sigma, double outliers,
                                        std::uint64_t seed) {
  synthgen::SceneSpec spec;
  spec.num_points = points;
  spec.trajectory.num_views = views;
  spec.noise_sigma = sigma;
  spec.outlier_fraction = outliers;
  spec.rng_seed = seed;
  return synthgen::generate(spec, synthgen::default_camera(), synthgen::default_grid());
}

sfm::PinholeCamera gt_pinhole(const PlenopticIntrinsics& intr) {
  return {intr.f_L / intr.s_x, intr.c_x, intr.c_y, intr.s_x / intr.s_y};
}

/// Exact virtual-image measurement and pinhole-equivalent pose: the virtual
/// image is the scene seen from the focal point, so the equivalent pinhole
/// pose shifts the camera by -f_L along its own axis.
Pose pinhole_equivalent(const Pose& plenoptic, double f_L) {
  Pose p = plenoptic;
  p.translation.z() -= f_L;
  return p;
}

}  // namespace

TEST_CASE("virtual track centroids recover the oracle values") {
  const auto data = make_dataset(50, 4, 0.0, 0.0, 21);
  const auto meas =
      sfm::virtual_track_centroids(data.observations, data.grid, data.intrinsics_gt);
  REQUIRE(!meas.empty());
  int checked = 0;
  for (const sfm::VirtualMeasurement& m : meas) {
    if (m.status != sfm::ClusterStatus::kOk) continue;
    const auto vp = model::project_to_virtual(
        data.intrinsics_gt,
        data.poses_gt[static_cast<std::size_t>(m.view_id)] *
            data.points_gt[static_cast<std::size_t>(m.point_id)]);
    REQUIRE(vp.status == model::ProjectionStatus::kOk);
    CHECK(std::abs(m.x - vp.point.x) < 1e-9);
    CHECK(std::abs(m.y - vp.point.y) < 1e-9);
    CHECK(std::abs(m.v - vp.point.v) < 1e-9);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("two-lens closed form from the disparity identity") {
  // Centers differing only in x by 23 px, raw difference 11.5 px -> v = 2.
  std::vector<MicroLensGrid::Center> centers = {{0, 1000.0, 1000.0}, {1, 1023.0, 1000.0}};
  const MicroLensGrid grid(std::move(centers), 10.5, 2048.0, 2048.0);
  PlenopticIntrinsics intr = synthgen::default_camera_no_distortion();
  intr.B = 1e-12;  // make micro lens centers coincide with micro image centers
  const VirtualPoint vp{1010.0, 1000.0, 2.0};
  std::vector<Observation> records;
  for (int lens = 0; lens < 2; ++lens) {
    const Vec2 raw = model::project_virtual_to_raw(vp, grid.center(lens));
    records.push_back({0, 0, lens, raw.x(), raw.y()});
  }
  CHECK(records[0].x - records[1].x == doctest::Approx(-11.5));
  const ObservationSet obs(std::move(records));
  const auto meas = sfm::virtual_track_centroids(obs, grid, intr);
  REQUIRE(meas.size() == 1);
  REQUIRE(meas[0].status == sfm::ClusterStatus::kOk);
  CHECK(meas[0].v == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(meas[0].x == doctest::Approx(1010.0).epsilon(1e-9));
}

TEST_CASE("single-lens clusters are reported singular") {
  std::vector<MicroLensGrid::Center> centers = {{0, 1000.0, 1000.0}, {1, 1023.0, 1000.0}};
  const MicroLensGrid grid(std::move(centers), 10.5, 2048.0, 2048.0);
  const PlenopticIntrinsics intr = synthgen::default_camera_no_distortion();
  const ObservationSet obs({{0, 0, 0, 1004.0, 1000.0}});
  const auto meas = sfm::virtual_track_centroids(obs, grid, intr);
  REQUIRE(meas.size() == 1);
  CHECK(meas[0].status == sfm::ClusterStatus::kSingular);
}

TEST_CASE("two-view bootstrap on noiseless virtual measurements") {
  const auto data = make_dataset(80, 4, 0.0, 0.0, 22);
  const sfm::PinholeCamera camera = gt_pinhole(data.intrinsics_gt);
  const auto meas = sfm::virtual_track_centroids(data.observations, data.grid, data.intrinsics_gt);

  const int va = 0, vb = 3;
  std::vector<Vec2> ma, mb;
  std::vector<int> pts;
  for (const auto& m : meas) {
    if (m.status != sfm::ClusterStatus::kOk || m.view_id != va) continue;
    for (const auto& n : meas) {
      if (n.status == sfm::ClusterStatus::kOk && n.view_id == vb && n.point_id == m.point_id) {
        ma.push_back(m.xy());
        mb.push_back(n.xy());
        pts.push_back(m.point_id);
      }
    }
  }
  REQUIRE(ma.size() >= 20);
  sfm::SfmOptions options;
  const sfm::TwoViewResult tv = sfm::two_view_bootstrap(ma, mb, camera, options);

  // Ground-truth relative pose between the pinhole-equivalent cameras.
  const Pose pa = pinhole_equivalent(data.poses_gt[static_cast<std::size_t>(va)],
                                     data.intrinsics_gt.f_L);
  const Pose pb = pinhole_equivalent(data.poses_gt[static_cast<std::size_t>(vb)],
                                     data.intrinsics_gt.f_L);
  const Pose rel_gt = pb.compose(pa.inverse());

  const double rot_err =
      Eigen::AngleAxisd(tv.pose_b.rotation.conjugate() * rel_gt.rotation).angle();
  CHECK(rot_err < 1e-6);
  const double trans_angle = std::acos(std::clamp(
      tv.pose_b.translation.normalized().dot(rel_gt.translation.normalized()), -1.0, 1.0));
  CHECK(trans_angle < 1e-6);

  SUBCASE("zero baseline raises DegenerateGeometry") {
    CHECK_THROWS_AS((void)sfm::two_view_bootstrap(ma, ma, camera, options),
                    sfm::DegenerateGeometryError);
  }
  SUBCASE("fewer than eight tracks raises InsufficientMatches") {
    std::vector<Vec2> short_a(ma.begin(), ma.begin() + 7);
    std::vector<Vec2> short_b(mb.begin(), mb.begin() + 7);
    CHECK_THROWS_AS((void)sfm::two_view_bootstrap(short_a, short_b, camera, options),
                    sfm::InsufficientMatchesError);
  }
}

TEST_CASE("incremental reconstruction on a noiseless sequence") {
  const auto data = make_dataset(90, 8, 0.0, 0.0, 23);
  const auto meas = sfm::virtual_track_centroids(data.observations, data.grid, data.intrinsics_gt);
  sfm::SfmOptions options;
  options.threads = 1;
  const sfm::PinholeSolution solution =
      sfm::run_incremental_sfm(meas, gt_pinhole(data.intrinsics_gt), options);

  CHECK(solution.failed_views.empty());
  CHECK(solution.view_ids.size() == 8);
  CHECK(solution.mean_reproj_error_px < 1e-8);

  // Poses must match the pinhole-equivalent ground truth up to a similarity.
  std::vector<Pose> gt;
  for (const int vid : solution.view_ids) {
    gt.push_back(pinhole_equivalent(data.poses_gt[static_cast<std::size_t>(vid)],
                                    data.intrinsics_gt.f_L));
  }
  const eval::TrajectoryRmse rmse =
      eval::trajectory_rmse(solution.poses, gt, eval::AlignMode::kSimilarity);
  CHECK(rmse.rmse_mm / rmse.scale < 1e-6);  // in solution units

  SUBCASE("pinhole BA leaves a converged solution with tiny residuals") {
    CHECK(solution.ba_converged);
  }
  SUBCASE("triangulated points have positive depth in every observing view") {
    for (std::size_t k = 0; k < solution.point_ids.size(); ++k) {
      for (std::size_t j = 0; j < solution.poses.size(); ++j) {
        const Vec3 xc = solution.poses[j] * solution.points[k];
        CHECK(xc.z() > 0.0);
      }
    }
  }
}

TEST_CASE("pinhole BA refines the intrinsics on noisy data") {
  const auto data = make_dataset(150, 10, 0.2, 0.0, 24);
  const auto meas = sfm::virtual_track_centroids(data.observations, data.grid, data.intrinsics_gt);
  sfm::SfmOptions options;
  options.threads = 1;
  sfm::PinholeSolution solution =
      sfm::run_incremental_sfm(meas, gt_pinhole(data.intrinsics_gt), options);
  // f_px within 0.5% of f_L / s_x.
  const double f_gt = data.intrinsics_gt.f_L / data.intrinsics_gt.s_x;
  CHECK(std::abs(solution.camera.f - f_gt) / f_gt < 0.005);

  SUBCASE("zero-iteration budget returns the solution unchanged") {
    const sfm::PinholeSolution before = solution;
    (void)sfm::pinhole_ba(solution, meas, options, 0);
    CHECK(solution.camera.f == before.camera.f);
    CHECK(solution.poses[1].translation == before.poses[1].translation);
  }
}

TEST_CASE("registration against known structure") {
  const auto data = make_dataset(60, 5, 0.0, 0.0, 25);
  const auto meas = sfm::virtual_track_centroids(data.observations, data.grid, data.intrinsics_gt);
  const sfm::PinholeCamera camera = gt_pinhole(data.intrinsics_gt);
  // World structure in the pinhole-equivalent frame of view 0 = world frame.
  std::vector<Vec3> points;
  std::vector<Vec2> measurements;
  const int view = 2;
  const Pose gt_pose = pinhole_equivalent(data.poses_gt[view], data.intrinsics_gt.f_L);
  for (const auto& m : meas) {
    if (m.status != sfm::ClusterStatus::kOk || m.view_id != view) continue;
    points.push_back(data.points_gt[static_cast<std::size_t>(m.point_id)]);
    measurements.push_back(m.xy());
  }
  REQUIRE(points.size() >= 10);
  sfm::SfmOptions options;
  const sfm::RegistrationResult reg = sfm::register_view(points, measurements, camera, options);
  CHECK(reg.inlier_count == static_cast<int>(points.size()));
  CHECK(Eigen::AngleAxisd(reg.pose.rotation.conjugate() * gt_pose.rotation).angle() < 1e-7);
  CHECK((reg.pose.translation - gt_pose.translation).norm() < 1e-5);

  SUBCASE("no usable correspondences raises RegistrationFailed") {
    std::vector<Vec3> p3(points.begin(), points.begin() + 3);
    std::vector<Vec2> m3(measurements.begin(), measurements.begin() + 3);
    CHECK_THROWS_AS((void)sfm::register_view(p3, m3, camera, options),
                    sfm::RegistrationFailedError);
  }
}

TEST_CASE("fixed-seed reconstruction is deterministic end-to-end") {
  const auto data = make_dataset(60, 5, 0.2, 0.10, 26);
  const auto meas = sfm::virtual_track_centroids(data.observations, data.grid, data.intrinsics_gt);
  sfm::SfmOptions options;
  options.threads = 1;
  options.seed = 4242;
  const sfm::PinholeSolution a = sfm::run_incremental_sfm(meas, gt_pinhole(data.intrinsics_gt), options);
  const sfm::PinholeSolution b = sfm::run_incremental_sfm(meas, gt_pinhole(data.intrinsics_gt), options);
  REQUIRE(a.poses.size() == b.poses.size());
  REQUIRE(a.points.size() == b.points.size());
  CHECK(a.camera.f == b.camera.f);
  for (std::size_t i = 0; i < a.poses.size(); ++i) {
    CHECK(a.poses[i].translation == b.poses[i].translation);
    CHECK(a.poses[i].rotation.coeffs() == b.poses[i].rotation.coeffs());
  }
  for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i] == b.points[i]);
}

TEST_CASE("outlier-contaminated sequences register every view") {
  int total_views = 0;
  int registered = 0;
  double inlier_ratio_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = make_dataset(70, 6, 0.2, 0.20, 300 + seed);
    const auto meas =
        sfm::virtual_track_centroids(data.observations, data.grid, data.intrinsics_gt);
    sfm::SfmOptions options;
    options.threads = 1;
    options.seed = seed;
    const sfm::PinholeSolution solution =
        sfm::run_incremental_sfm(meas, gt_pinhole(data.intrinsics_gt), options);
    total_views += 6;
    registered += static_cast<int>(solution.view_ids.size());
    std::size_t usable = 0, inliers = 0;
    for (std::size_t i = 0; i < meas.size(); ++i) {
      if (meas[i].status != sfm::ClusterStatus::kOk) continue;
      ++usable;
      if (solution.measurement_inlier[i]) ++inliers;
    }
    inlier_ratio_sum += static_cast<double>(inliers) / static_cast<double>(usable);
  }
  CHECK(registered == total_views);
  CHECK(inlier_ratio_sum / 10.0 >= 0.75);
}
