#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "plencal/ba_engine.hpp"
#include "plencal/camera.hpp"
#include "plencal/observations.hpp"
#include "plencal/types.hpp"

namespace plencal {
namespace sfm {

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};
class InsufficientMatchesError : public Error {
 public:
  using Error::Error;
};
class RegistrationFailedError : public Error {
 public:
  using Error::Error;
};

/// Pinhole camera over virtual-image coordinates: x = f X/Z + c_x,
/// y = f * aspect * Y/Z + c_y with aspect = s_x / s_y held fixed.
struct PinholeCamera {
  double f = 0.0;   // [px]
  double c_x = 0.0;
  double c_y = 0.0;
  double aspect = 1.0;

  Vec2 project(const Vec3& x_camera) const {
    return Vec2(f * x_camera.x() / x_camera.z() + c_x,
                f * aspect * x_camera.y() / x_camera.z() + c_y);
  }
  Vec3 bearing(const Vec2& pixel) const {
    return Vec3((pixel.x() - c_x) / f, (pixel.y() - c_y) / (f * aspect), 1.0).normalized();
  }
};

enum class ClusterStatus {
  kOk,
  kSingular,   // underdetermined system: fewer than two distinct lens centers
  kBadDepth,   // recovered 1/v outside (0, 1): no Galilean interpretation
};

/// Virtual-image coordinate and virtual depth encoded by one micro-image
/// cluster, recovered by solving the micro lens projection across its lenses.
struct VirtualMeasurement {
  int point_id = 0;
  int view_id = 0;
  ClusterStatus status = ClusterStatus::kOk;
  double x = 0.0;  // x_V' [px]
  double y = 0.0;  // y_V' [px]
  double v = 0.0;  // virtual depth
  int lens_count = 0;

  Vec2 xy() const { return Vec2(x, y); }
};

/// Solves, per (point, view) cluster, the joint linear system for
/// (x_V' / v, y_V' / v, 1 / v) given the micro lens centers implied by
/// `intr_guess` (distorted micro image centers scaled toward the principal
/// point). Raw coordinates are undistorted first when the guess carries
/// distortion. Degenerate clusters are returned with a non-ok status.
std::vector<VirtualMeasurement> virtual_track_centroids(const ObservationSet& observations,
                                                        const MicroLensGrid& grid,
                                                        const PlenopticIntrinsics& intr_guess);

struct SfmOptions {
  double ransac_threshold_px = 1.5;  // Sampson / reprojection gate
  double ransac_confidence = 0.999;
  int ransac_max_iterations = 1000;
  int min_bootstrap_matches = 8;
  int min_register_inliers = 4;
  double min_parallax_deg = 0.5;     // degeneracy gate for two-view geometry
  double huber_scale_px = 1.0;       // pinhole bundle adjustment
  double mean_reproj_threshold_px = 1.5;
  int ba_interval = 5;               // run a pinhole BA every N registrations
  int ba_max_iterations = 40;
  std::uint64_t seed = 7;
  int threads = 1;
};

struct TwoViewResult {
  Pose pose_b;                  // camera b from the frame of camera a (identity)
  std::vector<char> inliers;    // per match
  std::vector<Vec3> points;     // triangulated, frame of a; NaN-free only where inliers
  double median_parallax_deg = 0.0;
};

/// Relative pose from >= 8 matched pinhole measurements: essential matrix by
/// the normalized eight-point algorithm inside RANSAC, cheirality-checked
/// decomposition, midpoint triangulation, median point depth scaled to 1.
TwoViewResult two_view_bootstrap(const std::vector<Vec2>& meas_a, const std::vector<Vec2>& meas_b,
                                 const PinholeCamera& camera, const SfmOptions& options);

struct RegistrationResult {
  Pose pose;
  std::vector<char> inliers;
  int inlier_count = 0;
};

/// Pose from 3D-2D correspondences: P3P inside RANSAC, then Gauss-Newton
/// refinement on all inliers. Throws RegistrationFailedError below
/// min_register_inliers.
RegistrationResult register_view(const std::vector<Vec3>& points,
                                 const std::vector<Vec2>& measurements,
                                 const PinholeCamera& camera, const SfmOptions& options);

struct PinholeSolution {
  PinholeCamera camera;
  std::vector<int> view_ids;      // original view id per pose
  std::vector<Pose> poses;        // first pose is the identity (gauge)
  std::vector<int> point_ids;     // original point id per point
  std::vector<Vec3> points;
  std::vector<char> measurement_inlier;  // parallel to the measurement list used
  std::vector<int> failed_views;  // views that could not be registered
  double mean_reproj_error_px = 0.0;
  bool ba_converged = true;

  int pose_index(int view_id) const;
  int point_index(int point_id) const;
};

struct PinholeBaResult {
  ba::SolveReport report;
  bool converged = true;  // false = iteration budget hit; caller may proceed
};

/// Joint pinhole bundle adjustment over f, c_x, c_y, poses and points.
/// Gauge: first pose fixed, plus one frozen point depth (largest-depth point)
/// that pins the arbitrary scale. Zero iterations returns the input unchanged.
PinholeBaResult pinhole_ba(PinholeSolution& solution,
                           const std::vector<VirtualMeasurement>& measurements,
                           const SfmOptions& options, int max_iterations = -1);

/// Full incremental reconstruction over virtual measurements: bootstrap pair
/// selection (shared tracks x median parallax), incremental P3P registration,
/// triangulation, periodic and final pinhole bundle adjustment.
PinholeSolution run_incremental_sfm(const std::vector<VirtualMeasurement>& measurements,
                                    const PinholeCamera& initial_camera,
                                    const SfmOptions& options);

}  // namespace sfm
}  // namespace plencal
