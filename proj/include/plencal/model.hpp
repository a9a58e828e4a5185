#pragma once

#include <optional>

#include "plencal/camera.hpp"
#include "plencal/types.hpp"

namespace plencal {
namespace model {

enum class ProjectionStatus {
  kOk,
  kDegenerateDepth,           // z_C <= f_L: no real main-lens image
  kNonPositiveVirtualDepth,   // v <= 0 (or v <= 1 where Galilean projection is required)
  kOutOfMicroImage,           // projection misses the micro image (masking theta = 0)
};

const char* to_string(ProjectionStatus s);

/// Raised by the iterative undistortion when it fails to converge.
class NoConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Optimizable intrinsic parameters, in the order used by every Jacobian.
enum IntrinsicParam : int {
  kParamFL = 0,
  kParamBL0,
  kParamB,
  kParamCx,
  kParamCy,
  kParamK0,
  kParamK1,
  kParamK2,
  kParamP0,
  kParamP1,
  kNumIntrinsicParams,
};

using IntrinsicsJacobian = Eigen::Matrix<double, 2, kNumIntrinsicParams>;
using PoseJacobian = Eigen::Matrix<double, 2, 6>;    // [rotation | translation]
using PointJacobian = Eigen::Matrix<double, 2, 3>;

/// Main lens image distance b_L for an object at depth z_C (thin lens).
/// Throws nothing; returns nullopt when z_C <= f_L.
std::optional<double> main_lens_image_distance(const PlenopticIntrinsics& intr, double z_C);

struct VirtualProjection {
  ProjectionStatus status = ProjectionStatus::kOk;
  VirtualPoint point;
  double b_L = 0.0;  // [mm]
};

/// Projects a camera-frame point [mm] into the dimensionless virtual image.
VirtualProjection project_to_virtual(const PlenopticIntrinsics& intr, const Vec3& x_camera);

/// Micro lens center for a (distorted) micro image center, as the central
/// scaling c_L + (c_image - c_L) * b_L0 / (b_L0 + B).
Vec2 micro_lens_center(const Vec2& micro_image_center, const Vec2& principal_point,
                       double b_L0, double B);

/// All micro lens centers of a grid, from distorted micro image centers.
std::vector<Vec2> micro_lens_centers(const PlenopticIntrinsics& intr, const MicroLensGrid& grid);

/// Projects a virtual image point through one micro lens onto the raw image.
/// Requires vp.v != 0.
Vec2 project_virtual_to_raw(const VirtualPoint& vp, const Vec2& micro_lens_center);

/// Brown radial + tangential distortion about the principal point.
Vec2 distort(const DistortionCoeffs& coeffs, const Vec2& principal_point, const Vec2& point);

struct DistortionJacobians {
  Vec2 value;
  Eigen::Matrix2d d_point;                 // d distorted / d undistorted point
  Eigen::Matrix<double, 2, 5> d_coeffs;    // d / d (k0,k1,k2,p0,p1)
  Eigen::Matrix2d d_principal;             // d / d (c_x, c_y)
};

DistortionJacobians distort_with_jacobians(const DistortionCoeffs& coeffs,
                                           const Vec2& principal_point, const Vec2& point);

struct UndistortOptions {
  int max_iterations = 50;
  double tolerance = 1e-9;  // [px]
};

/// Inverts `distort` by damped Newton iteration. Returns nullopt when the
/// iteration does not reach tolerance (non-invertible coefficients there).
std::optional<Vec2> try_undistort(const DistortionCoeffs& coeffs, const Vec2& principal_point,
                                  const Vec2& distorted, const UndistortOptions& opts = {});

/// Same as try_undistort but throws NoConvergenceError on failure.
Vec2 undistort(const DistortionCoeffs& coeffs, const Vec2& principal_point, const Vec2& distorted,
               const UndistortOptions& opts = {});

struct FullProjection {
  ProjectionStatus status = ProjectionStatus::kOk;
  Vec2 pixel = Vec2::Zero();          // X_Rd [px]
  VirtualPoint virtual_point;         // intermediate virtual image point
  Vec2 distorted_lens_center = Vec2::Zero();
};

/// Full forward model: world point -> pose -> virtual image -> micro lens
/// `lens_id` -> distorted raw image. With `enforce_visibility` the result must
/// fall inside the micro image (micro_image_radius around the distorted
/// center); this realizes the masking function of the cost.
FullProjection project_full(const PlenopticIntrinsics& intr, const MicroLensGrid& grid,
                            const Pose& pose, const Vec3& x_world, int lens_id,
                            bool enforce_visibility = true);

struct FullProjectionJacobians {
  ProjectionStatus status = ProjectionStatus::kOk;
  Vec2 pixel = Vec2::Zero();
  double virtual_depth = 0.0;
  IntrinsicsJacobian d_intrinsics = IntrinsicsJacobian::Zero();
  PoseJacobian d_pose = PoseJacobian::Zero();
  PointJacobian d_point = PointJacobian::Zero();
};

/// Forward model plus analytic derivatives with respect to all ten intrinsic
/// parameters, the 6-dof pose perturbation (rotation left-multiplied,
/// translation additive) and the world point. Visibility is not enforced:
/// residuals of records that drift out of their micro image stay smooth.
FullProjectionJacobians project_full_with_jacobians(const PlenopticIntrinsics& intr,
                                                    const MicroLensGrid& grid, const Pose& pose,
                                                    const Vec3& x_world, int lens_id);

}  // namespace model
}  // namespace plencal
