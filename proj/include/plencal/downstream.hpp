#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "plencal/camera.hpp"
#include "plencal/model.hpp"
#include "plencal/types.hpp"

namespace plencal {
namespace downstream {

class NonFiniteDepthError : public Error {
 public:
  using Error::Error;
};

/// Metric object distance for a virtual depth via the thin lens equation:
/// z_C = (1/f_L - 1/b_L)^-1 with b_L = v B + b_L0. A finite positive depth
/// needs b_L > f_L; z_C is strictly decreasing in v on that range.
double metric_depth(const PlenopticIntrinsics& intr, double v);

/// Central perspective projection of a virtual image point onto the plane at
/// distance 2B behind the MLA (the total covering plane, v = 2), along the
/// ray through the main lens center. Identity for points at v = 2.
Vec2 central_perspective_project(const PlenopticIntrinsics& intr, const VirtualPoint& vp,
                                 double plane_b = -1.0 /* <0: default 2B */);

struct RgbdPoint {
  int point_id = 0;
  double x_proj = 0.0;  // [px] on the common plane
  double y_proj = 0.0;
  double depth_mm = 0.0;
};

struct RgbdFrame {
  int view_id = 0;
  double equivalent_focal_px = 0.0;  // (2B + b_L0) / s_x
  std::vector<RgbdPoint> points;
};

struct LabeledVirtualPoint {
  int point_id = 0;
  VirtualPoint vp;
};

/// Pinhole-mimicking frame for RGB-D consumers: projected coordinates on the
/// common plane plus metric depth per point.
RgbdFrame export_rgbd_frame(const PlenopticIntrinsics& intr,
                            const std::vector<LabeledVirtualPoint>& points, int view_id = 0);

struct CloudPoint {
  Vec3 position = Vec3::Zero();  // world frame [mm]
  std::optional<Eigen::Matrix<std::uint8_t, 3, 1>> color;
};

/// ASCII PLY (format ascii 1.0) with float x/y/z in millimeters and optional
/// uchar r/g/b.
void write_ply(std::ostream& os, const std::vector<CloudPoint>& cloud);

/// Back-projects a virtual image point at depth v to camera coordinates [mm].
Vec3 virtual_to_camera(const PlenopticIntrinsics& intr, const VirtualPoint& vp);

/// Metric world-frame cloud from per-view virtual points and poses.
std::vector<CloudPoint> export_point_cloud(const PlenopticIntrinsics& intr,
                                           const std::vector<Pose>& poses,
                                           const std::vector<std::vector<VirtualPoint>>& per_view);

struct UndistortionMap {
  double step = 0.0;
  int cols = 0;  // nodes per row
  int rows = 0;
  double width = 0.0;   // sensor [px]
  double height = 0.0;
  std::vector<Vec2> nodes;  // row-major undistorted coordinates
  std::vector<char> valid;

  struct Lookup {
    Vec2 value = Vec2::Zero();
    bool clamped = false;  // query outside the sensor, clamped to the border
    bool valid = true;     // false where the inversion failed
  };
  Lookup operator()(const Vec2& distorted) const;
};

/// Precomputed distorted -> undistorted table at grid-step resolution with
/// bilinear interpolation between nodes.
UndistortionMap build_undistortion_map(const PlenopticIntrinsics& intr, double sensor_width,
                                       double sensor_height, double step);

}  // namespace downstream
}  // namespace plencal
