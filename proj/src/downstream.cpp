#include "plencal/downstream.hpp"

#include <cmath>
#include <ostream>

namespace plencal {
namespace downstream {

double metric_depth(const PlenopticIntrinsics& intr, double v) {
  if (!(v > 1.0)) throw NonFiniteDepthError("metric_depth: virtual depth must exceed 1");
  const double b_L = v * intr.B + intr.b_L0;
  if (!(b_L > intr.f_L)) {
    throw NonFiniteDepthError("metric_depth: b_L <= f_L has no finite positive object distance");
  }
  return 1.0 / (1.0 / intr.f_L - 1.0 / b_L);
}

Vec2 central_perspective_project(const PlenopticIntrinsics& intr, const VirtualPoint& vp,
                                 double plane_b) {
  const double target = plane_b > 0.0 ? plane_b : 2.0 * intr.B;
  const double denom = vp.v * intr.B + intr.b_L0;
  if (!(denom > 0.0)) throw NonFiniteDepthError("central_perspective_project: v B + b_L0 <= 0");
  const double scale = (target + intr.b_L0) / denom;
  if (scale == 1.0) return vp.xy();  // the point already lies on the plane
  return Vec2((vp.x - intr.c_x) * scale + intr.c_x, (vp.y - intr.c_y) * scale + intr.c_y);
}

RgbdFrame export_rgbd_frame(const PlenopticIntrinsics& intr,
                            const std::vector<LabeledVirtualPoint>& points, int view_id) {
  RgbdFrame frame;
  frame.view_id = view_id;
  frame.equivalent_focal_px = (2.0 * intr.B + intr.b_L0) / intr.s_x;
  frame.points.reserve(points.size());
  for (const LabeledVirtualPoint& p : points) {
    const Vec2 proj = central_perspective_project(intr, p.vp);
    frame.points.push_back({p.point_id, proj.x(), proj.y(), metric_depth(intr, p.vp.v)});
  }
  return frame;
}

Vec3 virtual_to_camera(const PlenopticIntrinsics& intr, const VirtualPoint& vp) {
  const double z = metric_depth(intr, vp.v);
  const double b_L = vp.v * intr.B + intr.b_L0;
  // Inverse of the thin-lens projection: x_C = x_V z_C / b_L.
  const double x_v = (vp.x - intr.c_x) * intr.s_x;
  const double y_v = (vp.y - intr.c_y) * intr.s_y;
  return Vec3(x_v * z / b_L, y_v * z / b_L, z);
}

std::vector<CloudPoint> export_point_cloud(const PlenopticIntrinsics& intr,
                                           const std::vector<Pose>& poses,
                                           const std::vector<std::vector<VirtualPoint>>& per_view) {
  std::vector<CloudPoint> cloud;
  for (std::size_t j = 0; j < per_view.size() && j < poses.size(); ++j) {
    const Pose world_from_camera = poses[j].inverse();
    for (const VirtualPoint& vp : per_view[j]) {
      cloud.push_back({world_from_camera * virtual_to_camera(intr, vp), std::nullopt});
    }
  }
  return cloud;
}

void write_ply(std::ostream& os, const std::vector<CloudPoint>& cloud) {
  const bool with_color = !cloud.empty() && cloud.front().color.has_value();
  os << "ply\n"
     << "format ascii 1.0\n"
     << "element vertex " << cloud.size() << "\n"
     << "property float x\n"
     << "property float y\n"
     << "property float z\n";
  if (with_color) {
    os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  os << "end_header\n";
  for (const CloudPoint& p : cloud) {
    os << static_cast<float>(p.position.x()) << " " << static_cast<float>(p.position.y()) << " "
       << static_cast<float>(p.position.z());
    if (with_color) {
      const auto& c = p.color.value_or(Eigen::Matrix<std::uint8_t, 3, 1>::Zero());
      os << " " << static_cast<int>(c[0]) << " " << static_cast<int>(c[1]) << " "
         << static_cast<int>(c[2]);
    }
    os << "\n";
  }
}

UndistortionMap::Lookup UndistortionMap::operator()(const Vec2& distorted) const {
  Lookup out;
  double x = distorted.x();
  double y = distorted.y();
  if (x < 0.0 || x > width || y < 0.0 || y > height) {
    out.clamped = true;
    x = std::clamp(x, 0.0, width);
    y = std::clamp(y, 0.0, height);
  }
  const double gx = std::min(x / step, static_cast<double>(cols - 1) - 1e-12);
  const double gy = std::min(y / step, static_cast<double>(rows - 1) - 1e-12);
  const int ix = std::min(static_cast<int>(gx), cols - 2);
  const int iy = std::min(static_cast<int>(gy), rows - 2);
  const double fx = gx - ix;
  const double fy = gy - iy;
  const auto node = [&](int r, int c) -> const Vec2& {
    return nodes[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                 static_cast<std::size_t>(c)];
  };
  const auto node_valid = [&](int r, int c) {
    return valid[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                 static_cast<std::size_t>(c)] != 0;
  };
  if (!node_valid(iy, ix) || !node_valid(iy, ix + 1) || !node_valid(iy + 1, ix) ||
      !node_valid(iy + 1, ix + 1)) {
    out.valid = false;
    return out;
  }
  out.value = (1.0 - fy) * ((1.0 - fx) * node(iy, ix) + fx * node(iy, ix + 1)) +
              fy * ((1.0 - fx) * node(iy + 1, ix) + fx * node(iy + 1, ix + 1));
  return out;
}

UndistortionMap build_undistortion_map(const PlenopticIntrinsics& intr, double sensor_width,
                                       double sensor_height, double step) {
  if (!(step > 0.0)) throw ConfigError("build_undistortion_map: step must be positive");
  UndistortionMap map;
  map.step = step;
  map.width = sensor_width;
  map.height = sensor_height;
  map.cols = static_cast<int>(std::ceil(sensor_width / step)) + 1;
  map.rows = static_cast<int>(std::ceil(sensor_height / step)) + 1;
  map.nodes.resize(static_cast<std::size_t>(map.cols) * static_cast<std::size_t>(map.rows));
  map.valid.assign(map.nodes.size(), 1);
  const Vec2 c_L = intr.principal_point();
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) {
      const Vec2 distorted(c * step, r * step);
      const std::size_t idx =
          static_cast<std::size_t>(r) * static_cast<std::size_t>(map.cols) + static_cast<std::size_t>(c);
      const std::optional<Vec2> u = model::try_undistort(intr.distortion, c_L, distorted);
      if (u) {
        map.nodes[idx] = *u;
      } else {
        map.nodes[idx] = distorted;
        map.valid[idx] = 0;
      }
    }
  }
  return map;
}

}  // namespace downstream
}  // namespace plencal
