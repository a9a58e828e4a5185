#include "plencal/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "plencal/model.hpp"

namespace plencal {
namespace synthgen {

namespace {

constexpr double kPi = std::numbers::pi;

Pose look_at(const Vec3& eye, const Vec3& target, double roll_rad) {
  // Camera-from-world rotation with +z along the viewing direction.
  Vec3 fwd = (target - eye).normalized();
  Vec3 up_hint(std::sin(roll_rad), -std::cos(roll_rad), 0.0);
  Vec3 right = up_hint.cross(fwd).normalized();
  Vec3 down = fwd.cross(right);
  Mat3 r_wc;  // world-from-camera columns
  r_wc.col(0) = right;
  r_wc.col(1) = down;
  r_wc.col(2) = fwd;
  const Eigen::Quaterniond q_cw(r_wc.transpose());
  return Pose(q_cw.normalized(), -(q_cw * eye));
}

std::vector<Pose> winding_trajectory(const TrajectorySpec& ts) {
  if (!ts.explicit_poses.empty()) return ts.explicit_poses;
  if (ts.num_views < 2) throw GenerationError("trajectory.num_views must be at least 2");
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(ts.num_views));
  const double roll_max = ts.max_roll_deg * kPi / 180.0;
  for (int j = 0; j < ts.num_views; ++j) {
    const double t = static_cast<double>(j) / static_cast<double>(ts.num_views - 1);
    // Incommensurate frequencies and phases keep distinct views apart over
    // the whole parameter range.
    const Vec3 eye(ts.amplitude_x * std::sin(1.7 * kPi * t + 0.4),
                   ts.amplitude_y * std::sin(3.3 * kPi * t + 1.1),
                   ts.amplitude_z * std::sin(0.9 * kPi * t + 0.7));
    const Vec3 target(150.0 * std::sin(1.6 * kPi * t), 100.0 * std::cos(2.6 * kPi * t),
                      ts.look_at_depth);
    poses.push_back(look_at(eye, target, roll_max * std::sin(3.4 * kPi * t)));
  }
  // World frame = first camera frame.
  const Pose anchor = poses.front().inverse();
  for (Pose& p : poses) {
    p = p.compose(anchor);
    p.rotation.normalize();
  }
  poses.front() = Pose::identity();
  return poses;
}

/// Uniform bucket index over lens centers for candidate lookup.
class LensIndex {
 public:
  LensIndex(const MicroLensGrid& grid, double cell) : cell_(cell) {
    for (const MicroLensGrid::Center& c : grid.centers) {
      buckets_[key(c.x, c.y)].push_back(c.lens_id);
    }
  }

  std::vector<int> candidates(const Vec2& p, double radius) const {
    std::vector<int> out;
    const int bx0 = static_cast<int>(std::floor((p.x() - radius) / cell_));
    const int bx1 = static_cast<int>(std::floor((p.x() + radius) / cell_));
    const int by0 = static_cast<int>(std::floor((p.y() - radius) / cell_));
    const int by1 = static_cast<int>(std::floor((p.y() + radius) / cell_));
    for (int by = by0; by <= by1; ++by) {
      for (int bx = bx0; bx <= bx1; ++bx) {
        const auto it = buckets_.find({bx, by});
        if (it == buckets_.end()) continue;
        out.insert(out.end(), it->second.begin(), it->second.end());
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::pair<int, int> key(double x, double y) const {
    return {static_cast<int>(std::floor(x / cell_)), static_cast<int>(std::floor(y / cell_))};
  }
  double cell_;
  std::map<std::pair<int, int>, std::vector<int>> buckets_;
};

double truncated_normal(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> dist(0.0, sigma);
  for (;;) {
    const double x = dist(rng);
    if (std::abs(x) <= 6.0 * sigma) return x;
  }
}

}  // namespace

void SceneSpec::validate() const {
  if (num_points < 8) throw GenerationError("num_points must be at least 8");
  if (trajectory.explicit_poses.empty() && trajectory.num_views < 2) {
    throw GenerationError("num_views must be at least 2");
  }
  if (noise_sigma < 0.0) throw GenerationError("noise_sigma must be non-negative");
  if (outlier_fraction < 0.0 || outlier_fraction >= 1.0) {
    throw GenerationError("outlier_fraction must be in [0, 1)");
  }
  if (num_scale_constraints < 0) {
    throw GenerationError("num_scale_constraints must be non-negative");
  }
  if (!(point_volume.lo.array() < point_volume.hi.array()).all()) {
    throw GenerationError("point_volume must have positive extent");
  }
}

MicroLensGrid generate_hex_grid(double sensor_width, double sensor_height, double pitch,
                                std::optional<double> micro_image_radius) {
  if (pitch < 4.0) throw GenerationError("pitch must be at least 4 px");
  if (sensor_width <= pitch || sensor_height <= pitch) {
    throw GenerationError("sensor dimensions must exceed the pitch");
  }
  const double row_step = pitch * std::sqrt(3.0) / 2.0;
  std::vector<MicroLensGrid::Center> centers;
  int id = 0;
  int row = 0;
  const double margin = pitch / 2.0;
  for (double y = margin; y <= sensor_height - margin; y += row_step, ++row) {
    const double x0 = margin + (row % 2 == 1 ? pitch / 2.0 : 0.0);
    for (double x = x0; x <= sensor_width - margin; x += pitch) {
      centers.push_back({id++, x, y});
    }
  }
  const double radius = micro_image_radius.value_or(pitch / 2.0 - 1.0);
  return MicroLensGrid(std::move(centers), radius, sensor_width, sensor_height);
}

PlenopticIntrinsics default_camera() {
  DistortionCoeffs dist;
  dist.k0 = 2e-9;
  dist.p0 = 1.2e-7;
  dist.p1 = -8e-8;
  return PlenopticIntrinsics(16.748, 15.893, 0.376, 1018.7, 1054.2, 0.0055, 0.0055, dist);
}

PlenopticIntrinsics default_camera_no_distortion() {
  return PlenopticIntrinsics(16.748, 15.893, 0.376, 1018.7, 1054.2, 0.0055, 0.0055);
}

MicroLensGrid default_grid() { return generate_hex_grid(2048.0, 2048.0, 23.0); }

SyntheticDataset generate(const SceneSpec& spec, const PlenopticIntrinsics& intrinsics_gt,
                          const MicroLensGrid& grid) {
  spec.validate();
  intrinsics_gt.validate();

  SyntheticDataset data;
  data.intrinsics_gt = intrinsics_gt;
  data.grid = grid;
  data.spec = spec;
  data.poses_gt = winding_trajectory(spec.trajectory);
  const int num_views = static_cast<int>(data.poses_gt.size());

  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_real_distribution<double> ux(spec.point_volume.lo.x(), spec.point_volume.hi.x());
  std::uniform_real_distribution<double> uy(spec.point_volume.lo.y(), spec.point_volume.hi.y());
  std::uniform_real_distribution<double> uz(spec.point_volume.lo.z(), spec.point_volume.hi.z());

  const LensIndex lens_index(grid, 4.0 * grid.micro_image_radius);

  // Candidate search radius around the virtual point: micro lenses whose
  // center sits within v * radius of it can contain the projection, plus
  // margin for distortion and the center scaling.
  const auto collect_point = [&](const Vec3& x_world)
      -> std::optional<std::vector<Observation>> {
    std::vector<Observation> records;
    int views_seen = 0;
    for (int j = 0; j < num_views; ++j) {
      const Pose& pose = data.poses_gt[static_cast<std::size_t>(j)];
      const model::VirtualProjection vp = model::project_to_virtual(intrinsics_gt, pose * x_world);
      if (vp.status != model::ProjectionStatus::kOk || vp.point.v <= 1.0) continue;
      const double search = vp.point.v * grid.micro_image_radius + 60.0;
      bool seen = false;
      for (const int lens : lens_index.candidates(vp.point.xy(), search)) {
        const model::FullProjection proj =
            model::project_full(intrinsics_gt, grid, pose, x_world, lens);
        if (proj.status != model::ProjectionStatus::kOk) continue;
        if (proj.pixel.x() < 0.0 || proj.pixel.x() > grid.sensor_width || proj.pixel.y() < 0.0 ||
            proj.pixel.y() > grid.sensor_height) {
          continue;
        }
        records.push_back({0, j, lens, proj.pixel.x(), proj.pixel.y()});
        seen = true;
      }
      if (seen) ++views_seen;
    }
    if (views_seen < 2) return std::nullopt;
    return records;
  };

  std::vector<Observation> all_records;
  for (int i = 0; i < spec.num_points; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const Vec3 candidate(ux(rng), uy(rng), uz(rng));
      auto records = collect_point(candidate);
      if (!records) continue;
      for (Observation& r : *records) r.point_id = i;
      all_records.insert(all_records.end(), records->begin(), records->end());
      data.points_gt.push_back(candidate);
      placed = true;
    }
    if (!placed) {
      throw GenerationError(
          "InsufficientVisibility: could not place a point visible in two views "
          "within 100 attempts");
    }
  }

  // Noise and outliers in deterministic record order.
  std::sort(all_records.begin(), all_records.end(), [](const Observation& a, const Observation& b) {
    return std::tie(a.point_id, a.view_id, a.lens_id) < std::tie(b.point_id, b.view_id, b.lens_id);
  });
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const Vec2 c_L = intrinsics_gt.principal_point();
  for (std::size_t idx = 0; idx < all_records.size(); ++idx) {
    Observation& r = all_records[idx];
    if (spec.outlier_fraction > 0.0 && u01(rng) < spec.outlier_fraction) {
      // Matching failures stay within the micro image: uniform in the disk
      // around the distorted center.
      const Vec2 center = model::distort(intrinsics_gt.distortion, c_L,
                                         grid.center(r.lens_id));
      const double ang = 2.0 * kPi * u01(rng);
      const double rad = grid.micro_image_radius * std::sqrt(u01(rng));
      r.x = center.x() + rad * std::cos(ang);
      r.y = center.y() + rad * std::sin(ang);
      data.outlier_indices.push_back(idx);
    } else if (spec.noise_sigma > 0.0) {
      r.x += truncated_normal(rng, spec.noise_sigma);
      r.y += truncated_normal(rng, spec.noise_sigma);
    }
  }
  data.observations = ObservationSet(std::move(all_records));

  // Scale constraints between well separated points.
  if (spec.num_scale_constraints > 0) {
    const double min_sep = 0.3 * (spec.point_volume.hi - spec.point_volume.lo).norm();
    std::uniform_int_distribution<int> upoint(0, spec.num_points - 1);
    int made = 0;
    for (int attempt = 0; attempt < 1000 && made < spec.num_scale_constraints; ++attempt) {
      const int a = upoint(rng);
      const int b = upoint(rng);
      if (a == b) continue;
      const double d = (data.points_gt[static_cast<std::size_t>(a)] -
                        data.points_gt[static_cast<std::size_t>(b)]).norm();
      if (d < min_sep) continue;
      data.scale_constraints.push_back({a, b, d, 1.0});
      ++made;
    }
    if (made < spec.num_scale_constraints) {
      throw GenerationError("could not find separated point pairs for scale constraints");
    }
  }
  return data;
}

}  // namespace synthgen
}  // namespace plencal
