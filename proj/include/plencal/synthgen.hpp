#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "plencal/camera.hpp"
#include "plencal/observations.hpp"
#include "plencal/types.hpp"

namespace plencal {
namespace synthgen {

class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Camera path for a synthetic capture: either explicit poses or a winding
/// arc in front of the scene, mirroring a hand-held calibration movement.
struct TrajectorySpec {
  int num_views = 30;
  // winding-path amplitudes [mm]; ignored when explicit poses are given
  double amplitude_x = 300.0;
  double amplitude_y = 200.0;
  double amplitude_z = 150.0;
  double look_at_depth = 1700.0;  // [mm] target depth on the initial optical axis
  double max_roll_deg = 8.0;
  std::vector<Pose> explicit_poses;  // used when non-empty
};

struct Box {
  Vec3 lo = Vec3(-550.0, -550.0, 900.0);
  Vec3 hi = Vec3(550.0, 550.0, 2600.0);
};

struct SceneSpec {
  int num_points = 500;
  Box point_volume;  // world frame [mm]
  TrajectorySpec trajectory;
  double noise_sigma = 0.0;      // [px], per observation coordinate
  double outlier_fraction = 0.0;  // in [0, 1)
  int num_scale_constraints = 3;
  std::uint64_t rng_seed = 1;

  void validate() const;  // throws GenerationError naming the offending field
};

struct SyntheticDataset {
  PlenopticIntrinsics intrinsics_gt;
  MicroLensGrid grid;
  std::vector<Pose> poses_gt;
  std::vector<Vec3> points_gt;  // world frame [mm]
  ObservationSet observations;
  std::vector<ScaleConstraint> scale_constraints;
  std::vector<std::size_t> outlier_indices;  // into observations.records()
  SceneSpec spec;
};

/// Hexagonally packed micro image centers covering the sensor with the given
/// pitch; the visibility radius defaults to pitch/2 - 1 px.
MicroLensGrid generate_hex_grid(double sensor_width, double sensor_height, double pitch,
                                std::optional<double> micro_image_radius = std::nullopt);

/// Generates a ground-truth dataset: every point is observed through every
/// micro lens whose micro image contains its projection, in at least two
/// views (points are resampled until this holds). Gaussian noise is truncated
/// at six sigma; outliers are replaced by uniform in-micro-image positions.
/// Deterministic for a fixed seed.
SyntheticDataset generate(const SceneSpec& spec, const PlenopticIntrinsics& intrinsics_gt,
                          const MicroLensGrid& grid);

/// The Table-style 16 mm Raytrix R5 configuration used as the default
/// synthetic camera (2048 x 2048, 5.5 um pixels), with mild distortion.
PlenopticIntrinsics default_camera();

/// Same camera with all distortion coefficients zero.
PlenopticIntrinsics default_camera_no_distortion();

/// Default hexagonal grid (pitch 23 px) for the default camera.
MicroLensGrid default_grid();

}  // namespace synthgen
}  // namespace plencal
