#pragma once

#include <cstdint>
#include <vector>

#include "plencal/types.hpp"

namespace plencal {

/// Radial (k0,k1,k2) and tangential (p0,p1) coefficients of the Brown
/// distortion model, applied to raw sensor coordinates in pixels.
/// All-zero coefficients give the identity mapping.
struct DistortionCoeffs {
  double k0 = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double p0 = 0.0;
  double p1 = 0.0;

  bool is_zero() const { return k0 == 0.0 && k1 == 0.0 && k2 == 0.0 && p0 == 0.0 && p1 == 0.0; }
};

/// Intrinsic parameters of a focused plenoptic camera in Galilean mode.
///
/// Lengths are millimeters, image coordinates pixels. The pixel pitch
/// (s_x, s_y) is configuration, not an optimized parameter; it is the only
/// place where metric and pixel units meet.
struct PlenopticIntrinsics {
  double f_L = 0.0;      // main lens focal length [mm]
  double b_L0 = 0.0;     // main lens to MLA distance [mm]
  double B = 0.0;        // MLA to sensor distance [mm]
  double c_x = 0.0;      // principal point [px]
  double c_y = 0.0;      // principal point [px]
  double s_x = 0.0;      // pixel pitch [mm/px]
  double s_y = 0.0;      // pixel pitch [mm/px]
  DistortionCoeffs distortion;

  PlenopticIntrinsics() = default;
  PlenopticIntrinsics(double f_L_, double b_L0_, double B_, double c_x_, double c_y_,
                      double s_x_, double s_y_, DistortionCoeffs dist = {})
      : f_L(f_L_), b_L0(b_L0_), B(B_), c_x(c_x_), c_y(c_y_), s_x(s_x_), s_y(s_y_),
        distortion(dist) {
    validate();
  }

  Vec2 principal_point() const { return Vec2(c_x, c_y); }

  /// Throws ConfigError for non-positive lengths or a non-Galilean layout
  /// (the MLA must sit between main lens and its image plane: b_L0 < f_L).
  void validate() const;
};

/// Micro image centers C_I on the sensor, indexed by dense lens ids.
struct MicroLensGrid {
  struct Center {
    int lens_id = 0;
    double x = 0.0;  // [px]
    double y = 0.0;  // [px]
  };

  std::vector<Center> centers;
  double micro_image_radius = 0.0;  // visibility radius [px]
  double sensor_width = 0.0;        // [px]
  double sensor_height = 0.0;       // [px]

  MicroLensGrid() = default;
  MicroLensGrid(std::vector<Center> centers_, double radius, double width, double height)
      : centers(std::move(centers_)), micro_image_radius(radius), sensor_width(width),
        sensor_height(height) {
    validate();
  }

  std::size_t size() const { return centers.size(); }
  Vec2 center(int lens_id) const {
    const Center& c = centers.at(static_cast<std::size_t>(lens_id));
    return Vec2(c.x, c.y);
  }

  /// Checks dense unique ids, in-bounds centers and a positive radius.
  void validate() const;
};

/// A point of the virtual image in dimensionless coordinates: lateral
/// position in pixels, axial position as virtual depth v = b / B.
struct VirtualPoint {
  double x = 0.0;  // x_V' [px]
  double y = 0.0;  // y_V' [px]
  double v = 0.0;  // virtual depth, dimensionless

  Vec2 xy() const { return Vec2(x, y); }
};

}  // namespace plencal
