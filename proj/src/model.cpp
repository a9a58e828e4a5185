#include "plencal/model.hpp"

#include <cmath>

namespace plencal {

void PlenopticIntrinsics::validate() const {
  if (!(f_L > 0.0)) throw ConfigError("f_L must be positive");
  if (!(b_L0 > 0.0)) throw ConfigError("b_L0 must be positive");
  if (!(B > 0.0)) throw ConfigError("B must be positive");
  if (!(s_x > 0.0)) throw ConfigError("s_x must be positive");
  if (!(s_y > 0.0)) throw ConfigError("s_y must be positive");
  if (!(b_L0 < f_L)) {
    throw ConfigError("b_L0 must be smaller than f_L (Galilean mode: virtual image behind sensor)");
  }
}

void MicroLensGrid::validate() const {
  if (!(micro_image_radius > 0.0)) throw ConfigError("micro_image_radius must be positive");
  if (!(sensor_width > 0.0) || !(sensor_height > 0.0)) {
    throw ConfigError("sensor dimensions must be positive");
  }
  std::vector<char> seen(centers.size(), 0);
  for (const Center& c : centers) {
    if (c.lens_id < 0 || c.lens_id >= static_cast<int>(centers.size())) {
      throw ConfigError("lens_id out of range: ids must be dense in [0, L)");
    }
    if (seen[static_cast<std::size_t>(c.lens_id)]) throw ConfigError("duplicate lens_id");
    seen[static_cast<std::size_t>(c.lens_id)] = 1;
    if (c.x < 0.0 || c.x > sensor_width || c.y < 0.0 || c.y > sensor_height) {
      throw ConfigError("micro image center outside sensor bounds");
    }
  }
}

namespace model {

const char* to_string(ProjectionStatus s) {
  switch (s) {
    case ProjectionStatus::kOk: return "ok";
    case ProjectionStatus::kDegenerateDepth: return "degenerate depth";
    case ProjectionStatus::kNonPositiveVirtualDepth: return "non-positive virtual depth";
    case ProjectionStatus::kOutOfMicroImage: return "out of micro image";
  }
  return "unknown";
}

std::optional<double> main_lens_image_distance(const PlenopticIntrinsics& intr, double z_C) {
  if (!(z_C > intr.f_L)) return std::nullopt;
  return intr.f_L * z_C / (z_C - intr.f_L);
}

VirtualProjection project_to_virtual(const PlenopticIntrinsics& intr, const Vec3& x_camera) {
  VirtualProjection out;
  const double z = x_camera.z();
  const std::optional<double> b_L = main_lens_image_distance(intr, z);
  if (!b_L) {
    out.status = ProjectionStatus::kDegenerateDepth;
    return out;
  }
  out.b_L = *b_L;
  const double v = (*b_L - intr.b_L0) / intr.B;
  if (!(v > 0.0)) {
    out.status = ProjectionStatus::kNonPositiveVirtualDepth;
    return out;
  }
  // Homogeneous scale of the projection resolves to z_C, so the lateral
  // virtual coordinates are b_L * x / z, converted to pixels about c_L.
  out.point.x = *b_L * x_camera.x() / z / intr.s_x + intr.c_x;
  out.point.y = *b_L * x_camera.y() / z / intr.s_y + intr.c_y;
  out.point.v = v;
  return out;
}

Vec2 micro_lens_center(const Vec2& micro_image_center, const Vec2& principal_point, double b_L0,
                       double B) {
  const double scale = b_L0 / (b_L0 + B);
  return principal_point + (micro_image_center - principal_point) * scale;
}

std::vector<Vec2> micro_lens_centers(const PlenopticIntrinsics& intr, const MicroLensGrid& grid) {
  std::vector<Vec2> out(grid.size());
  const Vec2 c_L = intr.principal_point();
  for (const MicroLensGrid::Center& c : grid.centers) {
    const Vec2 distorted = distort(intr.distortion, c_L, Vec2(c.x, c.y));
    out[static_cast<std::size_t>(c.lens_id)] = micro_lens_center(distorted, c_L, intr.b_L0, intr.B);
  }
  return out;
}

Vec2 project_virtual_to_raw(const VirtualPoint& vp, const Vec2& c_ML) {
  return c_ML + (vp.xy() - c_ML) / vp.v;
}

Vec2 distort(const DistortionCoeffs& d, const Vec2& c, const Vec2& p) {
  const double xp = p.x() - c.x();
  const double yp = p.y() - c.y();
  const double r2 = xp * xp + yp * yp;
  const double radial = d.k0 * r2 + d.k1 * r2 * r2 + d.k2 * r2 * r2 * r2;
  const double dx = xp * radial + d.p0 * (r2 + 2.0 * xp * xp) + 2.0 * d.p1 * xp * yp;
  const double dy = yp * radial + d.p1 * (r2 + 2.0 * yp * yp) + 2.0 * d.p0 * xp * yp;
  return Vec2(p.x() + dx, p.y() + dy);
}

DistortionJacobians distort_with_jacobians(const DistortionCoeffs& d, const Vec2& c,
                                           const Vec2& p) {
  DistortionJacobians out;
  const double xp = p.x() - c.x();
  const double yp = p.y() - c.y();
  const double r2 = xp * xp + yp * yp;
  const double r4 = r2 * r2;
  const double r6 = r4 * r2;
  const double radial = d.k0 * r2 + d.k1 * r4 + d.k2 * r6;
  const double radial_dr2 = d.k0 + 2.0 * d.k1 * r2 + 3.0 * d.k2 * r4;

  out.value.x() = p.x() + xp * radial + d.p0 * (r2 + 2.0 * xp * xp) + 2.0 * d.p1 * xp * yp;
  out.value.y() = p.y() + yp * radial + d.p1 * (r2 + 2.0 * yp * yp) + 2.0 * d.p0 * xp * yp;

  // A = d(displacement)/d(primed point); then d/d point = I + A and
  // d/d principal = -A.
  Eigen::Matrix2d a;
  a(0, 0) = radial + 2.0 * xp * xp * radial_dr2 + 6.0 * d.p0 * xp + 2.0 * d.p1 * yp;
  a(0, 1) = 2.0 * xp * yp * radial_dr2 + 2.0 * d.p0 * yp + 2.0 * d.p1 * xp;
  a(1, 0) = 2.0 * xp * yp * radial_dr2 + 2.0 * d.p1 * xp + 2.0 * d.p0 * yp;
  a(1, 1) = radial + 2.0 * yp * yp * radial_dr2 + 6.0 * d.p1 * yp + 2.0 * d.p0 * xp;

  out.d_point = Eigen::Matrix2d::Identity() + a;
  out.d_principal = -a;

  out.d_coeffs(0, 0) = xp * r2;
  out.d_coeffs(0, 1) = xp * r4;
  out.d_coeffs(0, 2) = xp * r6;
  out.d_coeffs(0, 3) = r2 + 2.0 * xp * xp;
  out.d_coeffs(0, 4) = 2.0 * xp * yp;
  out.d_coeffs(1, 0) = yp * r2;
  out.d_coeffs(1, 1) = yp * r4;
  out.d_coeffs(1, 2) = yp * r6;
  out.d_coeffs(1, 3) = 2.0 * xp * yp;
  out.d_coeffs(1, 4) = r2 + 2.0 * yp * yp;
  return out;
}

std::optional<Vec2> try_undistort(const DistortionCoeffs& d, const Vec2& c, const Vec2& distorted,
                                  const UndistortOptions& opts) {
  if (d.is_zero()) return distorted;
  Vec2 x = distorted;  // distortion is small: the distorted point seeds Newton
  for (int it = 0; it < opts.max_iterations; ++it) {
    const DistortionJacobians j = distort_with_jacobians(d, c, x);
    const Vec2 err = j.value - distorted;
    if (err.norm() < opts.tolerance) return x;
    const double det = j.d_point.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-14) return std::nullopt;
    Vec2 step = j.d_point.inverse() * err;
    // Limit the step to stay within the basin for strong coefficients.
    const double max_step = 50.0;
    if (step.norm() > max_step) step *= max_step / step.norm();
    x -= step;
    if (!x.allFinite()) return std::nullopt;
  }
  const Vec2 err = distort(d, c, x) - distorted;
  if (err.norm() < opts.tolerance) return x;
  return std::nullopt;
}

Vec2 undistort(const DistortionCoeffs& d, const Vec2& c, const Vec2& distorted,
               const UndistortOptions& opts) {
  const std::optional<Vec2> r = try_undistort(d, c, distorted, opts);
  if (!r) throw NoConvergenceError("undistort did not converge: coefficients not invertible here");
  return *r;
}

FullProjection project_full(const PlenopticIntrinsics& intr, const MicroLensGrid& grid,
                            const Pose& pose, const Vec3& x_world, int lens_id,
                            bool enforce_visibility) {
  FullProjection out;
  const Vec3 x_camera = pose * x_world;
  const VirtualProjection vp = project_to_virtual(intr, x_camera);
  if (vp.status != ProjectionStatus::kOk) {
    out.status = vp.status;
    return out;
  }
  if (!(vp.point.v > 1.0)) {
    // v <= 1 puts the virtual image at or in front of the sensor; the
    // Galilean projection through a micro lens is undefined there.
    out.status = ProjectionStatus::kNonPositiveVirtualDepth;
    return out;
  }
  out.virtual_point = vp.point;
  const Vec2 c_L = intr.principal_point();
  const Vec2 c_I = grid.center(lens_id);
  const Vec2 c_Id = distort(intr.distortion, c_L, c_I);
  out.distorted_lens_center = c_Id;
  const Vec2 c_ML = micro_lens_center(c_Id, c_L, intr.b_L0, intr.B);
  const Vec2 raw = project_virtual_to_raw(vp.point, c_ML);
  out.pixel = distort(intr.distortion, c_L, raw);
  if (enforce_visibility && (out.pixel - c_Id).norm() > grid.micro_image_radius) {
    out.status = ProjectionStatus::kOutOfMicroImage;
  }
  return out;
}

FullProjectionJacobians project_full_with_jacobians(const PlenopticIntrinsics& intr,
                                                    const MicroLensGrid& grid, const Pose& pose,
                                                    const Vec3& x_world, int lens_id) {
  FullProjectionJacobians out;

  const Vec3 y = pose.rotation * x_world;  // rotated point, X_C - t
  const Vec3 x_camera = y + pose.translation;
  const double z = x_camera.z();
  if (!(z > intr.f_L)) {
    out.status = ProjectionStatus::kDegenerateDepth;
    return out;
  }

  const double f = intr.f_L;
  const double beta = f * z / (z - f);          // b_L
  const double v = (beta - intr.b_L0) / intr.B;  // virtual depth
  if (!(v > 1.0)) {
    out.status = ProjectionStatus::kNonPositiveVirtualDepth;
    return out;
  }
  out.virtual_depth = v;

  const double dbeta_dz = -beta * beta / (z * z);
  const double dbeta_df = beta * beta / (f * f);

  const Vec2 c_L = intr.principal_point();
  const Vec2 m(beta * x_camera.x() / z / intr.s_x + intr.c_x,
               beta * x_camera.y() / z / intr.s_y + intr.c_y);

  // Micro lens center chain: distorted micro image center, then the central
  // scaling toward the principal point.
  const Vec2 c_I = grid.center(lens_id);
  const DistortionJacobians dc = distort_with_jacobians(intr.distortion, c_L, c_I);
  const Vec2 c_Id = dc.value;
  const double denom = intr.b_L0 + intr.B;
  const double rho = intr.b_L0 / denom;
  const Vec2 c_ML = c_L + (c_Id - c_L) * rho;
  const double drho_dbL0 = intr.B / (denom * denom);
  const double drho_dB = -intr.b_L0 / (denom * denom);

  const Vec2 raw = c_ML + (m - c_ML) / v;
  const DistortionJacobians dr = distort_with_jacobians(intr.distortion, c_L, raw);
  out.pixel = dr.value;

  const double inv_v = 1.0 / v;
  const Eigen::Matrix2d draw_dm = Eigen::Matrix2d::Identity() * inv_v;
  const Eigen::Matrix2d draw_dcml = Eigen::Matrix2d::Identity() * (1.0 - inv_v);
  const Vec2 draw_dv = (c_ML - m) / (v * v);

  // Chain for a camera-frame direction d(X_C): z enters b_L, v and m.
  const auto pixel_from_dxc = [&](const Vec3& dxc) -> Vec2 {
    const double dz = dxc.z();
    const double dbeta = dbeta_dz * dz;
    const double dv = dbeta / intr.B;
    Vec2 dm;
    dm.x() = (x_camera.x() * dbeta + beta * dxc.x()) / (z * intr.s_x) -
             beta * x_camera.x() * dz / (z * z * intr.s_x);
    dm.y() = (x_camera.y() * dbeta + beta * dxc.y()) / (z * intr.s_y) -
             beta * x_camera.y() * dz / (z * z * intr.s_y);
    const Vec2 draw = draw_dm * dm + draw_dv * dv;
    return dr.d_point * draw;
  };

  // Pose: rotation is perturbed on the left, exp(w^) * R, so the rotated
  // point moves by -[y]_x * dw; translation is additive.
  const Mat3 y_skew = skew(y);
  for (int i = 0; i < 3; ++i) {
    out.d_pose.col(i) = pixel_from_dxc(-y_skew.col(i));
    out.d_pose.col(3 + i) = pixel_from_dxc(Vec3::Unit(i));
  }
  const Mat3 rot = pose.rotation.toRotationMatrix();
  for (int i = 0; i < 3; ++i) out.d_point.col(i) = pixel_from_dxc(rot.col(i));

  // f_L: only through b_L (and v, m with it).
  {
    const double dv = dbeta_df / intr.B;
    const Vec2 dm(x_camera.x() * dbeta_df / (z * intr.s_x),
                  x_camera.y() * dbeta_df / (z * intr.s_y));
    out.d_intrinsics.col(kParamFL) = dr.d_point * (draw_dm * dm + draw_dv * dv);
  }
  // b_L0: shifts v and scales the lens center toward c_L.
  {
    const double dv = -1.0 / intr.B;
    const Vec2 dcml = (c_Id - c_L) * drho_dbL0;
    out.d_intrinsics.col(kParamBL0) = dr.d_point * (draw_dcml * dcml + draw_dv * dv);
  }
  // B: shifts v and the lens center scaling.
  {
    const double dv = -v / intr.B;
    const Vec2 dcml = (c_Id - c_L) * drho_dB;
    out.d_intrinsics.col(kParamB) = dr.d_point * (draw_dcml * dcml + draw_dv * dv);
  }
  // Principal point: enters m directly, both distortion evaluations and the
  // lens center scaling pivot.
  for (int i = 0; i < 2; ++i) {
    const Vec2 e = Vec2::Unit(i);
    const Vec2 dm = e;
    const Vec2 dcid = dc.d_principal.col(i);
    const Vec2 dcml = e * (1.0 - rho) + dcid * rho;
    const Vec2 draw = draw_dm * dm + draw_dcml * dcml;
    out.d_intrinsics.col(kParamCx + i) = dr.d_point * draw + dr.d_principal.col(i);
  }
  // Distortion coefficients: via the distorted lens center and the final
  // distortion of the raw point.
  for (int i = 0; i < 5; ++i) {
    const Vec2 dcml = dc.d_coeffs.col(i) * rho;
    const Vec2 draw = draw_dcml * dcml;
    out.d_intrinsics.col(kParamK0 + i) = dr.d_point * draw + dr.d_coeffs.col(i);
  }
  return out;
}

}  // namespace model
}  // namespace plencal
