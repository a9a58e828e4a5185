#include "plencal/plenoptic_init.hpp"

#include <algorithm>
#include <cmath>

namespace plencal {
namespace pleninit {

ScaleResult apply_metric_scale(sfm::PinholeSolution& solution,
                               const std::vector<ScaleConstraint>& constraints) {
  if (constraints.empty()) throw ConfigError("apply_metric_scale: no constraints");
  double log_sum = 0.0;
  double weight_sum = 0.0;
  for (const ScaleConstraint& c : constraints) {
    const int ia = solution.point_index(c.point_a);
    const int ib = solution.point_index(c.point_b);
    if (ia < 0 || ib < 0) continue;
    const double current = (solution.points[static_cast<std::size_t>(ia)] -
                            solution.points[static_cast<std::size_t>(ib)]).norm();
    if (current < 1e-9) throw ZeroBaselineError("apply_metric_scale: constrained points coincide");
    log_sum += c.weight * std::log(c.distance / current);
    weight_sum += c.weight;
  }
  if (weight_sum <= 0.0) throw ConfigError("apply_metric_scale: no usable constraints");

  ScaleResult out;
  out.scale = std::exp(log_sum / weight_sum);
  for (Pose& p : solution.poses) p.translation *= out.scale;
  for (Vec3& x : solution.points) x *= out.scale;
  for (const ScaleConstraint& c : constraints) {
    const int ia = solution.point_index(c.point_a);
    const int ib = solution.point_index(c.point_b);
    if (ia < 0 || ib < 0) {
      out.residuals_mm.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double d = (solution.points[static_cast<std::size_t>(ia)] -
                      solution.points[static_cast<std::size_t>(ib)]).norm();
    out.residuals_mm.push_back(std::abs(d - c.distance));
  }
  return out;
}

BInit fit_B_bL0(const std::vector<std::pair<double, double>>& v_and_bL) {
  if (v_and_bL.size() < 2) throw RankDeficientError("fit_B_bL0: fewer than two samples");
  double v_lo = v_and_bL.front().first, v_hi = v_and_bL.front().first;
  for (const auto& [v, b_L] : v_and_bL) {
    v_lo = std::min(v_lo, v);
    v_hi = std::max(v_hi, v);
  }
  if (v_hi - v_lo < 1e-9) {
    throw RankDeficientError("fit_B_bL0: all virtual depths equal (rank-1 system)");
  }
  // Normal equations of b_L = v B + b_L0.
  double svv = 0.0, sv = 0.0, svb = 0.0, sb = 0.0;
  const double n = static_cast<double>(v_and_bL.size());
  for (const auto& [v, b_L] : v_and_bL) {
    svv += v * v;
    sv += v;
    svb += v * b_L;
    sb += b_L;
  }
  const double det = svv * n - sv * sv;
  if (std::abs(det) < 1e-12 * std::max(1.0, svv * n)) {
    throw RankDeficientError("fit_B_bL0: singular normal equations");
  }
  BInit out;
  out.B = (n * svb - sv * sb) / det;
  out.b_L0 = (svv * sb - sv * svb) / det;
  out.samples_used = v_and_bL.size();
  if (!(out.B > 0.0) || !(out.b_L0 > 0.0)) {
    throw NegativeParameterError("fit_B_bL0: non-physical fit (B or b_L0 not positive)");
  }
  double ss = 0.0;
  for (const auto& [v, b_L] : v_and_bL) {
    const double r = b_L - (v * out.B + out.b_L0);
    ss += r * r;
  }
  out.rms_residual_mm = std::sqrt(ss / n);
  return out;
}

BInit init_B_bL0(const std::vector<DepthSample>& samples, double f_L, const InitBOptions& options) {
  if (!(f_L > 0.0)) throw ConfigError("init_B_bL0: f_L must be positive");
  std::vector<std::pair<double, double>> v_and_bL;
  for (const DepthSample& s : samples) {
    if (!(s.z_C > f_L)) continue;  // image distance undefined at or before the focal plane
    if (s.v < options.v_min || s.v > options.v_max) continue;
    v_and_bL.emplace_back(s.v, 1.0 / (1.0 / f_L - 1.0 / s.z_C));
  }
  if (v_and_bL.size() < 2) throw RankDeficientError("init_B_bL0: fewer than two usable samples");
  BInit out = fit_B_bL0(v_and_bL);
  if (!(out.b_L0 < f_L)) {
    throw NegativeParameterError("init_B_bL0: non-Galilean fit (b_L0 >= f_L)");
  }
  return out;
}

std::vector<DepthSample> collect_depth_samples(const sfm::PinholeSolution& solution,
                                               const std::vector<sfm::VirtualMeasurement>& meas,
                                               double depth_offset) {
  std::vector<DepthSample> out;
  for (std::size_t i = 0; i < meas.size(); ++i) {
    const sfm::VirtualMeasurement& m = meas[i];
    if (m.status != sfm::ClusterStatus::kOk) continue;
    if (i < solution.measurement_inlier.size() && !solution.measurement_inlier[i]) continue;
    const int pose_idx = solution.pose_index(m.view_id);
    const int point_idx = solution.point_index(m.point_id);
    if (pose_idx < 0 || point_idx < 0) continue;
    const Vec3 xc = solution.poses[static_cast<std::size_t>(pose_idx)] *
                    solution.points[static_cast<std::size_t>(point_idx)];
    if (xc.z() <= 0.0) continue;
    out.push_back({m.v, xc.z() + depth_offset});
  }
  return out;
}

ImplicitScaleResult implicit_metric_scale(sfm::PinholeSolution& solution,
                                          const std::vector<sfm::VirtualMeasurement>& meas,
                                          double f_L, double B, const InitBOptions& options) {
  const std::vector<DepthSample> samples = collect_depth_samples(solution, meas);
  std::vector<DepthSample> used;
  for (const DepthSample& s : samples) {
    if (s.v >= options.v_min && s.v <= options.v_max && s.z_C > 0.0) used.push_back(s);
  }
  if (used.size() < 2) throw RankDeficientError("implicit_metric_scale: too few samples");

  // Pinhole depths measure z_C - f_L: the equivalence places the pinhole at
  // the focal point, so s z_pinhole = z_C - f_L. With the thin lens equation,
  // b_L = f_L + f_L^2 / (z_C - f_L), every sample becomes linear in the
  // unknowns (f_L^2 / s, b_L0):
  //   (f_L^2 / s) (1 / z_pinhole) - b_L0 = v B - f_L.
  double s11 = 0.0, s12 = 0.0, s22 = 0.0, r1 = 0.0, r2 = 0.0;
  for (const DepthSample& s : used) {
    const double a = 1.0 / s.z_C;
    const double rhs = s.v * B - f_L;
    s11 += a * a;
    s12 += -a;
    s22 += 1.0;
    r1 += a * rhs;
    r2 += -rhs;
  }
  const double det = s11 * s22 - s12 * s12;
  if (std::abs(det) < 1e-14 * std::max(1.0, s11 * s22)) {
    throw RankDeficientError("implicit_metric_scale: depths carry no scale information");
  }
  const double x1 = (s22 * r1 - s12 * r2) / det;  // f_L^2 / s
  const double x2 = (s11 * r2 - s12 * r1) / det;  // b_L0
  if (!(x1 > 0.0)) throw NegativeParameterError("implicit_metric_scale: non-physical scale");
  const double scale = f_L * f_L / x1;
  const double b_L0 = x2;
  if (!(b_L0 > 0.0) || !(b_L0 < f_L)) {
    throw NegativeParameterError("implicit_metric_scale: non-Galilean b_L0");
  }
  for (Pose& p : solution.poses) p.translation *= scale;
  for (Vec3& x : solution.points) x *= scale;
  return {scale, b_L0};
}

ba::CalibrationProblem seed_plenoptic_problem(const sfm::PinholeSolution& solution, double B,
                                              double b_L0, const PlenopticIntrinsics& config,
                                              const MicroLensGrid& grid,
                                              const ObservationSet& observations,
                                              const std::vector<ScaleConstraint>& constraints,
                                              const SeedOptions& options) {
  ba::CalibrationProblem problem;
  problem.grid = grid;
  problem.robust_scale = options.robust_scale;

  PlenopticIntrinsics intr = config;
  intr.f_L = options.recalibration ? config.f_L : solution.camera.f * config.s_x;
  intr.B = options.recalibration ? config.B : B;
  intr.b_L0 = b_L0;
  intr.c_x = solution.camera.c_x;
  intr.c_y = solution.camera.c_y;
  intr.distortion = DistortionCoeffs{};
  intr.validate();
  problem.intrinsics = intr;

  // The pinhole model over virtual-image coordinates is the plenoptic camera
  // observed from its focal point: x_V' = (f_L / s_x) x_C / (z_C - f_L) + c_x.
  // Undo the axial offset so the seeded poses are plenoptic camera poses.
  problem.poses = solution.poses;
  for (Pose& p : problem.poses) p.translation.z() += intr.f_L;

  problem.points = solution.points;

  // Observations remapped to the dense pose / point indices of the problem.
  std::map<int, int> view_map, point_map;
  for (std::size_t i = 0; i < solution.view_ids.size(); ++i) {
    view_map[solution.view_ids[i]] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < solution.point_ids.size(); ++i) {
    point_map[solution.point_ids[i]] = static_cast<int>(i);
  }
  std::vector<Observation> records;
  records.reserve(observations.size());
  for (const Observation& r : observations.records()) {
    const auto vi = view_map.find(r.view_id);
    const auto pi = point_map.find(r.point_id);
    if (vi == view_map.end() || pi == point_map.end()) continue;
    Observation rec = r;
    rec.view_id = vi->second;
    rec.point_id = pi->second;
    records.push_back(rec);
  }
  problem.observations = ObservationSet(std::move(records));

  for (const ScaleConstraint& c : constraints) {
    const auto ia = point_map.find(c.point_a);
    const auto ib = point_map.find(c.point_b);
    if (ia == point_map.end() || ib == point_map.end()) continue;
    problem.scale_constraints.push_back({ia->second, ib->second, c.distance, c.weight});
  }

  problem.fixed.intrinsics = options.extra_fixed;
  if (options.recalibration) {
    problem.fixed.intrinsics[model::kParamFL] = true;
    problem.fixed.intrinsics[model::kParamB] = true;
  }
  problem.fixed.poses.assign(problem.poses.size(), false);
  problem.fixed.poses[0] = true;
  return problem;
}

}  // namespace pleninit
}  // namespace plencal
