#pragma once

// Shared helpers for the unit and acceptance suites. Test-only code: the
// finite-difference oracle here must stay independent of the analytic
// Jacobian implementation it checks.

#include <array>
#include <random>

#include <Eigen/Dense>

#include "plencal/ba.hpp"
#include "plencal/model.hpp"
#include "plencal/synthgen.hpp"

namespace plencal::testsupport {

/// Worst relative error between analytic Jacobians of the full projection
/// and central finite differences over `configs` random valid configurations.
/// Steps are 1e-6 of each parameter's scale; for the distortion coefficients
/// the scale additionally adapts to the column sensitivity so the central
/// difference stays above the ulp of pixel coordinates.
inline double jacobian_worst_relative_error(const PlenopticIntrinsics& base,
                                            const MicroLensGrid& grid, int configs,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-400.0, 400.0);
  std::uniform_real_distribution<double> uz(900.0, 2600.0);
  std::uniform_real_distribution<double> small(-0.02, 0.02);

  const auto column_error = [](const Vec2& fd, const Vec2& an) {
    return (fd - an).norm() / std::max(1e-6, fd.norm() + an.norm());
  };

  double worst = 0.0;
  int tested = 0;
  while (tested < configs) {
    const Vec3 x_world(ux(rng), ux(rng), uz(rng));
    const Pose pose(quaternion_exp(Vec3(small(rng), small(rng), small(rng))),
                    Vec3(ux(rng) * 0.2, ux(rng) * 0.2, small(rng) * 100.0));
    const auto vp = model::project_to_virtual(base, pose * x_world);
    if (vp.status != model::ProjectionStatus::kOk) continue;
    int lens = -1;
    double best = 1e18;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double d = (grid.center(static_cast<int>(i)) - vp.point.xy()).norm();
      if (d < best) {
        best = d;
        lens = static_cast<int>(i);
      }
    }
    const auto jac = model::project_full_with_jacobians(base, grid, pose, x_world, lens);
    if (jac.status != model::ProjectionStatus::kOk) continue;
    ++tested;

    const auto project_at = [&](const PlenopticIntrinsics& intr, const Pose& p,
                                const Vec3& x) -> Vec2 {
      return model::project_full(intr, grid, p, x, lens, false).pixel;
    };

    const std::array<double, model::kNumIntrinsicParams> scales = {
        base.f_L, base.b_L0, base.B, base.c_x, base.c_y, 3e-9, 6e-15, 1.2e-20, 7e-7, 7e-7};
    for (int k = 0; k < model::kNumIntrinsicParams; ++k) {
      const double sensitivity = jac.d_intrinsics.col(k).norm();
      double h = 1e-6 * scales[static_cast<std::size_t>(k)];
      if (k >= model::kParamK0) {
        // Keep the central difference at least ~1e-3 px so it resolves
        // against the ulp of ~1e3 px coordinates.
        h = std::max(h, 1e-3 / std::max(1.0, sensitivity));
      }
      PlenopticIntrinsics plus = base;
      PlenopticIntrinsics minus = base;
      double* fp[] = {&plus.f_L, &plus.b_L0, &plus.B, &plus.c_x, &plus.c_y,
                      &plus.distortion.k0, &plus.distortion.k1, &plus.distortion.k2,
                      &plus.distortion.p0, &plus.distortion.p1};
      double* fm[] = {&minus.f_L, &minus.b_L0, &minus.B, &minus.c_x, &minus.c_y,
                      &minus.distortion.k0, &minus.distortion.k1, &minus.distortion.k2,
                      &minus.distortion.p0, &minus.distortion.p1};
      *fp[k] += h;
      *fm[k] -= h;
      const Vec2 fd = (project_at(plus, pose, x_world) - project_at(minus, pose, x_world)) / (2.0 * h);
      worst = std::max(worst, column_error(fd, jac.d_intrinsics.col(k)));
    }
    for (int k = 0; k < 6; ++k) {
      const double h = 1e-6;
      Eigen::Matrix<double, 6, 1> delta = Eigen::Matrix<double, 6, 1>::Zero();
      delta[k] = h;
      const Pose plus(quaternion_exp(delta.head<3>()) * pose.rotation,
                      pose.translation + delta.tail<3>());
      delta[k] = -h;
      const Pose minus(quaternion_exp(delta.head<3>()) * pose.rotation,
                       pose.translation + delta.tail<3>());
      const Vec2 fd = (project_at(base, plus, x_world) - project_at(base, minus, x_world)) / (2.0 * h);
      worst = std::max(worst, column_error(fd, jac.d_pose.col(k)));
    }
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-3;  // 1e-6 of the ~1 m point scale
      Vec3 dp = Vec3::Zero();
      dp[k] = h;
      const Vec2 fd =
          (project_at(base, pose, x_world + dp) - project_at(base, pose, x_world - dp)) / (2.0 * h);
      worst = std::max(worst, column_error(fd, jac.d_point.col(k)));
    }
  }
  return worst;
}

/// Independent dense normal-equation step: assembles the full damped system
/// from the model Jacobians and solves it without any Schur elimination.
struct DenseStep {
  bool singular = false;
  Eigen::VectorXd camera_delta;
  std::vector<Vec3> point_deltas;
};

inline DenseStep dense_reference_step(const ba::CalibrationProblem& problem, double lambda) {
  const int n_points = static_cast<int>(problem.points.size());
  std::vector<int> pose_col(problem.poses.size(), -1);
  int col = model::kNumIntrinsicParams;
  for (std::size_t j = 0; j < problem.poses.size(); ++j) {
    const bool fixed = j == 0 || (j < problem.fixed.poses.size() && problem.fixed.poses[j]);
    if (!fixed) {
      pose_col[j] = col;
      col += 6;
    }
  }
  const int n_cam = col;
  const int n = n_cam + 3 * n_points;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);

  const double delta = problem.robust_scale;
  for (const Observation& rec : problem.observations.records()) {
    const auto jac = model::project_full_with_jacobians(
        problem.intrinsics, problem.grid, problem.poses[static_cast<std::size_t>(rec.view_id)],
        problem.points[static_cast<std::size_t>(rec.point_id)], rec.lens_id);
    if (jac.status != model::ProjectionStatus::kOk) continue;
    const Vec2 r = jac.pixel - rec.xy();
    const double s = r.squaredNorm();
    const double w = (delta > 0.0 && s > delta * delta) ? delta / std::sqrt(s) : 1.0;

    Eigen::MatrixXd j_full = Eigen::MatrixXd::Zero(2, n);
    for (int k = 0; k < model::kNumIntrinsicParams; ++k) {
      if (!problem.fixed.intrinsics[static_cast<std::size_t>(k)]) {
        j_full.col(k) = jac.d_intrinsics.col(k);
      }
    }
    if (pose_col[static_cast<std::size_t>(rec.view_id)] >= 0) {
      j_full.block<2, 6>(0, pose_col[static_cast<std::size_t>(rec.view_id)]) = jac.d_pose;
    }
    j_full.block<2, 3>(0, n_cam + 3 * rec.point_id) = jac.d_point;
    h.noalias() += w * j_full.transpose() * j_full;
    g.noalias() += w * j_full.transpose() * r;
  }
  for (const ScaleConstraint& c : problem.scale_constraints) {
    const Vec3 diff = problem.points[static_cast<std::size_t>(c.point_a)] -
                      problem.points[static_cast<std::size_t>(c.point_b)];
    const double dist = diff.norm();
    const double scale =
        (problem.robust_scale > 0.0) ? c.weight / problem.robust_scale : c.weight;
    const double r = scale * (dist - c.distance);
    if (dist < 1e-12) continue;
    Eigen::MatrixXd j_full = Eigen::MatrixXd::Zero(1, n);
    j_full.block<1, 3>(0, n_cam + 3 * c.point_a) = scale * diff.transpose() / dist;
    j_full.block<1, 3>(0, n_cam + 3 * c.point_b) = -scale * diff.transpose() / dist;
    h.noalias() += j_full.transpose() * j_full;
    g.noalias() += j_full.transpose() * r;
  }

  for (int i = 0; i < n; ++i) {
    const bool fixed_intr = i < model::kNumIntrinsicParams &&
                            problem.fixed.intrinsics[static_cast<std::size_t>(i)];
    if (fixed_intr) {
      h(i, i) = 1.0;
    } else {
      h(i, i) += lambda * h(i, i);
      if (h(i, i) == 0.0) h(i, i) = 1.0;
    }
  }
  DenseStep out;
  const Eigen::VectorXd d = h.diagonal().cwiseAbs().cwiseSqrt().cwiseMax(1e-150);
  const Eigen::VectorXd d_inv = d.cwiseInverse();
  const Eigen::MatrixXd h_scaled = d_inv.asDiagonal() * h * d_inv.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> f(h_scaled);
  if (f.info() != Eigen::Success) {
    out.singular = true;
    return out;
  }
  const Eigen::VectorXd sol = d_inv.asDiagonal() * f.solve(d_inv.asDiagonal() * (-g));
  out.camera_delta = sol.head(n_cam);
  out.point_deltas.resize(static_cast<std::size_t>(n_points));
  for (int p = 0; p < n_points; ++p) {
    out.point_deltas[static_cast<std::size_t>(p)] = sol.segment<3>(n_cam + 3 * p);
  }
  return out;
}

}  // namespace plencal::testsupport
