#include "plencal/sfm.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>

#include "plencal/model.hpp"

namespace plencal {
namespace sfm {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// ---------------------------------------------------------------------------
// Micro-image cluster -> virtual image coordinate
// ---------------------------------------------------------------------------

struct ClusterSolve {
  ClusterStatus status = ClusterStatus::kOk;
  double x = 0.0, y = 0.0, v = 0.0;
};

/// The micro lens projection is linear in (x_V'/v, y_V'/v, 1/v):
///   x_R - c_x = (x_V' - c_x) / v  =>  x_R = (x_V'/v) - c_x (1/v) + c_x.
ClusterSolve solve_cluster(const std::vector<Vec2>& raw, const std::vector<Vec2>& lens_centers) {
  ClusterSolve out;
  const int n = static_cast<int>(raw.size());
  if (n < 2) {
    out.status = ClusterStatus::kSingular;
    return out;
  }
  bool distinct = false;
  for (int i = 1; i < n && !distinct; ++i) {
    if ((lens_centers[static_cast<std::size_t>(i)] - lens_centers[0]).norm() > 1e-9) distinct = true;
  }
  if (!distinct) {
    out.status = ClusterStatus::kSingular;
    return out;
  }

  Eigen::MatrixXd a(2 * n, 3);
  Eigen::VectorXd b(2 * n);
  for (int i = 0; i < n; ++i) {
    const Vec2& c = lens_centers[static_cast<std::size_t>(i)];
    a.row(2 * i) << 1.0, 0.0, -c.x();
    a.row(2 * i + 1) << 0.0, 1.0, -c.y();
    b[2 * i] = raw[static_cast<std::size_t>(i)].x() - c.x();
    b[2 * i + 1] = raw[static_cast<std::size_t>(i)].y() - c.y();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()(2) < 1e-10 * svd.singularValues()(0)) {
    // Coincident centers within tolerance: fall back to the most separated
    // pair and the disparity identity x_Rk - x_Rl = (c_k - c_l)(1 - 1/v).
    int bi = 0, bj = 1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double d = (lens_centers[static_cast<std::size_t>(i)] -
                          lens_centers[static_cast<std::size_t>(j)]).norm();
        if (d > best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    if (best < 1e-9) {
      out.status = ClusterStatus::kSingular;
      return out;
    }
    const Vec2 dc = lens_centers[static_cast<std::size_t>(bi)] - lens_centers[static_cast<std::size_t>(bj)];
    const Vec2 dr = raw[static_cast<std::size_t>(bi)] - raw[static_cast<std::size_t>(bj)];
    const double one_minus_u = dr.dot(dc) / dc.squaredNorm();
    const double u = 1.0 - one_minus_u;
    if (!(u > 0.0) || !(u < 1.0)) {
      out.status = ClusterStatus::kBadDepth;
      return out;
    }
    Vec2 vp = Vec2::Zero();
    for (int i = 0; i < n; ++i) {
      const Vec2& c = lens_centers[static_cast<std::size_t>(i)];
      vp += c + (raw[static_cast<std::size_t>(i)] - c) / u;
    }
    vp /= static_cast<double>(n);
    out.x = vp.x();
    out.y = vp.y();
    out.v = 1.0 / u;
    return out;
  }
  Eigen::Vector3d sol = svd.solve(b);

  // Trimmed re-solve: matching failures sit inside single micro images, so a
  // cluster can carry individual corrupted records. Drop the worst lens while
  // its residual is far off and enough lenses remain.
  std::vector<int> active(static_cast<std::size_t>(n));
  std::iota(active.begin(), active.end(), 0);
  constexpr double kTrimThreshold = 1.0;  // [px]
  for (int pass = 0; pass < 4 && active.size() > 2; ++pass) {
    int worst_idx = -1;
    double worst = 0.0;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const int i = active[k];
      const Vec2& c = lens_centers[static_cast<std::size_t>(i)];
      const Vec2 pred(sol(0) - c.x() * sol(2) + c.x(), sol(1) - c.y() * sol(2) + c.y());
      const double r = (raw[static_cast<std::size_t>(i)] - pred).norm();
      if (r > worst) {
        worst = r;
        worst_idx = static_cast<int>(k);
      }
    }
    if (worst <= kTrimThreshold || worst_idx < 0) break;
    active.erase(active.begin() + worst_idx);
    Eigen::MatrixXd at(2 * active.size(), 3);
    Eigen::VectorXd bt(2 * active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Vec2& c = lens_centers[static_cast<std::size_t>(active[k])];
      at.row(2 * static_cast<Eigen::Index>(k)) << 1.0, 0.0, -c.x();
      at.row(2 * static_cast<Eigen::Index>(k) + 1) << 0.0, 1.0, -c.y();
      bt[2 * static_cast<Eigen::Index>(k)] = raw[static_cast<std::size_t>(active[k])].x() - c.x();
      bt[2 * static_cast<Eigen::Index>(k) + 1] = raw[static_cast<std::size_t>(active[k])].y() - c.y();
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> tsvd(at, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (tsvd.singularValues()(2) < 1e-10 * tsvd.singularValues()(0)) break;
    sol = tsvd.solve(bt);
  }

  const double u = sol(2);
  if (!(u > 0.0) || !(u < 1.0)) {
    out.status = ClusterStatus::kBadDepth;
    return out;
  }
  out.x = sol(0) / u;
  out.y = sol(1) / u;
  out.v = 1.0 / u;
  return out;
}

// ---------------------------------------------------------------------------
// Two-view geometry
// ---------------------------------------------------------------------------

Eigen::Matrix3d camera_matrix(const PinholeCamera& cam) {
  Eigen::Matrix3d k;
  k << cam.f, 0.0, cam.c_x, 0.0, cam.f * cam.aspect, cam.c_y, 0.0, 0.0, 1.0;
  return k;
}

/// Normalized eight-point estimate of E with x_b^T E x_a = 0 over pixel
/// measurements mapped through K^-1 and Hartley normalization.
std::optional<Eigen::Matrix3d> eight_point_essential(const std::vector<Vec2>& norm_a,
                                                     const std::vector<Vec2>& norm_b,
                                                     const std::vector<int>& idx) {
  const int n = static_cast<int>(idx.size());
  if (n < 8) return std::nullopt;
  Vec2 mean_a = Vec2::Zero(), mean_b = Vec2::Zero();
  for (const int i : idx) {
    mean_a += norm_a[static_cast<std::size_t>(i)];
    mean_b += norm_b[static_cast<std::size_t>(i)];
  }
  mean_a /= n;
  mean_b /= n;
  double rms_a = 0.0, rms_b = 0.0;
  for (const int i : idx) {
    rms_a += (norm_a[static_cast<std::size_t>(i)] - mean_a).squaredNorm();
    rms_b += (norm_b[static_cast<std::size_t>(i)] - mean_b).squaredNorm();
  }
  rms_a = std::sqrt(rms_a / n);
  rms_b = std::sqrt(rms_b / n);
  if (rms_a < 1e-12 || rms_b < 1e-12) return std::nullopt;
  const double sa = std::sqrt(2.0) / rms_a;
  const double sb = std::sqrt(2.0) / rms_b;

  Eigen::MatrixXd m(n, 9);
  for (int r = 0; r < n; ++r) {
    const Vec2 pa = (norm_a[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])] - mean_a) * sa;
    const Vec2 pb = (norm_b[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])] - mean_b) * sb;
    m.row(r) << pb.x() * pa.x(), pb.x() * pa.y(), pb.x(), pb.y() * pa.x(), pb.y() * pa.y(), pb.y(),
        pa.x(), pa.y(), 1.0;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd e = svd.matrixV().col(8);
  Eigen::Matrix3d est;
  est << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);

  Eigen::Matrix3d ta = Eigen::Matrix3d::Identity();
  ta(0, 0) = sa;
  ta(1, 1) = sa;
  ta(0, 2) = -sa * mean_a.x();
  ta(1, 2) = -sa * mean_a.y();
  Eigen::Matrix3d tb = Eigen::Matrix3d::Identity();
  tb(0, 0) = sb;
  tb(1, 1) = sb;
  tb(0, 2) = -sb * mean_b.x();
  tb(1, 2) = -sb * mean_b.y();
  Eigen::Matrix3d essential = tb.transpose() * est * ta;

  const Eigen::JacobiSVD<Eigen::Matrix3d> esvd(essential, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s = 0.5 * (esvd.singularValues()(0) + esvd.singularValues()(1));
  Eigen::Vector3d sing(s, s, 0.0);
  return esvd.matrixU() * sing.asDiagonal() * esvd.matrixV().transpose();
}

double sampson_distance_px(const Eigen::Matrix3d& fundamental, const Vec2& a, const Vec2& b) {
  const Eigen::Vector3d xa(a.x(), a.y(), 1.0);
  const Eigen::Vector3d xb(b.x(), b.y(), 1.0);
  const Eigen::Vector3d fx = fundamental * xa;
  const Eigen::Vector3d ftx = fundamental.transpose() * xb;
  const double e = xb.dot(fx);
  const double denom = fx(0) * fx(0) + fx(1) * fx(1) + ftx(0) * ftx(0) + ftx(1) * ftx(1);
  if (denom < 1e-30) return std::numeric_limits<double>::max();
  return std::sqrt(e * e / denom);
}

struct RelPose {
  Mat3 rotation;
  Vec3 translation;  // X_b = R X_a + t
};

std::array<RelPose, 4> decompose_essential(const Eigen::Matrix3d& essential) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(essential, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  if (u.determinant() < 0.0) u = -u;
  if (v.determinant() < 0.0) v = -v;
  Eigen::Matrix3d w;
  w << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  const Mat3 r1 = u * w * v.transpose();
  const Mat3 r2 = u * w.transpose() * v.transpose();
  const Vec3 t = u.col(2);
  return {RelPose{r1, t}, RelPose{r1, -t}, RelPose{r2, t}, RelPose{r2, -t}};
}

/// Least-squares point of a bundle of rays (the midpoint method for two).
std::optional<Vec3> triangulate_rays(const std::vector<Vec3>& origins,
                                     const std::vector<Vec3>& directions) {
  Mat3 m = Mat3::Zero();
  Vec3 rhs = Vec3::Zero();
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const Mat3 p = Mat3::Identity() - directions[i] * directions[i].transpose();
    m += p;
    rhs += p * origins[i];
  }
  const Eigen::LDLT<Mat3> f(m);
  if (f.info() != Eigen::Success || f.vectorD().minCoeff() < 1e-10) return std::nullopt;
  const Vec3 x = f.solve(rhs);
  if (!x.allFinite()) return std::nullopt;
  return x;
}

double parallax_deg(const Vec3& point, const Vec3& center_a, const Vec3& center_b) {
  const Vec3 da = (point - center_a).normalized();
  const Vec3 db = (point - center_b).normalized();
  return std::acos(std::clamp(da.dot(db), -1.0, 1.0)) * kRadToDeg;
}

int ransac_iterations(double confidence, double inlier_ratio, int sample_size, int max_iters) {
  if (inlier_ratio <= 0.0) return max_iters;
  if (inlier_ratio >= 1.0) return 1;
  const double denom = std::log(1.0 - std::pow(inlier_ratio, sample_size));
  if (denom >= -1e-12) return max_iters;
  const int n = static_cast<int>(std::ceil(std::log(1.0 - confidence) / denom));
  return std::clamp(n, 1, max_iters);
}

// ---------------------------------------------------------------------------
// P3P (Grunert): distances from the quartic in v = s3 / s1
// ---------------------------------------------------------------------------

std::vector<double> real_polynomial_roots(std::vector<double> coeffs /* highest first */) {
  // Trim leading near-zeros relative to the largest coefficient.
  double max_c = 0.0;
  for (const double c : coeffs) max_c = std::max(max_c, std::abs(c));
  if (max_c == 0.0) return {};
  std::size_t lead = 0;
  while (lead < coeffs.size() - 1 && std::abs(coeffs[lead]) < 1e-14 * max_c) ++lead;
  coeffs.erase(coeffs.begin(), coeffs.begin() + static_cast<std::ptrdiff_t>(lead));
  const int deg = static_cast<int>(coeffs.size()) - 1;
  if (deg < 1) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 0; i < deg; ++i) {
    companion(i, deg - 1) = -coeffs[static_cast<std::size_t>(deg - i)] / coeffs[0];
    if (i + 1 < deg) companion(i + 1, i) = 1.0;
  }
  const Eigen::EigenSolver<Eigen::MatrixXd> es(companion);
  std::vector<double> roots;
  for (int i = 0; i < deg; ++i) {
    const std::complex<double> r = es.eigenvalues()(i);
    if (std::abs(r.imag()) < 1e-8 * (1.0 + std::abs(r.real()))) roots.push_back(r.real());
  }
  // Two Newton polish steps on the original polynomial.
  for (double& r : roots) {
    for (int it = 0; it < 2; ++it) {
      double p = 0.0, dp = 0.0;
      for (const double c : coeffs) {
        dp = dp * r + p;
        p = p * r + c;
      }
      if (std::abs(dp) < 1e-30) break;
      r -= p / dp;
    }
  }
  return roots;
}

std::vector<Pose> p3p_solve(const std::array<Vec3, 3>& world, const std::array<Vec3, 3>& bearing) {
  std::vector<Pose> poses;
  const double a = (world[1] - world[2]).norm();
  const double b = (world[0] - world[2]).norm();
  const double c = (world[0] - world[1]).norm();
  if (a < 1e-9 || b < 1e-9 || c < 1e-9) return poses;
  const double ca = bearing[1].dot(bearing[2]);
  const double cb = bearing[0].dot(bearing[2]);
  const double cg = bearing[0].dot(bearing[1]);
  const double k = (a * a - c * c) / (b * b);
  const double cc = (c * c) / (b * b);

  const double a4 = (k - 1.0) * (k - 1.0) - 4.0 * cc * ca * ca;
  const double a3 = 8.0 * cc * ca * ca * cb + 8.0 * cc * ca * cg - 4.0 * k * k * cb +
                    4.0 * k * ca * cg + 4.0 * k * cb - 4.0 * ca * cg;
  const double a2 = -4.0 * cc * ca * ca - 16.0 * cc * ca * cb * cg - 4.0 * cc * cg * cg +
                    4.0 * k * k * cb * cb + 2.0 * k * k - 8.0 * k * ca * cb * cg -
                    4.0 * k * cg * cg + 4.0 * ca * ca + 4.0 * cg * cg - 2.0;
  const double a1 = 8.0 * cc * ca * cg + 8.0 * cc * cb * cg * cg - 4.0 * k * k * cb +
                    4.0 * k * ca * cg + 8.0 * k * cb * cg * cg - 4.0 * k * cb - 4.0 * ca * cg;
  const double a0 = -4.0 * cc * cg * cg + k * k - 4.0 * k * cg * cg + 2.0 * k + 1.0;

  for (const double v : real_polynomial_roots({a4, a3, a2, a1, a0})) {
    if (!(v > 0.0)) continue;
    const double den = 2.0 * (cg - v * ca);
    if (std::abs(den) < 1e-12) continue;
    const double u = (1.0 - v * v + k * (1.0 + v * v - 2.0 * v * cb)) / den;
    if (!(u > 0.0)) continue;
    const double s1_sq = b * b / (1.0 + v * v - 2.0 * v * cb);
    if (!(s1_sq > 0.0)) continue;
    const double s1 = std::sqrt(s1_sq);
    const double s2 = u * s1;
    const double s3 = v * s1;

    Eigen::Matrix3d src, dst;
    for (int i = 0; i < 3; ++i) src.col(i) = world[static_cast<std::size_t>(i)];
    dst.col(0) = s1 * bearing[0];
    dst.col(1) = s2 * bearing[1];
    dst.col(2) = s3 * bearing[2];
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
    const Mat3 r = t.topLeftCorner<3, 3>();
    poses.emplace_back(Eigen::Quaterniond(r).normalized(), t.topRightCorner<3, 1>());
  }
  return poses;
}

/// Gauss-Newton pose-only refinement of squared pixel reprojection error.
Pose refine_pose(const Pose& initial, const std::vector<Vec3>& points,
                 const std::vector<Vec2>& measurements, const std::vector<int>& idx,
                 const PinholeCamera& cam, int iterations = 10) {
  Pose pose = initial;
  double prev_cost = std::numeric_limits<double>::max();
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    double cost = 0.0;
    for (const int i : idx) {
      const Vec3 xc = pose * points[static_cast<std::size_t>(i)];
      if (xc.z() < 1e-9) continue;
      const Vec2 r = cam.project(xc) - measurements[static_cast<std::size_t>(i)];
      cost += r.squaredNorm();
      Eigen::Matrix<double, 2, 3> d_xc;
      d_xc << cam.f / xc.z(), 0.0, -cam.f * xc.x() / (xc.z() * xc.z()), 0.0,
          cam.f * cam.aspect / xc.z(), -cam.f * cam.aspect * xc.y() / (xc.z() * xc.z());
      Eigen::Matrix<double, 2, 6> j;
      j.leftCols<3>() = d_xc * (-skew(xc - pose.translation));
      j.rightCols<3>() = d_xc;
      h.noalias() += j.transpose() * j;
      g.noalias() += j.transpose() * r;
    }
    if (cost >= prev_cost && it > 0) break;
    prev_cost = cost;
    h.diagonal() += Eigen::Matrix<double, 6, 1>::Constant(1e-9 * h.diagonal().maxCoeff());
    const Eigen::Matrix<double, 6, 1> delta = -h.ldlt().solve(g);
    if (!delta.allFinite() || delta.norm() < 1e-14) break;
    pose.rotation = (quaternion_exp(delta.head<3>()) * pose.rotation).normalized();
    pose.translation += delta.tail<3>();
  }
  return pose;
}

// ---------------------------------------------------------------------------
// Pinhole residual model for the shared LM engine
// ---------------------------------------------------------------------------

class PinholeResidualModel : public ba::engine::ResidualModel {
 public:
  PinholeResidualModel(double aspect, std::vector<Vec2> measurements)
      : aspect_(aspect), measurements_(std::move(measurements)) {}

  int intrinsic_count() const override { return 3; }  // f, c_x, c_y

  bool state_valid(const Eigen::VectorXd& intr) const override { return intr[0] > 0.0; }

  bool evaluate(const Eigen::VectorXd& intr, const Pose& pose, const Vec3& point,
                std::size_t index, Vec2* residual) const override {
    const Vec3 xc = pose * point;
    if (xc.z() < 1e-9) return false;
    const PinholeCamera cam{intr[0], intr[1], intr[2], aspect_};
    *residual = cam.project(xc) - measurements_[index];
    return true;
  }

  bool evaluate_jacobians(const Eigen::VectorXd& intr, const Pose& pose, const Vec3& point,
                          std::size_t index, Vec2* residual, IntrJacobian* d_intr,
                          Eigen::Matrix<double, 2, 6>* d_pose,
                          Eigen::Matrix<double, 2, 3>* d_point) const override {
    const Vec3 xc = pose * point;
    if (xc.z() < 1e-9) return false;
    const double f = intr[0];
    const PinholeCamera cam{f, intr[1], intr[2], aspect_};
    *residual = cam.project(xc) - measurements_[index];
    d_intr->resize(2, 3);
    (*d_intr)(0, 0) = xc.x() / xc.z();
    (*d_intr)(1, 0) = aspect_ * xc.y() / xc.z();
    (*d_intr)(0, 1) = 1.0;
    (*d_intr)(1, 1) = 0.0;
    (*d_intr)(0, 2) = 0.0;
    (*d_intr)(1, 2) = 1.0;
    Eigen::Matrix<double, 2, 3> d_xc;
    d_xc << f / xc.z(), 0.0, -f * xc.x() / (xc.z() * xc.z()), 0.0, f * aspect_ / xc.z(),
        -f * aspect_ * xc.y() / (xc.z() * xc.z());
    d_pose->leftCols<3>() = d_xc * (-skew(xc - pose.translation));
    d_pose->rightCols<3>() = d_xc;
    *d_point = d_xc * pose.rotation.toRotationMatrix();
    return true;
  }

 private:
  double aspect_;
  std::vector<Vec2> measurements_;
};

}  // namespace

// ---------------------------------------------------------------------------

std::vector<VirtualMeasurement> virtual_track_centroids(const ObservationSet& observations,
                                                        const MicroLensGrid& grid,
                                                        const PlenopticIntrinsics& intr_guess) {
  const std::vector<Vec2> lens_centers = model::micro_lens_centers(intr_guess, grid);
  const Vec2 c_L = intr_guess.principal_point();
  const bool undistort = !intr_guess.distortion.is_zero();

  std::vector<VirtualMeasurement> out;
  out.reserve(observations.clusters().size());
  for (const auto& [point_id, view_id] : observations.clusters()) {
    VirtualMeasurement m;
    m.point_id = point_id;
    m.view_id = view_id;
    std::vector<Vec2> raw;
    std::vector<Vec2> centers;
    for (const Observation& rec : observations.cluster(point_id, view_id)) {
      Vec2 p = rec.xy();
      if (undistort) {
        // Tighter than the default tolerance: the cluster solve feeds the
        // oracle-grade virtual coordinates.
        model::UndistortOptions opts;
        opts.tolerance = 1e-12;
        const std::optional<Vec2> und = model::try_undistort(intr_guess.distortion, c_L, p, opts);
        if (!und) continue;
        p = *und;
      }
      raw.push_back(p);
      centers.push_back(lens_centers[static_cast<std::size_t>(rec.lens_id)]);
    }
    m.lens_count = static_cast<int>(raw.size());
    const ClusterSolve sol = solve_cluster(raw, centers);
    m.status = sol.status;
    m.x = sol.x;
    m.y = sol.y;
    m.v = sol.v;
    out.push_back(m);
  }
  return out;
}

TwoViewResult two_view_bootstrap(const std::vector<Vec2>& meas_a, const std::vector<Vec2>& meas_b,
                                 const PinholeCamera& camera, const SfmOptions& options) {
  const int n = static_cast<int>(meas_a.size());
  if (n != static_cast<int>(meas_b.size())) {
    throw InsufficientMatchesError("two_view_bootstrap: measurement lists differ in length");
  }
  if (n < options.min_bootstrap_matches) {
    throw InsufficientMatchesError("two_view_bootstrap: fewer than 8 shared tracks");
  }

  const Eigen::Matrix3d k = camera_matrix(camera);
  const Eigen::Matrix3d k_inv = k.inverse();
  std::vector<Vec2> norm_a(static_cast<std::size_t>(n)), norm_b(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d pa = k_inv * Eigen::Vector3d(meas_a[static_cast<std::size_t>(i)].x(),
                                                       meas_a[static_cast<std::size_t>(i)].y(), 1.0);
    const Eigen::Vector3d pb = k_inv * Eigen::Vector3d(meas_b[static_cast<std::size_t>(i)].x(),
                                                       meas_b[static_cast<std::size_t>(i)].y(), 1.0);
    norm_a[static_cast<std::size_t>(i)] = pa.head<2>() / pa.z();
    norm_b[static_cast<std::size_t>(i)] = pb.head<2>() / pb.z();
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> best_inliers;
  Eigen::Matrix3d best_e = Eigen::Matrix3d::Zero();
  int max_iters = options.ransac_max_iterations;

  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<int> sample;
    while (static_cast<int>(sample.size()) < 8) {
      const int i = pick(rng);
      if (std::find(sample.begin(), sample.end(), i) == sample.end()) sample.push_back(i);
    }
    const std::optional<Eigen::Matrix3d> e = eight_point_essential(norm_a, norm_b, sample);
    if (!e) continue;
    const Eigen::Matrix3d f = k_inv.transpose() * (*e) * k_inv;
    std::vector<int> inliers;
    for (int i = 0; i < n; ++i) {
      if (sampson_distance_px(f, meas_a[static_cast<std::size_t>(i)],
                              meas_b[static_cast<std::size_t>(i)]) < options.ransac_threshold_px) {
        inliers.push_back(i);
      }
    }
    if (inliers.size() > best_inliers.size()) {
      best_inliers = std::move(inliers);
      best_e = *e;
      max_iters = std::min(max_iters,
                           ransac_iterations(options.ransac_confidence,
                                             static_cast<double>(best_inliers.size()) / n, 8,
                                             options.ransac_max_iterations));
    }
  }
  if (static_cast<int>(best_inliers.size()) < options.min_bootstrap_matches) {
    throw DegenerateGeometryError("two_view_bootstrap: no epipolar consensus");
  }
  // All-inlier re-estimate.
  if (const std::optional<Eigen::Matrix3d> e = eight_point_essential(norm_a, norm_b, best_inliers)) {
    const Eigen::Matrix3d f = k_inv.transpose() * (*e) * k_inv;
    std::vector<int> inliers;
    for (int i = 0; i < n; ++i) {
      if (sampson_distance_px(f, meas_a[static_cast<std::size_t>(i)],
                              meas_b[static_cast<std::size_t>(i)]) < options.ransac_threshold_px) {
        inliers.push_back(i);
      }
    }
    if (inliers.size() >= best_inliers.size()) {
      best_inliers = std::move(inliers);
      best_e = *e;
    }
  }

  // Cheirality over the four decompositions.
  const std::array<RelPose, 4> candidates = decompose_essential(best_e);
  int best_count = -1;
  RelPose best_pose{};
  for (const RelPose& cand : candidates) {
    int count = 0;
    const Vec3 center_b = -(cand.rotation.transpose() * cand.translation);
    for (const int i : best_inliers) {
      const Vec3 da = Vec3(norm_a[static_cast<std::size_t>(i)].x(), norm_a[static_cast<std::size_t>(i)].y(), 1.0).normalized();
      const Vec3 db_in_a =
          (cand.rotation.transpose() *
           Vec3(norm_b[static_cast<std::size_t>(i)].x(), norm_b[static_cast<std::size_t>(i)].y(), 1.0))
              .normalized();
      const std::optional<Vec3> x = triangulate_rays({Vec3::Zero(), center_b}, {da, db_in_a});
      if (!x) continue;
      const double za = x->z();
      const double zb = (cand.rotation * (*x) + cand.translation).z();
      if (za > 0.0 && zb > 0.0) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_pose = cand;
    }
  }
  if (best_count < static_cast<int>(best_inliers.size()) / 2 ||
      best_count < options.min_bootstrap_matches) {
    throw DegenerateGeometryError("two_view_bootstrap: no cheirality-consistent decomposition");
  }

  TwoViewResult out;
  out.inliers.assign(static_cast<std::size_t>(n), 0);
  out.points.assign(static_cast<std::size_t>(n), Vec3::Zero());
  const Vec3 center_b = -(best_pose.rotation.transpose() * best_pose.translation);
  std::vector<double> depths;
  std::vector<double> parallaxes;
  for (const int i : best_inliers) {
    const Vec3 da = Vec3(norm_a[static_cast<std::size_t>(i)].x(), norm_a[static_cast<std::size_t>(i)].y(), 1.0).normalized();
    const Vec3 db_in_a =
        (best_pose.rotation.transpose() *
         Vec3(norm_b[static_cast<std::size_t>(i)].x(), norm_b[static_cast<std::size_t>(i)].y(), 1.0))
            .normalized();
    const std::optional<Vec3> x = triangulate_rays({Vec3::Zero(), center_b}, {da, db_in_a});
    if (!x || x->z() <= 0.0 || (best_pose.rotation * (*x) + best_pose.translation).z() <= 0.0) {
      continue;
    }
    out.inliers[static_cast<std::size_t>(i)] = 1;
    out.points[static_cast<std::size_t>(i)] = *x;
    depths.push_back(x->z());
    parallaxes.push_back(parallax_deg(*x, Vec3::Zero(), center_b));
  }
  if (depths.size() < static_cast<std::size_t>(options.min_bootstrap_matches)) {
    throw DegenerateGeometryError("two_view_bootstrap: too few triangulated points");
  }
  std::nth_element(parallaxes.begin(), parallaxes.begin() + static_cast<std::ptrdiff_t>(parallaxes.size() / 2),
                   parallaxes.end());
  out.median_parallax_deg = parallaxes[parallaxes.size() / 2];
  if (out.median_parallax_deg < options.min_parallax_deg) {
    throw DegenerateGeometryError("two_view_bootstrap: insufficient parallax (near-zero baseline)");
  }

  std::nth_element(depths.begin(), depths.begin() + static_cast<std::ptrdiff_t>(depths.size() / 2), depths.end());
  const double median_depth = depths[depths.size() / 2];
  out.pose_b = Pose(Eigen::Quaterniond(best_pose.rotation).normalized(),
                    best_pose.translation / median_depth);
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    if (out.inliers[i]) out.points[i] /= median_depth;
  }
  return out;
}

RegistrationResult register_view(const std::vector<Vec3>& points,
                                 const std::vector<Vec2>& measurements,
                                 const PinholeCamera& camera, const SfmOptions& options) {
  const int n = static_cast<int>(points.size());
  if (n < options.min_register_inliers) {
    throw RegistrationFailedError("register_view: fewer than 4 correspondences");
  }
  std::vector<Vec3> bearings(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    bearings[static_cast<std::size_t>(i)] = camera.bearing(measurements[static_cast<std::size_t>(i)]);
  }

  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> best_inliers;
  Pose best_pose;
  int max_iters = options.ransac_max_iterations;

  for (int iter = 0; iter < max_iters; ++iter) {
    std::array<int, 3> sample{};
    sample[0] = pick(rng);
    do { sample[1] = pick(rng); } while (sample[1] == sample[0]);
    do { sample[2] = pick(rng); } while (sample[2] == sample[0] || sample[2] == sample[1]);
    const std::array<Vec3, 3> world{points[static_cast<std::size_t>(sample[0])],
                                    points[static_cast<std::size_t>(sample[1])],
                                    points[static_cast<std::size_t>(sample[2])]};
    const Vec3 cross = (world[1] - world[0]).cross(world[2] - world[0]);
    if (cross.norm() < 1e-9) continue;  // collinear sample
    const std::array<Vec3, 3> f{bearings[static_cast<std::size_t>(sample[0])],
                                bearings[static_cast<std::size_t>(sample[1])],
                                bearings[static_cast<std::size_t>(sample[2])]};
    for (const Pose& cand : p3p_solve(world, f)) {
      std::vector<int> inliers;
      for (int i = 0; i < n; ++i) {
        const Vec3 xc = cand * points[static_cast<std::size_t>(i)];
        if (xc.z() < 1e-9) continue;
        if ((camera.project(xc) - measurements[static_cast<std::size_t>(i)]).norm() <
            options.ransac_threshold_px) {
          inliers.push_back(i);
        }
      }
      if (inliers.size() > best_inliers.size()) {
        best_inliers = std::move(inliers);
        best_pose = cand;
        max_iters = std::min(max_iters,
                             ransac_iterations(options.ransac_confidence,
                                               static_cast<double>(best_inliers.size()) / n, 3,
                                               options.ransac_max_iterations));
      }
    }
  }
  if (static_cast<int>(best_inliers.size()) < options.min_register_inliers) {
    throw RegistrationFailedError("register_view: fewer than 4 inliers");
  }

  best_pose = refine_pose(best_pose, points, measurements, best_inliers, camera);

  RegistrationResult out;
  out.pose = best_pose;
  out.inliers.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const Vec3 xc = best_pose * points[static_cast<std::size_t>(i)];
    if (xc.z() < 1e-9) continue;
    if ((camera.project(xc) - measurements[static_cast<std::size_t>(i)]).norm() <
        options.ransac_threshold_px) {
      out.inliers[static_cast<std::size_t>(i)] = 1;
      ++out.inlier_count;
    }
  }
  if (out.inlier_count < options.min_register_inliers) {
    throw RegistrationFailedError("register_view: refinement lost the consensus");
  }
  return out;
}

int PinholeSolution::pose_index(int view_id) const {
  const auto it = std::find(view_ids.begin(), view_ids.end(), view_id);
  return it == view_ids.end() ? -1 : static_cast<int>(it - view_ids.begin());
}

int PinholeSolution::point_index(int point_id) const {
  const auto it = std::find(point_ids.begin(), point_ids.end(), point_id);
  return it == point_ids.end() ? -1 : static_cast<int>(it - point_ids.begin());
}

PinholeBaResult pinhole_ba(PinholeSolution& solution,
                           const std::vector<VirtualMeasurement>& measurements,
                           const SfmOptions& options, int max_iterations) {
  PinholeBaResult out;
  if (max_iterations == 0) return out;

  std::vector<Vec2> used_meas;
  std::vector<ba::engine::EngineObservation> engine_obs;
  if (solution.measurement_inlier.empty()) {
    solution.measurement_inlier.assign(measurements.size(), 1);
  }
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    const VirtualMeasurement& m = measurements[i];
    if (m.status != ClusterStatus::kOk || !solution.measurement_inlier[i]) continue;
    const int pose_idx = solution.pose_index(m.view_id);
    const int point_idx = solution.point_index(m.point_id);
    if (pose_idx < 0 || point_idx < 0) continue;
    engine_obs.push_back({point_idx, pose_idx});
    used_meas.push_back(m.xy());
  }
  if (engine_obs.empty()) return out;

  PinholeResidualModel residual_model(solution.camera.aspect, std::move(used_meas));
  ba::engine::EngineProblem problem;
  problem.model = &residual_model;
  problem.observations = std::move(engine_obs);
  problem.fixed_intrinsics.assign(3, false);
  problem.fixed_poses.assign(solution.poses.size(), false);
  problem.fixed_poses[0] = true;
  // Scale gauge: freeze the depth coordinate of the farthest point.
  int anchor = 0;
  double best_depth = -1.0;
  for (std::size_t i = 0; i < solution.points.size(); ++i) {
    if (std::abs(solution.points[i].z()) > best_depth) {
      best_depth = std::abs(solution.points[i].z());
      anchor = static_cast<int>(i);
    }
  }
  problem.fixed_point_coords.emplace_back(anchor, 2);

  ba::engine::EngineState state;
  state.intrinsics = Eigen::VectorXd(3);
  state.intrinsics << solution.camera.f, solution.camera.c_x, solution.camera.c_y;
  state.poses = solution.poses;
  state.points = solution.points;

  ba::SolveOptions solve_options;
  solve_options.max_iterations = max_iterations > 0 ? max_iterations : options.ba_max_iterations;
  solve_options.robust_scale = options.huber_scale_px;
  solve_options.threads = options.threads;

  ba::engine::EngineResult result = ba::engine::solve(problem, std::move(state), solve_options);
  solution.camera.f = result.state.intrinsics[0];
  solution.camera.c_x = result.state.intrinsics[1];
  solution.camera.c_y = result.state.intrinsics[2];
  solution.poses = std::move(result.state.poses);
  solution.points = std::move(result.state.points);
  out.converged = result.report.termination != ba::Termination::kMaxIterations;
  out.report = std::move(result.report);
  return out;
}

PinholeSolution run_incremental_sfm(const std::vector<VirtualMeasurement>& measurements,
                                    const PinholeCamera& initial_camera,
                                    const SfmOptions& options) {
  // Dense view / point indices over usable measurements.
  std::map<int, int> view_index, point_index;
  for (const VirtualMeasurement& m : measurements) {
    if (m.status != ClusterStatus::kOk) continue;
    view_index.emplace(m.view_id, 0);
    point_index.emplace(m.point_id, 0);
  }
  std::vector<int> view_ids, point_ids;
  for (auto& [id, idx] : view_index) {
    idx = static_cast<int>(view_ids.size());
    view_ids.push_back(id);
  }
  for (auto& [id, idx] : point_index) {
    idx = static_cast<int>(point_ids.size());
    point_ids.push_back(id);
  }
  const int num_views = static_cast<int>(view_ids.size());
  const int num_points = static_cast<int>(point_ids.size());
  if (num_views < 2) throw InsufficientMatchesError("incremental sfm: fewer than two views");

  std::vector<std::vector<std::size_t>> by_view(static_cast<std::size_t>(num_views));
  std::vector<std::vector<std::size_t>> by_point(static_cast<std::size_t>(num_points));
  std::vector<char> flags(measurements.size(), 0);
  std::vector<int> meas_view(measurements.size(), -1), meas_point(measurements.size(), -1);
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    const VirtualMeasurement& m = measurements[i];
    if (m.status != ClusterStatus::kOk) continue;
    flags[i] = 1;
    meas_view[i] = view_index[m.view_id];
    meas_point[i] = point_index[m.point_id];
    by_view[static_cast<std::size_t>(meas_view[i])].push_back(i);
    by_point[static_cast<std::size_t>(meas_point[i])].push_back(i);
  }

  // Shared-track counts per view pair.
  std::map<std::pair<int, int>, int> shared;
  for (const auto& track : by_point) {
    for (std::size_t a = 0; a < track.size(); ++a) {
      for (std::size_t b = a + 1; b < track.size(); ++b) {
        int va = meas_view[track[a]];
        int vb = meas_view[track[b]];
        if (va > vb) std::swap(va, vb);
        ++shared[{va, vb}];
      }
    }
  }
  std::vector<std::pair<int, std::pair<int, int>>> ranked;
  for (const auto& [pair, count] : shared) {
    if (count >= options.min_bootstrap_matches) ranked.push_back({count, pair});
  }
  std::sort(ranked.rbegin(), ranked.rend());
  if (ranked.empty()) throw InsufficientMatchesError("incremental sfm: no pair with 8 shared tracks");

  // Evaluate a shortlist of pairs; score = inliers x median parallax.
  struct Bootstrap {
    int va = -1, vb = -1;
    TwoViewResult result;
    std::vector<std::size_t> track_points;  // dense point index per match
    double score = -1.0;
  };
  Bootstrap best;
  const std::size_t shortlist = std::min<std::size_t>(ranked.size(), 20);
  for (std::size_t r = 0; r < shortlist; ++r) {
    const auto [va, vb] = ranked[r].second;
    std::vector<Vec2> ma, mb;
    std::vector<std::size_t> pts;
    for (const std::size_t ia : by_view[static_cast<std::size_t>(va)]) {
      const int p = meas_point[ia];
      for (const std::size_t ib : by_view[static_cast<std::size_t>(vb)]) {
        if (meas_point[ib] == p) {
          ma.push_back(measurements[ia].xy());
          mb.push_back(measurements[ib].xy());
          pts.push_back(static_cast<std::size_t>(p));
          break;
        }
      }
    }
    try {
      TwoViewResult tv = two_view_bootstrap(ma, mb, initial_camera, options);
      const double inlier_count = static_cast<double>(
          std::count(tv.inliers.begin(), tv.inliers.end(), static_cast<char>(1)));
      const double score = inlier_count * std::min(tv.median_parallax_deg, 20.0);
      if (score > best.score) {
        best = {va, vb, std::move(tv), std::move(pts), score};
      }
    } catch (const Error&) {
      continue;
    }
  }
  if (best.score < 0.0) {
    throw DegenerateGeometryError("incremental sfm: no valid initial pair");
  }

  std::vector<std::optional<Pose>> pose_of(static_cast<std::size_t>(num_views));
  std::vector<std::optional<Vec3>> point_of(static_cast<std::size_t>(num_points));
  pose_of[static_cast<std::size_t>(best.va)] = Pose::identity();
  pose_of[static_cast<std::size_t>(best.vb)] = best.result.pose_b;
  for (std::size_t i = 0; i < best.track_points.size(); ++i) {
    if (best.result.inliers[i]) point_of[best.track_points[i]] = best.result.points[i];
  }

  const auto triangulate_point = [&](int p) -> void {
    std::vector<Vec3> origins, dirs;
    std::vector<std::size_t> used;
    for (const std::size_t mi : by_point[static_cast<std::size_t>(p)]) {
      if (!flags[mi]) continue;
      const auto& pose = pose_of[static_cast<std::size_t>(meas_view[mi])];
      if (!pose) continue;
      origins.push_back(pose->center());
      dirs.push_back(pose->rotation.conjugate() * initial_camera.bearing(measurements[mi].xy()));
      used.push_back(mi);
    }
    if (origins.size() < 2) return;
    const std::optional<Vec3> x = triangulate_rays(origins, dirs);
    if (!x) return;
    for (const std::size_t mi : used) {
      const Pose& pose = *pose_of[static_cast<std::size_t>(meas_view[mi])];
      const Vec3 xc = pose * (*x);
      if (xc.z() < 1e-9 ||
          (initial_camera.project(xc) - measurements[mi].xy()).norm() >
              2.0 * options.ransac_threshold_px) {
        return;  // keep the point unset rather than seed a bad position
      }
    }
    point_of[static_cast<std::size_t>(p)] = *x;
  };
  for (int p = 0; p < num_points; ++p) {
    if (!point_of[static_cast<std::size_t>(p)]) triangulate_point(p);
  }

  PinholeSolution solution;
  solution.camera = initial_camera;

  const auto rebuild_solution_state = [&]() {
    solution.view_ids.clear();
    solution.poses.clear();
    solution.point_ids.clear();
    solution.points.clear();
    // Keep the bootstrap view first: it carries the identity gauge.
    std::vector<int> order;
    order.push_back(best.va);
    for (int vi = 0; vi < num_views; ++vi) {
      if (vi != best.va && pose_of[static_cast<std::size_t>(vi)]) order.push_back(vi);
    }
    for (const int vi : order) {
      solution.view_ids.push_back(view_ids[static_cast<std::size_t>(vi)]);
      solution.poses.push_back(*pose_of[static_cast<std::size_t>(vi)]);
    }
    for (int p = 0; p < num_points; ++p) {
      if (point_of[static_cast<std::size_t>(p)]) {
        solution.point_ids.push_back(point_ids[static_cast<std::size_t>(p)]);
        solution.points.push_back(*point_of[static_cast<std::size_t>(p)]);
      }
    }
    solution.measurement_inlier.assign(measurements.size(), 0);
    for (std::size_t i = 0; i < measurements.size(); ++i) {
      if (flags[i] && pose_of[static_cast<std::size_t>(meas_view[i])] &&
          point_of[static_cast<std::size_t>(meas_point[i])]) {
        solution.measurement_inlier[i] = 1;
      }
    }
  };
  const auto push_back_solution_state = [&]() {
    for (std::size_t k = 0; k < solution.view_ids.size(); ++k) {
      pose_of[static_cast<std::size_t>(view_index[solution.view_ids[k]])] = solution.poses[k];
    }
    for (std::size_t k = 0; k < solution.point_ids.size(); ++k) {
      point_of[static_cast<std::size_t>(point_index[solution.point_ids[k]])] = solution.points[k];
    }
  };
  const auto run_ba = [&](int iterations) {
    rebuild_solution_state();
    const PinholeBaResult r = pinhole_ba(solution, measurements, options, iterations);
    solution.ba_converged = r.converged;
    push_back_solution_state();
  };

  // Incremental registration, most-constrained view first.
  int since_ba = 0;
  for (;;) {
    int next = -1;
    int best_count = 0;
    for (int vi = 0; vi < num_views; ++vi) {
      if (pose_of[static_cast<std::size_t>(vi)]) continue;
      int count = 0;
      for (const std::size_t mi : by_view[static_cast<std::size_t>(vi)]) {
        if (flags[mi] && point_of[static_cast<std::size_t>(meas_point[mi])]) ++count;
      }
      if (count > best_count) {
        best_count = count;
        next = vi;
      }
    }
    if (next < 0) break;

    std::vector<Vec3> pts;
    std::vector<Vec2> meas;
    std::vector<std::size_t> meas_idx;
    for (const std::size_t mi : by_view[static_cast<std::size_t>(next)]) {
      if (!flags[mi]) continue;
      const auto& x = point_of[static_cast<std::size_t>(meas_point[mi])];
      if (!x) continue;
      pts.push_back(*x);
      meas.push_back(measurements[mi].xy());
      meas_idx.push_back(mi);
    }
    try {
      const RegistrationResult reg = register_view(pts, meas, solution.camera, options);
      pose_of[static_cast<std::size_t>(next)] = reg.pose;
      for (std::size_t k = 0; k < meas_idx.size(); ++k) {
        if (!reg.inliers[k]) flags[meas_idx[k]] = 0;
      }
    } catch (const RegistrationFailedError&) {
      solution.failed_views.push_back(view_ids[static_cast<std::size_t>(next)]);
      for (const std::size_t mi : by_view[static_cast<std::size_t>(next)]) flags[mi] = 0;
      continue;
    }
    for (int p = 0; p < num_points; ++p) {
      if (!point_of[static_cast<std::size_t>(p)]) triangulate_point(p);
    }
    if (++since_ba >= options.ba_interval) {
      run_ba(options.ba_max_iterations / 2);
      since_ba = 0;
    }
  }

  run_ba(options.ba_max_iterations);

  // Outlier pass: drop measurements with large reprojection error, then a
  // final bundle adjustment over what remains.
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    if (!solution.measurement_inlier[i]) continue;
    const Pose& pose = *pose_of[static_cast<std::size_t>(meas_view[i])];
    const Vec3 xc = pose * *point_of[static_cast<std::size_t>(meas_point[i])];
    if (xc.z() < 1e-9 || (solution.camera.project(xc) - measurements[i].xy()).norm() >
                             2.0 * options.ransac_threshold_px) {
      flags[i] = 0;
      ++dropped;
    }
  }
  if (dropped > 0) {
    // Points left with fewer than two views go invalid.
    for (int p = 0; p < num_points; ++p) {
      if (!point_of[static_cast<std::size_t>(p)]) continue;
      int n_views = 0;
      for (const std::size_t mi : by_point[static_cast<std::size_t>(p)]) {
        if (flags[mi] && pose_of[static_cast<std::size_t>(meas_view[mi])]) ++n_views;
      }
      if (n_views < 2) point_of[static_cast<std::size_t>(p)] = std::nullopt;
    }
    run_ba(options.ba_max_iterations);
  }

  rebuild_solution_state();
  double err_sum = 0.0;
  std::size_t err_count = 0;
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    if (!solution.measurement_inlier[i]) continue;
    const int pose_idx = solution.pose_index(measurements[i].view_id);
    const int point_idx = solution.point_index(measurements[i].point_id);
    const Vec3 xc = solution.poses[static_cast<std::size_t>(pose_idx)] *
                    solution.points[static_cast<std::size_t>(point_idx)];
    if (xc.z() < 1e-9) continue;
    err_sum += (solution.camera.project(xc) - measurements[i].xy()).norm();
    ++err_count;
  }
  solution.mean_reproj_error_px = err_count > 0 ? err_sum / static_cast<double>(err_count) : 0.0;
  return solution;
}

}  // namespace sfm
}  // namespace plencal
