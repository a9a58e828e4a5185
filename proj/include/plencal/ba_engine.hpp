#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

#include "plencal/observations.hpp"
#include "plencal/types.hpp"

namespace plencal {
namespace ba {

struct SolveOptions {
  int max_iterations = 100;
  double gradient_tol = 1e-10;
  double param_tol = 1e-12;        // relative step size
  double robust_scale = 1.0;       // Huber scale [px]; <= 0 disables the robust loss
  double initial_lambda = 1e-4;    // multiplies diag(J^T J) (Marquardt damping)
  double lambda_accept_div = 3.0;
  double lambda_reject_mul = 2.0;
  double max_lambda = 1e32;
  int max_reject_streak = 25;
  int threads = 0;                 // 0 = default (hardware, capped by PLENCAL_THREADS)
  bool compute_covariance = false;
};

enum class Termination {
  kGradientTol,
  kParamTol,
  kMaxIterations,
  kSingularSystem,
  kDiverged,
};

const char* to_string(Termination t);

struct IterationRecord {
  double cost = 0.0;      // candidate cost of this step attempt
  double lambda = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

struct SolveReport {
  int iterations = 0;  // accepted steps
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<IterationRecord> steps;
  double final_mean_abs_residual_px = 0.0;
  double final_median_abs_residual_px = 0.0;
  std::size_t residual_count = 0;
  std::size_t invalid_residuals = 0;  // records unprojectable at the final state
  Termination termination = Termination::kMaxIterations;
  Eigen::VectorXd covariance_diagonal;  // camera-side free parameters; empty unless requested
};

struct CostStats {
  double cost = 0.0;
  std::size_t residual_count = 0;     // scalar residual components
  std::size_t invalid_count = 0;
  double mean_abs_px = 0.0;
  double median_abs_px = 0.0;
  double max_abs_px = 0.0;
};

namespace engine {

/// Residual value given a large constant magnitude (per component) when the
/// current iterate cannot project a record; its Jacobian is zero so the step
/// ignores it, and the solver counts it.
inline constexpr double kInvalidResidualComponent = 1e3;

/// Projection model plugged into the Levenberg-Marquardt engine. One instance
/// serves all observations; `index` identifies the measurement.
class ResidualModel {
 public:
  using IntrJacobian = Eigen::Matrix<double, 2, Eigen::Dynamic, 0, 2, 16>;

  virtual ~ResidualModel() = default;

  virtual int intrinsic_count() const = 0;

  /// False when the state is outside the model's physical domain; such a
  /// candidate step is rejected outright.
  virtual bool state_valid(const Eigen::VectorXd& /*intrinsics*/) const { return true; }

  /// Residual (projection - measurement). False = invalid geometry.
  virtual bool evaluate(const Eigen::VectorXd& intrinsics, const Pose& pose, const Vec3& point,
                        std::size_t index, Vec2* residual) const = 0;

  /// Residual plus Jacobians; d_intr has intrinsic_count() columns.
  virtual bool evaluate_jacobians(const Eigen::VectorXd& intrinsics, const Pose& pose,
                                  const Vec3& point, std::size_t index, Vec2* residual,
                                  IntrJacobian* d_intr, Eigen::Matrix<double, 2, 6>* d_pose,
                                  Eigen::Matrix<double, 2, 3>* d_point) const = 0;
};

struct EngineObservation {
  int point = 0;  // dense point index
  int view = 0;   // dense pose index
};

struct EngineState {
  Eigen::VectorXd intrinsics;
  std::vector<Pose> poses;
  std::vector<Vec3> points;
};

struct EngineProblem {
  const ResidualModel* model = nullptr;
  /// observation i uses measurement index i of the model
  std::vector<EngineObservation> observations;
  std::vector<ScaleConstraint> scale_constraints;  // point indices are dense
  std::vector<bool> fixed_intrinsics;              // intrinsic_count entries
  std::vector<bool> fixed_poses;                   // one per pose; pose 0 must be fixed
  /// Optional per-point-coordinate gauge fixing (e.g. one frozen depth).
  std::vector<std::pair<int, int>> fixed_point_coords;  // (point, axis)
};

/// Column layout of the reduced (camera-side) system: intrinsics first, then
/// 6 columns per free pose. Fixed intrinsics keep their column but are pinned
/// through a unit diagonal, so the layout is state-independent.
struct CameraLayout {
  int intrinsic_count = 0;
  std::vector<int> pose_col;  // -1 for fixed poses
  int cols = 0;
};

CameraLayout camera_layout(const EngineProblem& problem);

struct StepResult {
  bool singular = false;
  Eigen::VectorXd camera_delta;      // CameraLayout order
  std::vector<Vec3> point_deltas;
};

/// One damped normal-equation step via the Schur complement over point
/// blocks, exposed for the dense-equivalence oracle.
StepResult compute_step(const EngineProblem& problem, const EngineState& state, double lambda,
                        double robust_scale, int threads);

CostStats evaluate_cost(const EngineProblem& problem, const EngineState& state,
                        double robust_scale, int threads);

struct EngineResult {
  EngineState state;
  SolveReport report;
};

EngineResult solve(const EngineProblem& problem, EngineState initial, const SolveOptions& options);

}  // namespace engine
}  // namespace ba
}  // namespace plencal
