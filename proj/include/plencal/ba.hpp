#pragma once

#include <array>
#include <memory>
#include <vector>

#include "plencal/ba_engine.hpp"
#include "plencal/camera.hpp"
#include "plencal/model.hpp"
#include "plencal/observations.hpp"

namespace plencal {
namespace ba {

/// Raised when the problem violates its invariants.
class ProblemError : public Error {
 public:
  using Error::Error;
};

/// Which parameters stay at their initial values during the solve. The first
/// pose is always fixed (gauge).
struct FixedMask {
  std::array<bool, model::kNumIntrinsicParams> intrinsics{};
  std::vector<bool> poses;  // resized to the problem; entry 0 forced true

  static FixedMask none() { return {}; }
  static FixedMask recalibration() {
    FixedMask m;
    m.intrinsics[model::kParamFL] = true;
    m.intrinsics[model::kParamB] = true;
    return m;
  }
};

/// Joint calibration state: intrinsics, poses, points, micro-image tracks and
/// optional metric scale constraints. Point and view ids in `observations`
/// index `points` and `poses` densely.
struct CalibrationProblem {
  PlenopticIntrinsics intrinsics;
  MicroLensGrid grid;
  std::vector<Pose> poses;
  std::vector<Vec3> points;  // world frame [mm]
  ObservationSet observations;
  std::vector<ScaleConstraint> scale_constraints;
  FixedMask fixed;
  double robust_scale = 1.0;  // Huber scale [px]

  /// Checks id ranges, quaternion norms and the gauge. Throws ProblemError.
  void validate() const;
};

struct ResidualResult {
  model::ProjectionStatus status = model::ProjectionStatus::kOk;
  Vec2 value = Vec2::Zero();  // projection - measurement [px]
};

/// Residual of one observation record at the problem's current state.
/// Unprojectable records report their status; `value` is then the constant
/// the solver uses in their place.
ResidualResult residual(const CalibrationProblem& problem, const Observation& record);

struct SolveResult {
  CalibrationProblem problem;  // refined copy
  SolveReport report;
};

/// Plenoptic bundle adjustment: Levenberg-Marquardt over intrinsics, poses
/// and points with Huber-robust micro-image residuals, Schur elimination of
/// the point blocks and soft scale-constraint residuals.
SolveResult solve(const CalibrationProblem& problem, const SolveOptions& options = {});

/// Total robust cost and residual statistics at the current state; matches
/// the cost used inside `solve` exactly.
CostStats evaluate_cost(const CalibrationProblem& problem, int threads = 0);

namespace detail {

/// Free-parameter layout of the reduced camera system, and a single damped
/// step, exposed so tests can compare against an independently assembled
/// dense normal-equation solve.
struct ProblemAdapter {
  explicit ProblemAdapter(const CalibrationProblem& problem);

  engine::CameraLayout layout() const { return engine::camera_layout(engine_problem); }
  engine::StepResult step(double lambda, int threads = 1) const;

  std::unique_ptr<engine::ResidualModel> model;
  engine::EngineProblem engine_problem;
  engine::EngineState state;
  double robust_scale = 1.0;
};

}  // namespace detail
}  // namespace ba
}  // namespace plencal
