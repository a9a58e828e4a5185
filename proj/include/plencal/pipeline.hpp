#pragma once

#include <optional>
#include <string>

#include "plencal/ba.hpp"
#include "plencal/plenoptic_init.hpp"
#include "plencal/sfm.hpp"

namespace plencal {
namespace pipeline {

/// A pipeline stage failed; `stage()` names it for diagnostics.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Everything the calibration consumes; what a dataset file carries.
struct CalibrationInput {
  MicroLensGrid grid;
  ObservationSet observations;
  std::vector<ScaleConstraint> scale_constraints;
  double pixel_size_x = 0.0;  // [mm]
  double pixel_size_y = 0.0;
  std::optional<double> nominal_f_L;  // [mm]
};

struct PipelineOptions {
  bool recalibration = false;                  // fix f_L and B at nominal values
  std::optional<PlenopticIntrinsics> nominal;  // full model prior; required for recalibration
  std::array<bool, model::kNumIntrinsicParams> extra_fixed{};
  sfm::SfmOptions sfm;
  ba::SolveOptions solver;
  double robust_scale = 1.0;
  // Initial-guess heuristics when no nominal model is given: the MLA sits
  // near the focal plane (b_L0 ~ 0.95 f_L) and typical MLA stacks put the
  // sensor a fraction of a millimeter behind it.
  double b_L0_guess_factor = 0.95;
  double B_guess_mm = 0.4;
};

struct PipelineResult {
  ba::CalibrationProblem problem;  // refined calibration, poses and points
  ba::SolveReport report;
  sfm::PinholeSolution pinhole;
  std::vector<sfm::VirtualMeasurement> measurements;
  double metric_scale = 1.0;
  double initial_B = 0.0;
  double initial_b_L0 = 0.0;
  bool used_scale_constraints = false;
  bool init_fell_back_to_nominal = false;
};

/// The full calibration: virtual-image measurements from micro-image
/// clusters, incremental pinhole reconstruction, metric scaling, linear
/// initialization of B and b_L0, then the plenoptic bundle adjustment.
PipelineResult run_calibration(const CalibrationInput& input, const PipelineOptions& options);

/// The intrinsics guess used for cluster geometry before anything is known.
PlenopticIntrinsics initial_guess(const CalibrationInput& input, const PipelineOptions& options);

}  // namespace pipeline
}  // namespace plencal
