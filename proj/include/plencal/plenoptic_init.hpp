#pragma once

#include <optional>
#include <vector>

#include "plencal/ba.hpp"
#include "plencal/observations.hpp"
#include "plencal/sfm.hpp"

namespace plencal {
namespace pleninit {

class ZeroBaselineError : public Error {
 public:
  using Error::Error;
};
class RankDeficientError : public Error {
 public:
  using Error::Error;
};
class NegativeParameterError : public Error {
 public:
  using Error::Error;
};

struct ScaleResult {
  double scale = 1.0;
  std::vector<double> residuals_mm;  // per-constraint |distance - target| after scaling
};

/// Scales a pinhole solution to metric units: the weighted geometric mean of
/// (target / current) distances over the constraints multiplies all
/// translations and points. Requires at least one constraint.
ScaleResult apply_metric_scale(sfm::PinholeSolution& solution,
                               const std::vector<ScaleConstraint>& constraints);

/// One (virtual depth, object distance) sample feeding the linear init.
struct DepthSample {
  double v = 0.0;    // virtual depth
  double z_C = 0.0;  // metric object distance [mm]
};

struct InitBOptions {
  double v_min = 1.5;   // ill-conditioned disparity below this
  double v_max = 20.0;  // negligible disparity above this
};

struct BInit {
  double B = 0.0;     // [mm]
  double b_L0 = 0.0;  // [mm]
  double rms_residual_mm = 0.0;
  std::size_t samples_used = 0;
};

/// Least-squares fit of b_L = v B + b_L0 over (v, b_L) pairs, solved by the
/// normal equations. Throws RankDeficientError when all v coincide,
/// NegativeParameterError when the fit is non-physical.
BInit fit_B_bL0(const std::vector<std::pair<double, double>>& v_and_bL);

/// As above with b_L = (1/f_L - 1/z_C)^-1 per sample. Samples with
/// z_C <= f_L or v outside [v_min, v_max] are rejected; the caller falls back
/// to nominal values on failure.
BInit init_B_bL0(const std::vector<DepthSample>& samples, double f_L,
                 const InitBOptions& options = {});

/// Collects depth samples from a pinhole solution and the cached cluster
/// virtual depths: z_C is the depth of the reconstructed point in each
/// registered view plus `depth_offset`. The pinhole over virtual-image
/// coordinates sits at the focal point, so passing f_L recovers main-lens
/// object distances exactly.
std::vector<DepthSample> collect_depth_samples(const sfm::PinholeSolution& solution,
                                               const std::vector<sfm::VirtualMeasurement>& meas,
                                               double depth_offset = 0.0);

/// Without scale constraints but with trusted f_L and B, the scene scale is
/// recovered from the virtual depths themselves: the thin lens equation makes
/// every (v, reconstructed depth) sample linear in (f_L^2 / scale, b_L0),
/// solved jointly by least squares.
struct ImplicitScaleResult {
  double scale = 1.0;
  double b_L0 = 0.0;
};
ImplicitScaleResult implicit_metric_scale(sfm::PinholeSolution& solution,
                                          const std::vector<sfm::VirtualMeasurement>& meas,
                                          double f_L, double B,
                                          const InitBOptions& options = {});

struct SeedOptions {
  double robust_scale = 1.0;
  bool recalibration = false;  // fix f_L and B at their provided values
  std::array<bool, model::kNumIntrinsicParams> extra_fixed{};
};

/// Builds the plenoptic problem from the scaled pinhole solution:
/// f_L = f_px * s_x, principal point from the pinhole model, distortion
/// zeroed, B and b_L0 from the linear init. The pinhole poses are shifted by
/// f_L along the optical axis (the virtual-image pinhole sits at the focal
/// point, not at the lens).
ba::CalibrationProblem seed_plenoptic_problem(const sfm::PinholeSolution& solution,
                                              double B, double b_L0,
                                              const PlenopticIntrinsics& config,
                                              const MicroLensGrid& grid,
                                              const ObservationSet& observations,
                                              const std::vector<ScaleConstraint>& constraints,
                                              const SeedOptions& options = {});

}  // namespace pleninit
}  // namespace plencal
