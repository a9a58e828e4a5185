#pragma once

#include <map>
#include <string>
#include <vector>

#include "plencal/pipeline.hpp"
#include "plencal/synthgen.hpp"
#include "plencal/types.hpp"

namespace plencal {
namespace eval {

class ZeroReferenceError : public Error {
 public:
  using Error::Error;
};
class LengthMismatchError : public Error {
 public:
  using Error::Error;
};

/// |est - ref| / |ref|; throws ZeroReferenceError when ref is zero.
double relative_deviation(double est, double ref);

struct ParameterDeviation {
  std::string name;
  double estimated = 0.0;
  double reference = 0.0;
  double absolute = 0.0;
  double relative_percent = 0.0;  // NaN when the reference is zero
  bool zero_reference = false;
};

/// Per-parameter deviations of an estimated calibration against a reference,
/// relative values in percent of the reference.
std::vector<ParameterDeviation> parameter_report(const PlenopticIntrinsics& estimated,
                                                 const PlenopticIntrinsics& reference);

/// RMSE of relative deviations (in percent) across runs, per Table-2 style
/// aggregation: sqrt(mean(dev_i^2)).
double rmse_percent(const std::vector<double>& deviations_percent);

enum class AlignMode { kRigid, kSimilarity };

struct TrajectoryRmse {
  double rmse_mm = 0.0;
  std::vector<double> per_pose_error_mm;
  double scale = 1.0;  // 1 in rigid mode
};

/// Closed-form least-squares alignment (Umeyama) of estimated onto ground
/// truth camera positions, then the RMSE of the aligned position errors.
/// Trajectories are associated by index.
TrajectoryRmse trajectory_rmse(const std::vector<Pose>& estimated,
                               const std::vector<Pose>& ground_truth, AlignMode mode);

/// As above but on raw positions.
TrajectoryRmse position_rmse(const std::vector<Vec3>& estimated,
                             const std::vector<Vec3>& ground_truth, AlignMode mode);

struct SweepOptions {
  std::vector<int> point_counts;
  std::vector<int> view_counts;
  int repeats = 3;
  std::uint64_t seed = 99;
  int cell_threads = 0;  // parallel cells; 0 = default
  pipeline::PipelineOptions pipeline;
};

struct SweepCell {
  int num_points = 0;
  int num_views = 0;
  int attempts = 0;
  int successes = 0;
  /// Per-parameter RMSE over successful repeats, percent of ground truth.
  std::map<std::string, double> rmse_percent;
  std::vector<std::string> failures;  // per failed repeat, stage + message
};

struct SweepResult {
  std::vector<SweepCell> cells;  // row-major over (point_counts x view_counts)
};

/// Robustness sweep: for each (points, views) cell the dataset is subsampled
/// (seeded), the full calibration pipeline runs, and per-parameter RMSE
/// against the dataset ground truth is aggregated over repeats. Failures are
/// recorded per cell, never fatal.
SweepResult robustness_sweep(const synthgen::SyntheticDataset& dataset,
                             const SweepOptions& options);

/// CSV table of a sweep (one row per cell, parameters as columns).
std::string sweep_to_csv(const SweepResult& result);

}  // namespace eval
}  // namespace plencal
