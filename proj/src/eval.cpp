#include "plencal/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <atomic>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "plencal/parallel.hpp"

namespace plencal {
namespace eval {

double relative_deviation(double est, double ref) {
  if (ref == 0.0) throw ZeroReferenceError("relative deviation undefined for zero reference");
  return std::abs(est - ref) / std::abs(ref);
}

std::vector<ParameterDeviation> parameter_report(const PlenopticIntrinsics& estimated,
                                                 const PlenopticIntrinsics& reference) {
  const std::vector<std::pair<std::string, std::pair<double, double>>> params = {
      {"f_L", {estimated.f_L, reference.f_L}},
      {"b_L0", {estimated.b_L0, reference.b_L0}},
      {"B", {estimated.B, reference.B}},
      {"c_x", {estimated.c_x, reference.c_x}},
      {"c_y", {estimated.c_y, reference.c_y}},
      {"k0", {estimated.distortion.k0, reference.distortion.k0}},
      {"k1", {estimated.distortion.k1, reference.distortion.k1}},
      {"k2", {estimated.distortion.k2, reference.distortion.k2}},
      {"p0", {estimated.distortion.p0, reference.distortion.p0}},
      {"p1", {estimated.distortion.p1, reference.distortion.p1}},
  };
  std::vector<ParameterDeviation> out;
  out.reserve(params.size());
  for (const auto& [name, pair] : params) {
    ParameterDeviation d;
    d.name = name;
    d.estimated = pair.first;
    d.reference = pair.second;
    d.absolute = std::abs(pair.first - pair.second);
    if (pair.second == 0.0) {
      d.zero_reference = true;
      d.relative_percent = std::numeric_limits<double>::quiet_NaN();
    } else {
      d.relative_percent = 100.0 * relative_deviation(pair.first, pair.second);
    }
    out.push_back(d);
  }
  return out;
}

double rmse_percent(const std::vector<double>& deviations_percent) {
  if (deviations_percent.empty()) return 0.0;
  double ss = 0.0;
  for (const double d : deviations_percent) ss += d * d;
  return std::sqrt(ss / static_cast<double>(deviations_percent.size()));
}

TrajectoryRmse position_rmse(const std::vector<Vec3>& estimated,
                             const std::vector<Vec3>& ground_truth, AlignMode mode) {
  if (estimated.size() != ground_truth.size()) {
    throw LengthMismatchError("trajectory lengths differ");
  }
  if (estimated.size() < 3) throw LengthMismatchError("need at least three poses to align");
  const int n = static_cast<int>(estimated.size());
  Eigen::MatrixXd src(3, n), dst(3, n);
  for (int i = 0; i < n; ++i) {
    src.col(i) = estimated[static_cast<std::size_t>(i)];
    dst.col(i) = ground_truth[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, mode == AlignMode::kSimilarity);
  TrajectoryRmse out;
  out.scale = mode == AlignMode::kSimilarity ? std::cbrt(t.topLeftCorner<3, 3>().determinant()) : 1.0;
  double ss = 0.0;
  out.per_pose_error_mm.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Vec3 aligned = t.topLeftCorner<3, 3>() * src.col(i) + t.topRightCorner<3, 1>();
    const double e = (aligned - dst.col(i)).norm();
    out.per_pose_error_mm.push_back(e);
    ss += e * e;
  }
  out.rmse_mm = std::sqrt(ss / n);
  return out;
}

TrajectoryRmse trajectory_rmse(const std::vector<Pose>& estimated,
                               const std::vector<Pose>& ground_truth, AlignMode mode) {
  std::vector<Vec3> est, gt;
  est.reserve(estimated.size());
  gt.reserve(ground_truth.size());
  for (const Pose& p : estimated) est.push_back(p.center());
  for (const Pose& p : ground_truth) gt.push_back(p.center());
  return position_rmse(est, gt, mode);
}

namespace {

/// Subsampled calibration input for one sweep cell. Constrained points are
/// kept so the metric scale stays defined.
pipeline::CalibrationInput subsample(const synthgen::SyntheticDataset& data, int num_points,
                                     int num_views, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> point_ids(data.points_gt.size());
  std::iota(point_ids.begin(), point_ids.end(), 0);
  std::shuffle(point_ids.begin(), point_ids.end(), rng);
  std::set<int> keep_points;
  for (const ScaleConstraint& c : data.scale_constraints) {
    keep_points.insert(c.point_a);
    keep_points.insert(c.point_b);
  }
  for (const int p : point_ids) {
    if (static_cast<int>(keep_points.size()) >= num_points) break;
    keep_points.insert(p);
  }
  std::vector<int> view_ids(data.poses_gt.size());
  std::iota(view_ids.begin(), view_ids.end(), 0);
  std::shuffle(view_ids.begin(), view_ids.end(), rng);
  view_ids.resize(static_cast<std::size_t>(std::min<int>(num_views, static_cast<int>(view_ids.size()))));
  std::set<int> keep_views(view_ids.begin(), view_ids.end());
  // The metric scale reference must stay observable: every constrained point
  // needs at least two kept views seeing it.
  for (const int p : std::set<int>(keep_points)) {
    bool constrained = false;
    for (const ScaleConstraint& c : data.scale_constraints) {
      constrained = constrained || c.point_a == p || c.point_b == p;
    }
    if (!constrained) continue;
    std::set<int> observing, kept_observing;
    for (const Observation& r : data.observations.track(p)) {
      observing.insert(r.view_id);
      if (keep_views.count(r.view_id)) kept_observing.insert(r.view_id);
    }
    for (const int v : observing) {
      if (kept_observing.size() >= 2) break;
      if (keep_views.insert(v).second) kept_observing.insert(v);
    }
  }

  std::vector<Observation> records;
  for (const Observation& r : data.observations.records()) {
    if (keep_points.count(r.point_id) && keep_views.count(r.view_id)) records.push_back(r);
  }
  pipeline::CalibrationInput input;
  input.grid = data.grid;
  input.observations = ObservationSet(std::move(records));
  input.scale_constraints = data.scale_constraints;
  input.pixel_size_x = data.intrinsics_gt.s_x;
  input.pixel_size_y = data.intrinsics_gt.s_y;
  input.nominal_f_L = data.intrinsics_gt.f_L;
  return input;
}

}  // namespace

SweepResult robustness_sweep(const synthgen::SyntheticDataset& dataset,
                             const SweepOptions& options) {
  SweepResult result;
  for (const int np : options.point_counts) {
    for (const int nv : options.view_counts) {
      SweepCell cell;
      cell.num_points = np;
      cell.num_views = nv;
      result.cells.push_back(cell);
    }
  }

  struct RunOutcome {
    bool ok = false;
    std::map<std::string, double> rel_percent;
    std::string error;
  };
  const int repeats = std::max(1, options.repeats);
  std::vector<RunOutcome> outcomes(result.cells.size() * static_cast<std::size_t>(repeats));

  const auto run_one = [&](std::size_t task) {
    const std::size_t cell_idx = task / static_cast<std::size_t>(repeats);
    const int repeat = static_cast<int>(task % static_cast<std::size_t>(repeats));
    const SweepCell& cell = result.cells[cell_idx];
    RunOutcome& outcome = outcomes[task];
    const std::uint64_t seed =
        options.seed ^ (static_cast<std::uint64_t>(cell_idx) << 20) ^ static_cast<std::uint64_t>(repeat);
    try {
      pipeline::CalibrationInput input = subsample(dataset, cell.num_points, cell.num_views, seed);
      pipeline::PipelineOptions popts = options.pipeline;
      popts.sfm.seed = seed;
      popts.sfm.threads = 1;
      popts.solver.threads = 1;
      const pipeline::PipelineResult run = pipeline::run_calibration(input, popts);
      for (const ParameterDeviation& d :
           parameter_report(run.problem.intrinsics, dataset.intrinsics_gt)) {
        if (!d.zero_reference) outcome.rel_percent[d.name] = d.relative_percent;
      }
      outcome.ok = true;
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
  };

  // Dynamic queue, heaviest cells first, so one slow cell cannot serialize
  // the sweep.
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const SweepCell& ca = result.cells[a / static_cast<std::size_t>(repeats)];
    const SweepCell& cb = result.cells[b / static_cast<std::size_t>(repeats)];
    return static_cast<long>(ca.num_points) * ca.num_views >
           static_cast<long>(cb.num_points) * cb.num_views;
  });
  const int threads = resolve_thread_count(options.cell_threads);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < std::max(1, threads); ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= order.size()) return;
        run_one(order[k]);
      }
    });
  }
  for (std::thread& w : workers) w.join();

  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    SweepCell& cell = result.cells[c];
    std::map<std::string, std::vector<double>> devs;
    for (int r = 0; r < repeats; ++r) {
      const RunOutcome& o = outcomes[c * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(r)];
      ++cell.attempts;
      if (o.ok) {
        ++cell.successes;
        for (const auto& [name, dev] : o.rel_percent) devs[name].push_back(dev);
      } else {
        cell.failures.push_back(o.error);
      }
    }
    for (const auto& [name, values] : devs) cell.rmse_percent[name] = rmse_percent(values);
  }
  return result;
}

std::string sweep_to_csv(const SweepResult& result) {
  std::set<std::string> names;
  for (const SweepCell& c : result.cells) {
    for (const auto& [name, _] : c.rmse_percent) names.insert(name);
  }
  std::ostringstream os;
  os << "points,views,attempts,successes";
  for (const std::string& n : names) os << ",rmse_" << n << "_percent";
  os << "\n";
  for (const SweepCell& c : result.cells) {
    os << c.num_points << "," << c.num_views << "," << c.attempts << "," << c.successes;
    for (const std::string& n : names) {
      os << ",";
      const auto it = c.rmse_percent.find(n);
      if (it != c.rmse_percent.end()) os << it->second;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace eval
}  // namespace plencal
