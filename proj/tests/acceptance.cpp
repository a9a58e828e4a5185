// Acceptance suite: end-to-end verification against the built-in synthetic
// oracle. Each criterion prints one PASS/FAIL line; run the binary without
// filters so the shared calibration batch is computed once.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <mutex>
#include <random>
#include <thread>

#include "plencal/downstream.hpp"
#include "plencal/eval.hpp"
#include "plencal/pipeline.hpp"
#include "plencal/plenoptic_init.hpp"
#include "plencal/synthgen.hpp"
#include "test_support.hpp"

using namespace plencal;

namespace {

void report_line(int criterion, bool pass, const std::string& detail) {
  std::printf("[criterion %2d] %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

synthgen::SyntheticDataset make_dataset(int points, int views, double sigma, double outliers,
                                        std::uint64_t seed) {
  synthgen::SceneSpec spec;
  spec.num_points = points;
  spec.trajectory.num_views = views;
  spec.noise_sigma = sigma;
  spec.outlier_fraction = outliers;
  spec.rng_seed = seed;
  return synthgen::generate(spec, synthgen::default_camera(), synthgen::default_grid());
}

pipeline::CalibrationInput input_from(const synthgen::SyntheticDataset& data,
                                      bool with_constraints = true) {
  pipeline::CalibrationInput input;
  input.grid = data.grid;
  input.observations = data.observations;
  if (with_constraints) input.scale_constraints = data.scale_constraints;
  input.pixel_size_x = data.intrinsics_gt.s_x;
  input.pixel_size_y = data.intrinsics_gt.s_y;
  input.nominal_f_L = data.intrinsics_gt.f_L;
  return input;
}

double rel(double est, double ref) { return std::abs(est - ref) / std::abs(ref); }

double median(std::vector<double> v) {
  REQUIRE(!v.empty());
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// ---------------------------------------------------------------------------
// Shared batch for criteria 2-4: ten seeded noisy datasets at the paper-scale
// configuration, calibrated in full mode and again in recalibration mode.
// ---------------------------------------------------------------------------

struct BatchRun {
  synthgen::SyntheticDataset data;
  PlenopticIntrinsics full;      // full-mode estimate
  PlenopticIntrinsics recalib;   // f_L / B fixed, no scale constraints
  std::vector<Pose> est_poses;   // full-mode refined poses
  std::vector<int> view_ids;     // original view id per pose
  bool full_ok = false;
  bool recalib_ok = false;
  std::string error;
};

constexpr int kBatchSeeds = 10;
constexpr int kBatchPoints = 1500;
constexpr int kBatchViews = 70;

const std::vector<BatchRun>& noisy_batch() {
  static std::vector<BatchRun> batch = [] {
    std::vector<BatchRun> runs(kBatchSeeds);
    std::mutex log_mutex;
    const int workers = std::max(1, std::min(2, static_cast<int>(std::thread::hardware_concurrency())));
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const auto work = [&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= kBatchSeeds) return;
        BatchRun& run = runs[static_cast<std::size_t>(i)];
        try {
          run.data = make_dataset(kBatchPoints, kBatchViews, 0.2, 0.05,
                                  101 + static_cast<std::uint64_t>(i));
          pipeline::PipelineOptions options;
          options.sfm.threads = 1;
          options.solver.threads = 1;
          options.sfm.seed = static_cast<std::uint64_t>(i);
          const pipeline::PipelineResult full =
              pipeline::run_calibration(input_from(run.data), options);
          run.full = full.problem.intrinsics;
          run.est_poses = full.problem.poses;
          run.view_ids = full.pinhole.view_ids;
          run.full_ok = true;

          pipeline::PipelineOptions recalib_options = options;
          recalib_options.recalibration = true;
          PlenopticIntrinsics nominal = run.data.intrinsics_gt;
          nominal.distortion = DistortionCoeffs{};
          recalib_options.nominal = nominal;
          const pipeline::PipelineResult rec =
              pipeline::run_calibration(input_from(run.data, /*with_constraints=*/false),
                                        recalib_options);
          run.recalib = rec.problem.intrinsics;
          run.recalib_ok = true;
        } catch (const std::exception& e) {
          const std::lock_guard<std::mutex> lock(log_mutex);
          run.error = e.what();
        }
        const std::lock_guard<std::mutex> lock(log_mutex);
        std::printf("  [batch] seed %d done (%s)\n", i, run.error.empty() ? "ok" : run.error.c_str());
        std::fflush(stdout);
      }
    };
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    return runs;
  }();
  return batch;
}

}  // namespace

TEST_CASE("criterion 1: noiseless round trip") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = make_dataset(500, 30, 0.0, 0.0, 1);
  pipeline::PipelineOptions options;
  options.sfm.threads = 1;
  options.solver.threads = 1;
  const pipeline::PipelineResult result = pipeline::run_calibration(input_from(data), options);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const PlenopticIntrinsics& est = result.problem.intrinsics;
  const PlenopticIntrinsics& gt = data.intrinsics_gt;
  double worst = 0.0;
  for (const auto& [e, g] : std::initializer_list<std::pair<double, double>>{
           {est.f_L, gt.f_L},
           {est.b_L0, gt.b_L0},
           {est.B, gt.B},
           {est.c_x, gt.c_x},
           {est.c_y, gt.c_y},
           {est.distortion.k0, gt.distortion.k0},
           {est.distortion.p0, gt.distortion.p0},
           {est.distortion.p1, gt.distortion.p1}}) {
    worst = std::max(worst, rel(e, g));
  }
  // k1 and k2 are zero in the ground truth; their scale-appropriate relative
  // measure is the pixel displacement at the sensor corner.
  const double corner = std::hypot(1024.0, 1024.0) + 400.0;
  const double k1_px = std::abs(est.distortion.k1) * std::pow(corner, 5);
  const double k2_px = std::abs(est.distortion.k2) * std::pow(corner, 7);

  const bool pass = worst < 1e-6 && k1_px < 1e-5 && k2_px < 1e-5 &&
                    result.report.final_cost < 1e-12 && elapsed < 60.0;
  report_line(1, pass,
              "worst intrinsic rel " + std::to_string(worst) + " (tol 1e-6), cost " +
                  std::to_string(result.report.final_cost) + " (tol 1e-12), " +
                  std::to_string(elapsed) + " s single-threaded (tol 60)");
  CHECK(worst < 1e-6);
  CHECK(k1_px < 1e-5);
  CHECK(k2_px < 1e-5);
  CHECK(result.report.final_cost < 1e-12);
  CHECK(elapsed < 60.0);
}

TEST_CASE("criterion 2: noisy recovery at the paper-analogue configuration") {
  const auto& batch = noisy_batch();
  std::vector<double> f_L, b_L0, B, c_x, c_y;
  for (const BatchRun& run : batch) {
    REQUIRE_MESSAGE(run.full_ok, run.error);
    const PlenopticIntrinsics& gt = run.data.intrinsics_gt;
    f_L.push_back(rel(run.full.f_L, gt.f_L));
    b_L0.push_back(rel(run.full.b_L0, gt.b_L0));
    B.push_back(rel(run.full.B, gt.B));
    c_x.push_back(rel(run.full.c_x, gt.c_x));
    c_y.push_back(rel(run.full.c_y, gt.c_y));
  }
  const double med_f = median(f_L), med_b = median(b_L0), med_B = median(B);
  const double med_cx = median(c_x), med_cy = median(c_y);
  const bool pass =
      med_f < 0.003 && med_b < 0.003 && med_cx < 0.003 && med_cy < 0.003 && med_B < 0.02;
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "median rel: f_L %.4f%% b_L0 %.4f%% c_x %.4f%% c_y %.4f%% (tol 0.3%%), B %.4f%% "
                "(tol 2%%), 10 seeds",
                100 * med_f, 100 * med_b, 100 * med_cx, 100 * med_cy, 100 * med_B);
  report_line(2, pass, detail);
  CHECK(med_f < 0.003);
  CHECK(med_b < 0.003);
  CHECK(med_cx < 0.003);
  CHECK(med_cy < 0.003);
  CHECK(med_B < 0.02);
}

TEST_CASE("criterion 3: recalibration with fixed f_L and B, no scale constraints") {
  const auto& batch = noisy_batch();
  std::vector<double> b_L0, c_x, c_y;
  for (const BatchRun& run : batch) {
    REQUIRE_MESSAGE(run.recalib_ok, run.error);
    const PlenopticIntrinsics& gt = run.data.intrinsics_gt;
    CHECK(run.recalib.f_L == gt.f_L);  // fixed exactly
    CHECK(run.recalib.B == gt.B);
    b_L0.push_back(rel(run.recalib.b_L0, gt.b_L0));
    c_x.push_back(rel(run.recalib.c_x, gt.c_x));
    c_y.push_back(rel(run.recalib.c_y, gt.c_y));
  }
  const double med_b = median(b_L0), med_cx = median(c_x), med_cy = median(c_y);
  const bool pass = med_b < 0.006 && med_cx < 0.006 && med_cy < 0.006;
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "median rel: b_L0 %.4f%% c_x %.4f%% c_y %.4f%% (tol 0.6%%), no scene scale used",
                100 * med_b, 100 * med_cx, 100 * med_cy);
  report_line(3, pass, detail);
  CHECK(med_b < 0.006);
  CHECK(med_cx < 0.006);
  CHECK(med_cy < 0.006);
}

TEST_CASE("criterion 4: trajectory accuracy on the noisy runs") {
  const auto& batch = noisy_batch();
  double worst_rel_rmse = 0.0;
  double worst_scale_dev = 0.0;
  for (const BatchRun& run : batch) {
    REQUIRE(run.full_ok);
    std::vector<Pose> gt;
    gt.reserve(run.view_ids.size());
    for (const int vid : run.view_ids) {
      gt.push_back(run.data.poses_gt[static_cast<std::size_t>(vid)]);
    }
    const eval::TrajectoryRmse sim =
        eval::trajectory_rmse(run.est_poses, gt, eval::AlignMode::kSimilarity);
    // Trajectory extent: diagonal of the bounding box of ground-truth centers.
    Vec3 lo = gt.front().center(), hi = lo;
    for (const Pose& p : gt) {
      lo = lo.cwiseMin(p.center());
      hi = hi.cwiseMax(p.center());
    }
    const double extent = (hi - lo).norm();
    worst_rel_rmse = std::max(worst_rel_rmse, sim.rmse_mm / extent);
    worst_scale_dev = std::max(worst_scale_dev, std::abs(sim.scale - 1.0));
  }
  const bool pass = worst_rel_rmse < 0.005 && worst_scale_dev < 0.01;
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "worst similarity rmse %.4f%% of extent (tol 0.5%%), worst |scale-1| %.4f%% "
                "(tol 1%%)",
                100 * worst_rel_rmse, 100 * worst_scale_dev);
  report_line(4, pass, detail);
  CHECK(worst_rel_rmse < 0.005);
  CHECK(worst_scale_dev < 0.01);
}

TEST_CASE("criterion 5: linear initialization exactness") {
  const PlenopticIntrinsics gt = synthgen::default_camera_no_distortion();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uz(900.0, 2600.0);
  std::vector<pleninit::DepthSample> samples;
  for (int i = 0; i < 1000; ++i) {
    const double z = uz(rng);
    const double b_L = 1.0 / (1.0 / gt.f_L - 1.0 / z);
    samples.push_back({(b_L - gt.b_L0) / gt.B, z});
  }
  const pleninit::BInit init = pleninit::init_B_bL0(samples, gt.f_L);
  const double rel_B = rel(init.B, gt.B);
  const double rel_b = rel(init.b_L0, gt.b_L0);

  bool rank_raised = false;
  try {
    (void)pleninit::init_B_bL0({{3.0, 1500.0}, {3.0, 1600.0}, {3.0, 1700.0}}, gt.f_L);
  } catch (const pleninit::RankDeficientError&) {
    rank_raised = true;
  }
  const bool pass = rel_B < 1e-9 && rel_b < 1e-9 && rank_raised;
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "rel B %.2e, rel b_L0 %.2e (tol 1e-9), RankDeficient raised: %s", rel_B, rel_b,
                rank_raised ? "yes" : "no");
  report_line(5, pass, detail);
  CHECK(rel_B < 1e-9);
  CHECK(rel_b < 1e-9);
  CHECK(rank_raised);
}

TEST_CASE("criterion 6: Schur step equals the dense normal-equation step") {
  const auto data = make_dataset(50, 10, 0.1, 0.0, 6);
  std::mt19937_64 rng(66);
  std::uniform_real_distribution<double> ul(-5.0, 0.0);
  std::uniform_real_distribution<double> up(-0.004, 0.004);

  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ba::CalibrationProblem problem;
    problem.intrinsics = data.intrinsics_gt;
    problem.grid = data.grid;
    problem.poses = data.poses_gt;
    problem.points = data.points_gt;
    problem.observations = data.observations;
    problem.scale_constraints = data.scale_constraints;
    problem.fixed.poses.assign(problem.poses.size(), false);
    problem.fixed.poses[0] = true;
    problem.intrinsics.f_L *= 1.0 + up(rng);
    problem.intrinsics.b_L0 *= 1.0 + up(rng);
    problem.intrinsics.B *= 1.0 + up(rng);
    problem.intrinsics.c_x += up(rng) * 200.0;
    for (Vec3& p : problem.points) p += Vec3(up(rng), up(rng), up(rng)) * 1000.0;
    for (std::size_t j = 1; j < problem.poses.size(); ++j) {
      problem.poses[j].rotation =
          (quaternion_exp(Vec3(up(rng), up(rng), up(rng))) * problem.poses[j].rotation)
              .normalized();
      problem.poses[j].translation += Vec3(up(rng), up(rng), up(rng)) * 500.0;
    }

    const double lambda = std::pow(10.0, ul(rng));
    const ba::detail::ProblemAdapter adapter(problem);
    const ba::engine::StepResult schur = adapter.step(lambda, 1);
    const testsupport::DenseStep dense = testsupport::dense_reference_step(problem, lambda);
    REQUIRE(!schur.singular);
    REQUIRE(!dense.singular);
    const double cam_scale = std::max(1.0, dense.camera_delta.norm());
    worst = std::max(worst, (schur.camera_delta - dense.camera_delta).norm() / cam_scale);
    for (std::size_t p = 0; p < dense.point_deltas.size(); ++p) {
      worst = std::max(worst, (schur.point_deltas[p] - dense.point_deltas[p]).norm() /
                                  std::max(1.0, dense.point_deltas[p].norm()));
    }
  }
  const bool pass = worst < 1e-8;
  report_line(6, pass, "worst relative step difference " + std::to_string(worst) + " (tol 1e-8)");
  CHECK(worst < 1e-8);
}

TEST_CASE("criterion 7: analytic jacobians vs central finite differences") {
  const double worst = testsupport::jacobian_worst_relative_error(
      synthgen::default_camera(), synthgen::default_grid(), 100, 7);
  const bool pass = worst < 1e-4;
  report_line(7, pass,
              "worst relative error " + std::to_string(worst) + " over 100 configurations "
              "(tol 1e-4), all 10 intrinsics + 6 pose + 3 point dofs");
  CHECK(worst < 1e-4);
}

TEST_CASE("criterion 8: distortion round trip and lookup table") {
  const PlenopticIntrinsics intr = synthgen::default_camera();
  const Vec2 c_L = intr.principal_point();

  double worst_rt = 0.0;
  for (int gy = 0; gy < 64; ++gy) {
    for (int gx = 0; gx < 64; ++gx) {
      const Vec2 p(gx * 2047.0 / 63.0, gy * 2047.0 / 63.0);
      const Vec2 d = model::distort(intr.distortion, c_L, p);
      worst_rt = std::max(worst_rt, (model::undistort(intr.distortion, c_L, d) - p).norm());
    }
  }

  const downstream::UndistortionMap map =
      downstream::build_undistortion_map(intr, 2048.0, 2048.0, 8.0);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 2048.0);
  double worst_map = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec2 q(u(rng), u(rng));
    const auto lookup = map(q);
    REQUIRE(lookup.valid);
    const Vec2 exact = model::undistort(intr.distortion, c_L, q);
    worst_map = std::max(worst_map, (lookup.value - exact).norm());
  }
  const bool pass = worst_rt < 1e-8 && worst_map < 0.01;
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "round trip %.2e px over 64x64 grid (tol 1e-8), table vs exact %.4f px at step 8 "
                "(tol 0.01)",
                worst_rt, worst_map);
  report_line(8, pass, detail);
  CHECK(worst_rt < 1e-8);
  CHECK(worst_map < 0.01);
}

TEST_CASE("criterion 9: downstream inverses") {
  const PlenopticIntrinsics intr = synthgen::default_camera_no_distortion();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uz(250.0, 80000.0);
  std::uniform_real_distribution<double> ux(-400.0, 400.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double z = uz(rng);
    const auto vp = model::project_to_virtual(intr, Vec3(ux(rng), ux(rng), z));
    REQUIRE(vp.status == model::ProjectionStatus::kOk);
    worst = std::max(worst, std::abs(downstream::metric_depth(intr, vp.point.v) - z) / z);
  }

  bool identity_exact = true;
  std::uniform_real_distribution<double> up(0.0, 2048.0);
  for (int i = 0; i < 1000; ++i) {
    const VirtualPoint vp{up(rng), up(rng), 2.0};
    const Vec2 proj = downstream::central_perspective_project(intr, vp);
    identity_exact = identity_exact && proj.x() == vp.x && proj.y() == vp.y;
  }
  const bool pass = worst < 1e-9 && identity_exact;
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "metric depth inverse rel %.2e (tol 1e-9), v=2 projection identity exact: %s",
                worst, identity_exact ? "yes" : "no");
  report_line(9, pass, detail);
  CHECK(worst < 1e-9);
  CHECK(identity_exact);
}

TEST_CASE("criterion 10: robustness sweep over point and view counts") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dataset = make_dataset(kBatchPoints, kBatchViews, 0.2, 0.05, 2026);

  eval::SweepOptions options;
  options.point_counts = {75, 300, 800, 1500};
  options.view_counts = {15, 25, 70};
  options.repeats = 2;
  options.seed = 7;
  options.pipeline.sfm.threads = 1;
  options.pipeline.solver.threads = 1;
  const eval::SweepResult sweep = eval::robustness_sweep(dataset, options);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  bool tolerance_ok = true;
  bool finite_ok = true;
  for (const eval::SweepCell& cell : sweep.cells) {
    // Every cell down to 75 points / 15 views must terminate with a finite
    // report on every repeat.
    if (cell.successes != cell.attempts) finite_ok = false;
    for (const auto& [name, value] : cell.rmse_percent) {
      if (!std::isfinite(value)) finite_ok = false;
    }
    if (cell.num_points >= 800 && cell.num_views >= 25) {
      const auto get = [&](const char* n) {
        const auto it = cell.rmse_percent.find(n);
        return it == cell.rmse_percent.end() ? 1e9 : it->second;
      };
      if (get("f_L") > 0.3 || get("b_L0") > 0.3 || get("c_x") > 0.3 || get("c_y") > 0.3 ||
          get("B") > 2.0) {
        tolerance_ok = false;
      }
    }
  }
  std::printf("%s", eval::sweep_to_csv(sweep).c_str());
  const bool pass = tolerance_ok && finite_ok && elapsed < 1800.0;
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "criterion-2 tolerances hold down to 800 pts / 25 views: %s; finite reports down "
                "to 75 pts / 15 views: %s; %.0f s (tol 1800)",
                tolerance_ok ? "yes" : "no", finite_ok ? "yes" : "no", elapsed);
  report_line(10, pass, detail);
  CHECK(tolerance_ok);
  CHECK(finite_ok);
  CHECK(elapsed < 1800.0);
}
