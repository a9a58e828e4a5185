#include "plencal/pipeline.hpp"

#include <cmath>

namespace plencal {
namespace pipeline {

PlenopticIntrinsics initial_guess(const CalibrationInput& input, const PipelineOptions& options) {
  if (options.nominal) return *options.nominal;
  PlenopticIntrinsics guess;
  guess.s_x = input.pixel_size_x;
  guess.s_y = input.pixel_size_y;
  guess.f_L = input.nominal_f_L.value_or(
      1.2 * std::max(input.grid.sensor_width, input.grid.sensor_height) * input.pixel_size_x);
  guess.b_L0 = options.b_L0_guess_factor * guess.f_L;
  guess.B = options.B_guess_mm;
  guess.c_x = input.grid.sensor_width / 2.0;
  guess.c_y = input.grid.sensor_height / 2.0;
  guess.validate();
  return guess;
}

PipelineResult run_calibration(const CalibrationInput& input, const PipelineOptions& options) {
  if (options.recalibration && !options.nominal) {
    throw PipelineError("setup", "recalibration requires a nominal calibration (f_L and B)");
  }
  if (!(input.pixel_size_x > 0.0) || !(input.pixel_size_y > 0.0)) {
    throw PipelineError("setup", "pixel sizes must be positive");
  }

  PipelineResult result;
  const PlenopticIntrinsics guess = initial_guess(input, options);

  ObservationSet::FilterReport filter_report;
  const ObservationSet observations = input.observations.filter_min_views(2, &filter_report);
  if (observations.empty()) throw PipelineError("tracks", "no point is observed in two views");

  try {
    result.measurements = sfm::virtual_track_centroids(observations, input.grid, guess);
  } catch (const Error& e) {
    throw PipelineError("virtual-centroids", e.what());
  }

  sfm::PinholeCamera camera;
  camera.f = guess.f_L / guess.s_x;
  camera.c_x = guess.c_x;
  camera.c_y = guess.c_y;
  camera.aspect = guess.s_x / guess.s_y;
  try {
    result.pinhole = sfm::run_incremental_sfm(result.measurements, camera, options.sfm);
  } catch (const Error& e) {
    throw PipelineError("sfm-init", e.what());
  }

  double f_L_est = options.recalibration ? options.nominal->f_L
                                         : result.pinhole.camera.f * input.pixel_size_x;
  double initial_B = 0.0;
  double initial_b_L0 = 0.0;
  try {
    if (options.recalibration) {
      // No scene information: scale from the virtual depths against the
      // trusted f_L and B.
      const pleninit::ImplicitScaleResult s = pleninit::implicit_metric_scale(
          result.pinhole, result.measurements, options.nominal->f_L, options.nominal->B);
      result.metric_scale = s.scale;
      initial_B = options.nominal->B;
      initial_b_L0 = s.b_L0;
    } else {
      if (!input.scale_constraints.empty()) {
        const pleninit::ScaleResult s =
            pleninit::apply_metric_scale(result.pinhole, input.scale_constraints);
        result.metric_scale = s.scale;
        result.used_scale_constraints = true;
      }
      const std::vector<pleninit::DepthSample> samples =
          pleninit::collect_depth_samples(result.pinhole, result.measurements, f_L_est);
      try {
        const pleninit::BInit init = pleninit::init_B_bL0(samples, f_L_est);
        initial_B = init.B;
        initial_b_L0 = init.b_L0;
      } catch (const pleninit::RankDeficientError&) {
        initial_B = options.nominal ? options.nominal->B : options.B_guess_mm;
        initial_b_L0 = options.nominal ? options.nominal->b_L0
                                       : options.b_L0_guess_factor * f_L_est;
        result.init_fell_back_to_nominal = true;
      } catch (const pleninit::NegativeParameterError&) {
        initial_B = options.nominal ? options.nominal->B : options.B_guess_mm;
        initial_b_L0 = options.nominal ? options.nominal->b_L0
                                       : options.b_L0_guess_factor * f_L_est;
        result.init_fell_back_to_nominal = true;
      }
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError("plenoptic-init", e.what());
  }
  result.initial_B = initial_B;
  result.initial_b_L0 = initial_b_L0;

  // Keep the seed Galilean even if the linear fit strayed.
  if (!(initial_b_L0 < f_L_est)) {
    initial_b_L0 = options.b_L0_guess_factor * f_L_est;
    result.init_fell_back_to_nominal = true;
  }

  PlenopticIntrinsics config = guess;
  if (options.recalibration) {
    config.f_L = options.nominal->f_L;
    config.B = options.nominal->B;
  }
  pleninit::SeedOptions seed;
  seed.robust_scale = options.robust_scale;
  seed.recalibration = options.recalibration;
  seed.extra_fixed = options.extra_fixed;
  ba::CalibrationProblem problem;
  try {
    problem = pleninit::seed_plenoptic_problem(
        result.pinhole, initial_B, initial_b_L0, config, input.grid, observations,
        options.recalibration ? std::vector<ScaleConstraint>{} : input.scale_constraints, seed);
  } catch (const Error& e) {
    throw PipelineError("plenoptic-seed", e.what());
  }

  ba::SolveOptions solver = options.solver;
  solver.robust_scale = options.robust_scale;
  try {
    ba::SolveResult solved = ba::solve(problem, solver);
    result.problem = std::move(solved.problem);
    result.report = std::move(solved.report);
  } catch (const Error& e) {
    throw PipelineError("bundle-adjustment", e.what());
  }
  if (result.report.termination == ba::Termination::kSingularSystem ||
      result.report.termination == ba::Termination::kDiverged) {
    throw PipelineError("bundle-adjustment",
                        std::string("solver failed: ") + ba::to_string(result.report.termination));
  }
  return result;
}

}  // namespace pipeline
}  // namespace plencal
