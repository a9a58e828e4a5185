// plencal: synthetic-data generation, calibration, evaluation and export for
// MLA-based plenoptic cameras.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <cmath>
#include <map>
#include <set>
#include <optional>

#include "plencal/downstream.hpp"
#include "plencal/eval.hpp"
#include "plencal/io.hpp"
#include "plencal/pipeline.hpp"
#include "plencal/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace plencal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadConfig = 2;
constexpr int kExitGenerationFailure = 3;
constexpr int kExitPipelineFailure = 4;

int cmd_synth(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
  io::SynthConfig config;
  try {
    config = config_path.empty() ? io::default_synth_config() : io::read_synth_config(config_path);
    if (seed_override) config.scene.rng_seed = *seed_override;
    config.scene.validate();
  } catch (const Error& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitBadConfig;
  }
  try {
    const MicroLensGrid grid = synthgen::generate_hex_grid(
        config.sensor_w_px, config.sensor_h_px, config.mla_pitch_px, config.micro_image_radius_px);
    const synthgen::SyntheticDataset data = synthgen::generate(config.scene, config.camera, grid);
    fs::create_directories(out_dir);
    io::write_dataset(fs::path(out_dir) / "dataset.json", data);
    io::write_groundtruth(fs::path(out_dir) / "groundtruth.json", data);
    std::cout << "wrote " << (fs::path(out_dir) / "dataset.json").string() << " ("
              << data.observations.size() << " observations, " << data.points_gt.size()
              << " points, " << data.poses_gt.size() << " views)\n";
  } catch (const synthgen::GenerationError& e) {
    // Spec violations detected during generation are config problems.
    const std::string what = e.what();
    std::cerr << (what.find("must") != std::string::npos ? "invalid config: " : "generation failed: ")
              << what << "\n";
    return what.find("must") != std::string::npos ? kExitBadConfig : kExitGenerationFailure;
  } catch (const Error& e) {
    std::cerr << "generation failed: " << e.what() << "\n";
    return kExitGenerationFailure;
  }
  return kExitOk;
}

int cmd_calibrate(const std::string& dataset_path, const std::string& mode,
                  const std::string& fix_csv, const std::string& nominal_path,
                  const std::string& out_dir, int threads, std::uint64_t seed) {
  pipeline::CalibrationInput input;
  pipeline::PipelineOptions options;
  try {
    input = io::read_dataset(dataset_path);
    if (mode != "full" && mode != "recalib") {
      throw ConfigError("mode must be 'full' or 'recalib'");
    }
    options.recalibration = mode == "recalib";
    if (!fix_csv.empty()) options.extra_fixed = io::parse_fixed_names(fix_csv);
    if (!nominal_path.empty()) {
      options.nominal = io::read_calibration(nominal_path).intrinsics;
    }
    if (options.recalibration && !options.nominal) {
      throw ConfigError("recalib mode requires --nominal with trusted f_L and B");
    }
    options.sfm.threads = threads;
    options.sfm.seed = seed;
    options.solver.threads = threads;
  } catch (const Error& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitBadConfig;
  }

  pipeline::PipelineResult result;
  try {
    result = pipeline::run_calibration(input, options);
  } catch (const pipeline::PipelineError& e) {
    std::cerr << "calibration failed at stage '" << e.stage() << "': " << e.what() << "\n";
    return kExitPipelineFailure;
  } catch (const Error& e) {
    std::cerr << "calibration failed: " << e.what() << "\n";
    return kExitPipelineFailure;
  }

  try {
    fs::create_directories(out_dir);
    ba::FixedMask mask = result.problem.fixed;
    io::write_calibration(fs::path(out_dir) / "calibration.json", result.problem.intrinsics,
                          io::fixed_mask_names(mask), &result.report);
    io::write_tum(fs::path(out_dir) / "trajectory.tum", result.problem.poses,
                  result.pinhole.view_ids);

    json report;
    report["mode"] = mode;
    report["metric_scale"] = result.metric_scale;
    report["initial_B_mm"] = result.initial_B;
    report["initial_b_L0_mm"] = result.initial_b_L0;
    report["used_scale_constraints"] = result.used_scale_constraints;
    report["init_fell_back_to_nominal"] = result.init_fell_back_to_nominal;
    report["registered_views"] = result.pinhole.view_ids;
    report["failed_views"] = result.pinhole.failed_views;
    report["pinhole_mean_reproj_px"] = result.pinhole.mean_reproj_error_px;
    report["solver"] = json::parse(io::solve_report_to_json(result.report));
    std::ofstream out(fs::path(out_dir) / "report.json");
    out << report.dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "cannot write outputs: " << e.what() << "\n";
    return kExitPipelineFailure;
  }
  std::cout << "calibration written to " << out_dir << " (final cost "
            << result.report.final_cost << ", " << ba::to_string(result.report.termination)
            << ")\n";
  return kExitOk;
}

PlenopticIntrinsics read_any_calibration(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  json j;
  in >> j;
  if (j.contains("intrinsics")) {
    // groundtruth.json carries the intrinsics nested
    io::GroundTruth gt = io::read_groundtruth(path);
    return gt.intrinsics;
  }
  return io::read_calibration(path).intrinsics;
}

struct StampedTrajectory {
  std::vector<double> timestamps;
  std::vector<Pose> poses;
};

StampedTrajectory read_any_trajectory(const fs::path& path) {
  StampedTrajectory out;
  if (path.extension() == ".json") {
    out.poses = io::read_groundtruth(path).poses;
    for (std::size_t i = 0; i < out.poses.size(); ++i) out.timestamps.push_back(static_cast<double>(i));
    return out;
  }
  io::TumTrajectory tum = io::read_tum(path);
  out.timestamps = std::move(tum.timestamps);
  out.poses = std::move(tum.camera_from_world);
  return out;
}

/// Nearest-timestamp association of two trajectories; synthetic data stamps
/// views by index, so this reduces to index association there.
std::pair<std::vector<Pose>, std::vector<Pose>> associate(const StampedTrajectory& est,
                                                          const StampedTrajectory& ref) {
  std::pair<std::vector<Pose>, std::vector<Pose>> out;
  for (std::size_t i = 0; i < est.poses.size(); ++i) {
    double best = 0.5;  // maximum association distance
    int match = -1;
    for (std::size_t j = 0; j < ref.poses.size(); ++j) {
      const double d = std::abs(est.timestamps[i] - ref.timestamps[j]);
      if (d < best) {
        best = d;
        match = static_cast<int>(j);
      }
    }
    if (match < 0) continue;
    out.first.push_back(est.poses[i]);
    out.second.push_back(ref.poses[static_cast<std::size_t>(match)]);
  }
  return out;
}

int cmd_eval(const std::string& est_calib, const std::string& ref_calib,
             const std::string& est_traj, const std::string& ref_traj, const std::string& out) {
  json report;
  std::string markdown;
  try {
    if (!est_calib.empty() && !ref_calib.empty()) {
      const PlenopticIntrinsics est = read_any_calibration(est_calib);
      const PlenopticIntrinsics ref = read_any_calibration(ref_calib);
      json params = json::array();
      std::ostringstream md;
      md << "| parameter | estimated | reference | deviation [%] |\n";
      md << "|---|---|---|---|\n";
      for (const eval::ParameterDeviation& d : eval::parameter_report(est, ref)) {
        json entry = {{"name", d.name},
                      {"estimated", d.estimated},
                      {"reference", d.reference},
                      {"absolute", d.absolute}};
        if (!d.zero_reference) entry["relative_percent"] = d.relative_percent;
        params.push_back(entry);
        md << "| " << d.name << " | " << d.estimated << " | " << d.reference << " | ";
        if (d.zero_reference) {
          md << "-";
        } else {
          md << d.relative_percent;
        }
        md << " |\n";
      }
      report["parameters"] = params;
      markdown += md.str();
    }
    if (!est_traj.empty() && !ref_traj.empty()) {
      const auto [est, ref] =
          associate(read_any_trajectory(est_traj), read_any_trajectory(ref_traj));
      const eval::TrajectoryRmse rigid = eval::trajectory_rmse(est, ref, eval::AlignMode::kRigid);
      const eval::TrajectoryRmse sim =
          eval::trajectory_rmse(est, ref, eval::AlignMode::kSimilarity);
      report["trajectory"] = {{"rigid_rmse_mm", rigid.rmse_mm},
                              {"similarity_rmse_mm", sim.rmse_mm},
                              {"similarity_scale", sim.scale},
                              {"poses", est.size()}};
    }
    if (report.empty()) {
      std::cerr << "nothing to evaluate: pass --est-calib/--ref-calib and/or "
                   "--est-traj/--ref-traj\n";
      return kExitBadConfig;
    }
  } catch (const Error& e) {
    std::cerr << "evaluation failed: " << e.what() << "\n";
    return kExitBadConfig;
  }
  if (!out.empty()) {
    std::ofstream os(out);
    os << report.dump(2) << "\n";
  }
  std::cout << markdown;
  if (report.contains("trajectory")) {
    std::cout << "trajectory rmse (rigid): " << report["trajectory"]["rigid_rmse_mm"]
              << " mm, (similarity): " << report["trajectory"]["similarity_rmse_mm"]
              << " mm, scale " << report["trajectory"]["similarity_scale"] << "\n";
  }
  return kExitOk;
}

int cmd_export(const std::string& dataset_path, const std::string& calib_path,
               const std::string& what, const std::string& traj_path, const std::string& out,
               double map_step) {
  try {
    const pipeline::CalibrationInput input = io::read_dataset(dataset_path);
    const PlenopticIntrinsics intr = read_any_calibration(calib_path);

    // Per-(point, view) virtual points under the calibrated model.
    const auto measurements = sfm::virtual_track_centroids(input.observations, input.grid, intr);

    if (what == "undistort-map") {
      const downstream::UndistortionMap map = downstream::build_undistortion_map(
          intr, input.grid.sensor_width, input.grid.sensor_height, map_step);
      json j;
      j["step_px"] = map.step;
      j["cols"] = map.cols;
      j["rows"] = map.rows;
      j["sensor_w_px"] = map.width;
      j["sensor_h_px"] = map.height;
      json nodes = json::array();
      for (std::size_t i = 0; i < map.nodes.size(); ++i) {
        nodes.push_back(json::array({map.nodes[i].x(), map.nodes[i].y(),
                                     static_cast<int>(map.valid[i])}));
      }
      j["nodes"] = std::move(nodes);
      std::ofstream os(out);
      if (!os) throw ConfigError("cannot write " + out);
      os << j.dump() << "\n";
    } else if (what == "rgbd") {
      std::ofstream os(out);
      if (!os) throw ConfigError("cannot write " + out);
      os.precision(17);
      std::map<int, std::vector<downstream::LabeledVirtualPoint>> per_view;
      for (const sfm::VirtualMeasurement& m : measurements) {
        if (m.status != sfm::ClusterStatus::kOk) continue;
        per_view[m.view_id].push_back({m.point_id, VirtualPoint{m.x, m.y, m.v}});
      }
      for (const auto& [view, points] : per_view) {
        std::vector<downstream::LabeledVirtualPoint> usable;
        for (const auto& p : points) {
          if (p.vp.v * intr.B + intr.b_L0 > intr.f_L) usable.push_back(p);
        }
        const downstream::RgbdFrame frame = downstream::export_rgbd_frame(intr, usable, view);
        os << json{{"type", "frame"},
                   {"view_id", frame.view_id},
                   {"equivalent_focal_px", frame.equivalent_focal_px},
                   {"points", frame.points.size()}}
                  .dump()
           << "\n";
        for (const downstream::RgbdPoint& p : frame.points) {
          os << json{{"type", "point"},
                     {"point_id", p.point_id},
                     {"x_proj_px", p.x_proj},
                     {"y_proj_px", p.y_proj},
                     {"depth_mm", p.depth_mm}}
                    .dump()
             << "\n";
        }
      }
    } else if (what == "cloud") {
      if (traj_path.empty()) throw ConfigError("--traj is required for the cloud export");
      const StampedTrajectory traj = read_any_trajectory(traj_path);
      // Average each point's back-projections over its observing views; the
      // trajectory timestamps carry the view ids.
      std::map<int, Pose> pose_of_view;
      for (std::size_t i = 0; i < traj.poses.size(); ++i) {
        pose_of_view[static_cast<int>(std::lround(traj.timestamps[i]))] = traj.poses[i];
      }
      std::map<int, std::pair<Vec3, int>> accumulated;
      for (const sfm::VirtualMeasurement& m : measurements) {
        if (m.status != sfm::ClusterStatus::kOk) continue;
        if (m.v * intr.B + intr.b_L0 <= intr.f_L) continue;
        const auto it = pose_of_view.find(m.view_id);
        if (it == pose_of_view.end()) continue;
        const Vec3 camera_point = downstream::virtual_to_camera(intr, {m.x, m.y, m.v});
        const Vec3 world = it->second.inverse() * camera_point;
        auto& acc = accumulated[m.point_id];
        acc.first += world;
        acc.second += 1;
      }
      std::vector<downstream::CloudPoint> cloud;
      for (const auto& [id, acc] : accumulated) {
        cloud.push_back({acc.first / acc.second, std::nullopt});
      }
      std::ofstream os(out);
      if (!os) throw ConfigError("cannot write " + out);
      downstream::write_ply(os, cloud);
    } else {
      throw ConfigError("--what must be cloud, rgbd or undistort-map");
    }
  } catch (const Error& e) {
    std::cerr << "export failed: " << e.what() << "\n";
    return kExitBadConfig;
  }
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plencal: online calibration toolkit for MLA-based plenoptic cameras"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
  std::string synth_config, synth_out = ".";
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "scene/camera configuration JSON");
  synth->add_option("--seed", synth_seed, "override the dataset seed");
  synth->add_option("out", synth_out, "output directory")->required();

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "run the calibration pipeline on a dataset");
  std::string cal_dataset, cal_mode = "full", cal_fix, cal_nominal, cal_out = ".";
  int cal_threads = 0;
  std::uint64_t cal_seed = 7;
  calibrate->add_option("dataset", cal_dataset, "dataset.json")->required();
  calibrate->add_option("--mode", cal_mode, "full | recalib");
  calibrate->add_option("--fix", cal_fix, "comma-separated parameters to hold fixed");
  calibrate->add_option("--nominal", cal_nominal, "nominal calibration JSON (required for recalib)");
  calibrate->add_option("--out", cal_out, "output directory");
  calibrate->add_option("--threads", cal_threads, "worker threads (0 = auto)");
  calibrate->add_option("--seed", cal_seed, "RANSAC seed");

  // eval
  auto* evaluate = app.add_subcommand("eval", "compare calibrations and trajectories");
  std::string ev_est_calib, ev_ref_calib, ev_est_traj, ev_ref_traj, ev_out;
  evaluate->add_option("--est-calib", ev_est_calib, "estimated calibration.json");
  evaluate->add_option("--ref-calib", ev_ref_calib, "reference calibration.json or groundtruth.json");
  evaluate->add_option("--est-traj", ev_est_traj, "estimated trajectory (TUM)");
  evaluate->add_option("--ref-traj", ev_ref_traj, "reference trajectory (TUM or groundtruth.json)");
  evaluate->add_option("--out", ev_out, "report JSON path");

  // export
  auto* exporter = app.add_subcommand("export", "export downstream artifacts");
  std::string ex_dataset, ex_calib, ex_what, ex_traj, ex_out;
  double ex_step = 8.0;
  exporter->add_option("dataset", ex_dataset, "dataset.json")->required();
  exporter->add_option("--calib", ex_calib, "calibration.json")->required();
  exporter->add_option("--what", ex_what, "cloud | rgbd | undistort-map")->required();
  exporter->add_option("--traj", ex_traj, "trajectory (TUM), required for cloud");
  exporter->add_option("--step", ex_step, "undistortion map grid step [px]");
  exporter->add_option("--out", ex_out, "output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadConfig;
  }

  if (synth->parsed()) return cmd_synth(synth_config, synth_out, synth_seed);
  if (calibrate->parsed()) {
    return cmd_calibrate(cal_dataset, cal_mode, cal_fix, cal_nominal, cal_out, cal_threads,
                         cal_seed);
  }
  if (evaluate->parsed()) return cmd_eval(ev_est_calib, ev_ref_calib, ev_est_traj, ev_ref_traj, ev_out);
  if (exporter->parsed()) return cmd_export(ex_dataset, ex_calib, ex_what, ex_traj, ex_out, ex_step);
  return kExitBadConfig;
}
