#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "plencal/ba.hpp"
#include "plencal/pipeline.hpp"
#include "plencal/synthgen.hpp"

namespace plencal {
namespace io {

/// dataset.json: camera block, MLA centers, observations and scale
/// constraints. UTF-8 JSON, numbers as decimal.
void write_dataset(const std::filesystem::path& path, const synthgen::SyntheticDataset& data);
pipeline::CalibrationInput read_dataset(const std::filesystem::path& path);

/// groundtruth.json sidecar: only evaluation reads it, never the calibrator.
struct GroundTruth {
  PlenopticIntrinsics intrinsics;
  std::vector<Pose> poses;  // camera-from-world
  std::vector<Vec3> points;
  double noise_sigma = 0.0;
  double outlier_fraction = 0.0;
  std::vector<std::size_t> outlier_indices;
  std::uint64_t seed = 0;
};
void write_groundtruth(const std::filesystem::path& path, const synthgen::SyntheticDataset& data);
GroundTruth read_groundtruth(const std::filesystem::path& path);

struct CalibrationFile {
  PlenopticIntrinsics intrinsics;
  std::vector<std::string> fixed;  // parameter names held fixed during the solve
  std::string solver_report_json;  // serialized SolveReport, informational
};
void write_calibration(const std::filesystem::path& path, const PlenopticIntrinsics& intrinsics,
                       const std::vector<std::string>& fixed, const ba::SolveReport* report);
CalibrationFile read_calibration(const std::filesystem::path& path);

/// TUM trajectory: `timestamp tx ty tz qx qy qz qw`, '#' comments. Poses are
/// written as world-from-camera positions/orientations (inverted from the
/// internal camera-from-world convention), one line per view, the view index
/// as timestamp. `view_ids` supplies the indices (identity when empty).
void write_tum(const std::filesystem::path& path, const std::vector<Pose>& camera_from_world,
               const std::vector<int>& view_ids = {});
/// Returns camera-from-world poses (re-inverted) plus timestamps.
struct TumTrajectory {
  std::vector<double> timestamps;
  std::vector<Pose> camera_from_world;
};
TumTrajectory read_tum(const std::filesystem::path& path);

/// Synthetic-scene configuration for the dataset generator.
struct SynthConfig {
  synthgen::SceneSpec scene;
  PlenopticIntrinsics camera;
  double mla_pitch_px = 23.0;
  std::optional<double> micro_image_radius_px;
  double sensor_w_px = 2048.0;
  double sensor_h_px = 2048.0;
};
SynthConfig read_synth_config(const std::filesystem::path& path);
SynthConfig default_synth_config();
void write_synth_config(const std::filesystem::path& path, const SynthConfig& config);

std::vector<std::string> fixed_mask_names(const ba::FixedMask& mask);
/// Parses a comma-separated parameter list (f_L, b_L0, B, c_x, c_y, k0..p1).
std::array<bool, model::kNumIntrinsicParams> parse_fixed_names(const std::string& csv);

std::string solve_report_to_json(const ba::SolveReport& report);

}  // namespace io
}  // namespace plencal
