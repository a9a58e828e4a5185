#include "plencal/io.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace plencal {
namespace io {

using nlohmann::json;

namespace {

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void save_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << j.dump(2) << "\n";
}

double require_number(const json& j, const std::string& field) {
  if (!j.contains(field) || !j[field].is_number()) {
    throw ConfigError("missing or non-numeric field '" + field + "'");
  }
  return j[field].get<double>();
}

json intrinsics_to_json(const PlenopticIntrinsics& intr) {
  return json{{"f_L_mm", intr.f_L},
              {"b_L0_mm", intr.b_L0},
              {"B_mm", intr.B},
              {"c_x_px", intr.c_x},
              {"c_y_px", intr.c_y},
              {"pixel_size_x_mm", intr.s_x},
              {"pixel_size_y_mm", intr.s_y},
              {"distortion",
               {{"k0", intr.distortion.k0},
                {"k1", intr.distortion.k1},
                {"k2", intr.distortion.k2},
                {"p0", intr.distortion.p0},
                {"p1", intr.distortion.p1}}}};
}

PlenopticIntrinsics intrinsics_from_json(const json& j) {
  PlenopticIntrinsics intr;
  intr.f_L = require_number(j, "f_L_mm");
  intr.b_L0 = require_number(j, "b_L0_mm");
  intr.B = require_number(j, "B_mm");
  intr.c_x = require_number(j, "c_x_px");
  intr.c_y = require_number(j, "c_y_px");
  intr.s_x = require_number(j, "pixel_size_x_mm");
  intr.s_y = require_number(j, "pixel_size_y_mm");
  if (j.contains("distortion")) {
    const json& d = j["distortion"];
    intr.distortion.k0 = require_number(d, "k0");
    intr.distortion.k1 = require_number(d, "k1");
    intr.distortion.k2 = require_number(d, "k2");
    intr.distortion.p0 = require_number(d, "p0");
    intr.distortion.p1 = require_number(d, "p1");
  }
  intr.validate();
  return intr;
}

json pose_to_json(const Pose& p) {
  return json::array({p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z(),
                      p.translation.x(), p.translation.y(), p.translation.z()});
}

Pose pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 7) throw ConfigError("pose must be [qw,qx,qy,qz,tx,ty,tz]");
  Eigen::Quaterniond q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                       j[3].get<double>());
  return Pose(q.normalized(), Vec3(j[4].get<double>(), j[5].get<double>(), j[6].get<double>()));
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const synthgen::SyntheticDataset& data) {
  json j;
  j["camera"] = {{"sensor_w_px", data.grid.sensor_width},
                 {"sensor_h_px", data.grid.sensor_height},
                 {"pixel_size_x_mm", data.intrinsics_gt.s_x},
                 {"pixel_size_y_mm", data.intrinsics_gt.s_y},
                 {"nominal_f_L_mm", data.intrinsics_gt.f_L}};
  json centers = json::array();
  for (const MicroLensGrid::Center& c : data.grid.centers) {
    centers.push_back(json::array({c.lens_id, c.x, c.y}));
  }
  j["mla"] = {{"centers", std::move(centers)},
              {"micro_image_radius_px", data.grid.micro_image_radius}};
  json obs = json::array();
  for (const Observation& r : data.observations.records()) {
    obs.push_back(json::array({r.point_id, r.view_id, r.lens_id, r.x, r.y}));
  }
  j["observations"] = std::move(obs);
  json constraints = json::array();
  for (const ScaleConstraint& c : data.scale_constraints) {
    constraints.push_back(
        json{{"a", c.point_a}, {"b", c.point_b}, {"distance_mm", c.distance}, {"weight", c.weight}});
  }
  j["scale_constraints"] = std::move(constraints);
  save_json(path, j);
}

pipeline::CalibrationInput read_dataset(const std::filesystem::path& path) {
  const json j = load_json(path);
  pipeline::CalibrationInput input;
  if (!j.contains("camera")) throw ConfigError("missing field 'camera'");
  const json& cam = j["camera"];
  const double sensor_w = require_number(cam, "sensor_w_px");
  const double sensor_h = require_number(cam, "sensor_h_px");
  input.pixel_size_x = require_number(cam, "pixel_size_x_mm");
  input.pixel_size_y = require_number(cam, "pixel_size_y_mm");
  if (cam.contains("nominal_f_L_mm")) input.nominal_f_L = cam["nominal_f_L_mm"].get<double>();

  if (!j.contains("mla")) throw ConfigError("missing field 'mla'");
  const json& mla = j["mla"];
  if (!mla.contains("centers") || !mla["centers"].is_array()) {
    throw ConfigError("missing or invalid field 'mla.centers'");
  }
  std::vector<MicroLensGrid::Center> centers;
  for (const json& c : mla["centers"]) {
    if (!c.is_array() || c.size() != 3) {
      throw ConfigError("mla.centers entries must be [lens_id, cx_px, cy_px]");
    }
    centers.push_back({c[0].get<int>(), c[1].get<double>(), c[2].get<double>()});
  }
  input.grid = MicroLensGrid(std::move(centers), require_number(mla, "micro_image_radius_px"),
                             sensor_w, sensor_h);

  if (!j.contains("observations") || !j["observations"].is_array()) {
    throw ConfigError("missing or invalid field 'observations'");
  }
  std::vector<Observation> records;
  records.reserve(j["observations"].size());
  for (const json& o : j["observations"]) {
    if (!o.is_array() || o.size() != 5) {
      throw ConfigError("observations entries must be [point_id, view_id, lens_id, x_px, y_px]");
    }
    records.push_back(
        {o[0].get<int>(), o[1].get<int>(), o[2].get<int>(), o[3].get<double>(), o[4].get<double>()});
  }
  input.observations = ObservationSet(std::move(records));

  if (j.contains("scale_constraints")) {
    for (const json& c : j["scale_constraints"]) {
      ScaleConstraint sc;
      sc.point_a = static_cast<int>(require_number(c, "a"));
      sc.point_b = static_cast<int>(require_number(c, "b"));
      sc.distance = require_number(c, "distance_mm");
      sc.weight = c.contains("weight") ? c["weight"].get<double>() : 1.0;
      input.scale_constraints.push_back(sc);
    }
  }
  return input;
}

void write_groundtruth(const std::filesystem::path& path, const synthgen::SyntheticDataset& data) {
  json j;
  j["intrinsics"] = intrinsics_to_json(data.intrinsics_gt);
  json poses = json::array();
  for (const Pose& p : data.poses_gt) poses.push_back(pose_to_json(p));
  j["poses_camera_from_world"] = std::move(poses);
  json points = json::array();
  for (const Vec3& x : data.points_gt) points.push_back(json::array({x.x(), x.y(), x.z()}));
  j["points_mm"] = std::move(points);
  j["noise_sigma_px"] = data.spec.noise_sigma;
  j["outlier_fraction"] = data.spec.outlier_fraction;
  j["outlier_indices"] = data.outlier_indices;
  j["rng_seed"] = data.spec.rng_seed;
  save_json(path, j);
}

GroundTruth read_groundtruth(const std::filesystem::path& path) {
  const json j = load_json(path);
  GroundTruth gt;
  if (!j.contains("intrinsics")) throw ConfigError("missing field 'intrinsics'");
  gt.intrinsics = intrinsics_from_json(j["intrinsics"]);
  for (const json& p : j.value("poses_camera_from_world", json::array())) {
    gt.poses.push_back(pose_from_json(p));
  }
  for (const json& x : j.value("points_mm", json::array())) {
    gt.points.emplace_back(x[0].get<double>(), x[1].get<double>(), x[2].get<double>());
  }
  gt.noise_sigma = j.value("noise_sigma_px", 0.0);
  gt.outlier_fraction = j.value("outlier_fraction", 0.0);
  for (const json& i : j.value("outlier_indices", json::array())) {
    gt.outlier_indices.push_back(i.get<std::size_t>());
  }
  gt.seed = j.value("rng_seed", std::uint64_t{0});
  return gt;
}

std::string solve_report_to_json(const ba::SolveReport& report) {
  json j;
  j["iterations"] = report.iterations;
  j["initial_cost"] = report.initial_cost;
  j["final_cost"] = report.final_cost;
  j["termination"] = ba::to_string(report.termination);
  j["final_mean_abs_residual_px"] = report.final_mean_abs_residual_px;
  j["final_median_abs_residual_px"] = report.final_median_abs_residual_px;
  j["residual_count"] = report.residual_count;
  j["invalid_residuals"] = report.invalid_residuals;
  json steps = json::array();
  for (const ba::IterationRecord& s : report.steps) {
    steps.push_back(json{{"cost", s.cost},
                         {"damping", s.lambda},
                         {"step_norm", s.step_norm},
                         {"accepted", s.accepted}});
  }
  j["steps"] = std::move(steps);
  if (report.covariance_diagonal.size() > 0) {
    std::vector<double> cov(report.covariance_diagonal.data(),
                            report.covariance_diagonal.data() + report.covariance_diagonal.size());
    j["covariance_diagonal"] = cov;
  }
  return j.dump(2);
}

void write_calibration(const std::filesystem::path& path, const PlenopticIntrinsics& intrinsics,
                       const std::vector<std::string>& fixed, const ba::SolveReport* report) {
  json j = intrinsics_to_json(intrinsics);
  j["fixed"] = fixed;
  if (report != nullptr) j["solver_report"] = json::parse(solve_report_to_json(*report));
  save_json(path, j);
}

CalibrationFile read_calibration(const std::filesystem::path& path) {
  const json j = load_json(path);
  CalibrationFile file;
  file.intrinsics = intrinsics_from_json(j);
  for (const json& f : j.value("fixed", json::array())) {
    file.fixed.push_back(f.get<std::string>());
  }
  if (j.contains("solver_report")) file.solver_report_json = j["solver_report"].dump();
  return file;
}

void write_tum(const std::filesystem::path& path, const std::vector<Pose>& camera_from_world,
               const std::vector<int>& view_ids) {
  if (!view_ids.empty() && view_ids.size() != camera_from_world.size()) {
    throw ConfigError("write_tum: view id list does not match pose count");
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << "# view_index tx ty tz qx qy qz qw (world-from-camera)\n";
  out.precision(17);
  std::vector<std::size_t> order(camera_from_world.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!view_ids.empty()) {
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return view_ids[a] < view_ids[b]; });
  }
  for (const std::size_t i : order) {
    const Pose wc = camera_from_world[i].inverse();
    const int stamp = view_ids.empty() ? static_cast<int>(i) : view_ids[i];
    out << stamp << " " << wc.translation.x() << " " << wc.translation.y() << " "
        << wc.translation.z() << " " << wc.rotation.x() << " " << wc.rotation.y() << " "
        << wc.rotation.z() << " " << wc.rotation.w() << "\n";
  }
}

TumTrajectory read_tum(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  TumTrajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) continue;
    const Pose world_from_camera(Eigen::Quaterniond(qw, qx, qy, qz).normalized(),
                                 Vec3(tx, ty, tz));
    traj.timestamps.push_back(t);
    traj.camera_from_world.push_back(world_from_camera.inverse());
  }
  return traj;
}

SynthConfig default_synth_config() {
  SynthConfig config;
  config.camera = synthgen::default_camera();
  return config;
}

SynthConfig read_synth_config(const std::filesystem::path& path) {
  const json j = load_json(path);
  SynthConfig config = default_synth_config();
  synthgen::SceneSpec& s = config.scene;
  if (j.contains("num_points")) s.num_points = j["num_points"].get<int>();
  if (j.contains("num_views")) s.trajectory.num_views = j["num_views"].get<int>();
  if (j.contains("noise_sigma_px")) s.noise_sigma = j["noise_sigma_px"].get<double>();
  if (j.contains("outlier_fraction")) s.outlier_fraction = j["outlier_fraction"].get<double>();
  if (j.contains("num_scale_constraints")) {
    s.num_scale_constraints = j["num_scale_constraints"].get<int>();
  }
  if (j.contains("seed")) s.rng_seed = j["seed"].get<std::uint64_t>();
  if (j.contains("point_box")) {
    const json& b = j["point_box"];
    s.point_volume.lo = Vec3(require_number(b, "x_min"), require_number(b, "y_min"),
                             require_number(b, "z_min"));
    s.point_volume.hi = Vec3(require_number(b, "x_max"), require_number(b, "y_max"),
                             require_number(b, "z_max"));
  }
  if (j.contains("trajectory")) {
    const json& t = j["trajectory"];
    if (t.contains("amplitude_x_mm")) s.trajectory.amplitude_x = t["amplitude_x_mm"].get<double>();
    if (t.contains("amplitude_y_mm")) s.trajectory.amplitude_y = t["amplitude_y_mm"].get<double>();
    if (t.contains("amplitude_z_mm")) s.trajectory.amplitude_z = t["amplitude_z_mm"].get<double>();
    if (t.contains("look_at_depth_mm")) s.trajectory.look_at_depth = t["look_at_depth_mm"].get<double>();
    if (t.contains("max_roll_deg")) s.trajectory.max_roll_deg = t["max_roll_deg"].get<double>();
  }
  if (j.contains("camera")) {
    const json& c = j["camera"];
    PlenopticIntrinsics intr = config.camera;
    if (c.contains("f_L_mm")) intr.f_L = require_number(c, "f_L_mm");
    if (c.contains("b_L0_mm")) intr.b_L0 = require_number(c, "b_L0_mm");
    if (c.contains("B_mm")) intr.B = require_number(c, "B_mm");
    if (c.contains("c_x_px")) intr.c_x = require_number(c, "c_x_px");
    if (c.contains("c_y_px")) intr.c_y = require_number(c, "c_y_px");
    if (c.contains("pixel_size_x_mm")) intr.s_x = require_number(c, "pixel_size_x_mm");
    if (c.contains("pixel_size_y_mm")) intr.s_y = require_number(c, "pixel_size_y_mm");
    if (c.contains("sensor_w_px")) config.sensor_w_px = require_number(c, "sensor_w_px");
    if (c.contains("sensor_h_px")) config.sensor_h_px = require_number(c, "sensor_h_px");
    if (c.contains("distortion")) {
      const json& d = c["distortion"];
      if (d.contains("k0")) intr.distortion.k0 = d["k0"].get<double>();
      if (d.contains("k1")) intr.distortion.k1 = d["k1"].get<double>();
      if (d.contains("k2")) intr.distortion.k2 = d["k2"].get<double>();
      if (d.contains("p0")) intr.distortion.p0 = d["p0"].get<double>();
      if (d.contains("p1")) intr.distortion.p1 = d["p1"].get<double>();
    }
    try {
      intr.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("camera: ") + e.what());
    }
    config.camera = intr;
  }
  if (j.contains("mla")) {
    const json& m = j["mla"];
    if (m.contains("pitch_px")) config.mla_pitch_px = require_number(m, "pitch_px");
    if (m.contains("micro_image_radius_px")) {
      config.micro_image_radius_px = m["micro_image_radius_px"].get<double>();
    }
  }
  s.validate();
  return config;
}

void write_synth_config(const std::filesystem::path& path, const SynthConfig& config) {
  json j;
  j["seed"] = config.scene.rng_seed;
  j["num_points"] = config.scene.num_points;
  j["num_views"] = config.scene.trajectory.num_views;
  j["noise_sigma_px"] = config.scene.noise_sigma;
  j["outlier_fraction"] = config.scene.outlier_fraction;
  j["num_scale_constraints"] = config.scene.num_scale_constraints;
  j["point_box"] = {{"x_min", config.scene.point_volume.lo.x()},
                    {"x_max", config.scene.point_volume.hi.x()},
                    {"y_min", config.scene.point_volume.lo.y()},
                    {"y_max", config.scene.point_volume.hi.y()},
                    {"z_min", config.scene.point_volume.lo.z()},
                    {"z_max", config.scene.point_volume.hi.z()}};
  j["trajectory"] = {{"amplitude_x_mm", config.scene.trajectory.amplitude_x},
                     {"amplitude_y_mm", config.scene.trajectory.amplitude_y},
                     {"amplitude_z_mm", config.scene.trajectory.amplitude_z},
                     {"look_at_depth_mm", config.scene.trajectory.look_at_depth},
                     {"max_roll_deg", config.scene.trajectory.max_roll_deg}};
  json cam = intrinsics_to_json(config.camera);
  cam["sensor_w_px"] = config.sensor_w_px;
  cam["sensor_h_px"] = config.sensor_h_px;
  j["camera"] = cam;
  j["mla"] = {{"pitch_px", config.mla_pitch_px}};
  if (config.micro_image_radius_px) {
    j["mla"]["micro_image_radius_px"] = *config.micro_image_radius_px;
  }
  save_json(path, j);
}

std::vector<std::string> fixed_mask_names(const ba::FixedMask& mask) {
  static const char* kNames[] = {"f_L", "b_L0", "B", "c_x", "c_y", "k0", "k1", "k2", "p0", "p1"};
  std::vector<std::string> out;
  for (int i = 0; i < model::kNumIntrinsicParams; ++i) {
    if (mask.intrinsics[static_cast<std::size_t>(i)]) out.emplace_back(kNames[i]);
  }
  return out;
}

std::array<bool, model::kNumIntrinsicParams> parse_fixed_names(const std::string& csv) {
  static const std::map<std::string, int> kIndex = {
      {"f_L", model::kParamFL}, {"b_L0", model::kParamBL0}, {"B", model::kParamB},
      {"c_x", model::kParamCx}, {"c_y", model::kParamCy},   {"k0", model::kParamK0},
      {"k1", model::kParamK1},  {"k2", model::kParamK2},    {"p0", model::kParamP0},
      {"p1", model::kParamP1}};
  std::array<bool, model::kNumIntrinsicParams> out{};
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    const auto it = kIndex.find(item);
    if (it == kIndex.end()) throw ConfigError("unknown parameter name in --fix: '" + item + "'");
    out[static_cast<std::size_t>(it->second)] = true;
  }
  return out;
}

}  // namespace io
}  // namespace plencal
