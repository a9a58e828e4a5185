#include "plencal/ba.hpp"

#include <cmath>

namespace plencal {
namespace ba {

namespace {

Eigen::VectorXd pack_intrinsics(const PlenopticIntrinsics& intr) {
  Eigen::VectorXd x(model::kNumIntrinsicParams);
  x[model::kParamFL] = intr.f_L;
  x[model::kParamBL0] = intr.b_L0;
  x[model::kParamB] = intr.B;
  x[model::kParamCx] = intr.c_x;
  x[model::kParamCy] = intr.c_y;
  x[model::kParamK0] = intr.distortion.k0;
  x[model::kParamK1] = intr.distortion.k1;
  x[model::kParamK2] = intr.distortion.k2;
  x[model::kParamP0] = intr.distortion.p0;
  x[model::kParamP1] = intr.distortion.p1;
  return x;
}

PlenopticIntrinsics unpack_intrinsics(const Eigen::VectorXd& x, const PlenopticIntrinsics& like) {
  PlenopticIntrinsics intr = like;
  intr.f_L = x[model::kParamFL];
  intr.b_L0 = x[model::kParamBL0];
  intr.B = x[model::kParamB];
  intr.c_x = x[model::kParamCx];
  intr.c_y = x[model::kParamCy];
  intr.distortion.k0 = x[model::kParamK0];
  intr.distortion.k1 = x[model::kParamK1];
  intr.distortion.k2 = x[model::kParamK2];
  intr.distortion.p0 = x[model::kParamP0];
  intr.distortion.p1 = x[model::kParamP1];
  return intr;
}

/// Engine model over micro-image records: the full plenoptic projection.
class PlenopticResidualModel : public engine::ResidualModel {
 public:
  PlenopticResidualModel(const MicroLensGrid& grid, double s_x, double s_y,
                         std::vector<Observation> records)
      : grid_(&grid), s_x_(s_x), s_y_(s_y), records_(std::move(records)) {}

  int intrinsic_count() const override { return model::kNumIntrinsicParams; }

  bool state_valid(const Eigen::VectorXd& intrinsics) const override {
    const double f_L = intrinsics[model::kParamFL];
    const double b_L0 = intrinsics[model::kParamBL0];
    const double B = intrinsics[model::kParamB];
    return f_L > 0.0 && b_L0 > 0.0 && B > 0.0 && b_L0 < f_L;
  }

  bool evaluate(const Eigen::VectorXd& intrinsics, const Pose& pose, const Vec3& point,
                std::size_t index, Vec2* residual) const override {
    const PlenopticIntrinsics intr = make_intrinsics(intrinsics);
    const Observation& rec = records_[index];
    const model::FullProjection proj =
        model::project_full(intr, *grid_, pose, point, rec.lens_id, /*enforce_visibility=*/false);
    if (proj.status != model::ProjectionStatus::kOk) return false;
    *residual = proj.pixel - rec.xy();
    return true;
  }

  bool evaluate_jacobians(const Eigen::VectorXd& intrinsics, const Pose& pose, const Vec3& point,
                          std::size_t index, Vec2* residual, IntrJacobian* d_intr,
                          Eigen::Matrix<double, 2, 6>* d_pose,
                          Eigen::Matrix<double, 2, 3>* d_point) const override {
    const PlenopticIntrinsics intr = make_intrinsics(intrinsics);
    const Observation& rec = records_[index];
    const model::FullProjectionJacobians proj =
        model::project_full_with_jacobians(intr, *grid_, pose, point, rec.lens_id);
    if (proj.status != model::ProjectionStatus::kOk) return false;
    *residual = proj.pixel - rec.xy();
    *d_intr = proj.d_intrinsics;
    *d_pose = proj.d_pose;
    *d_point = proj.d_point;
    return true;
  }

  const std::vector<Observation>& records() const { return records_; }

 private:
  PlenopticIntrinsics make_intrinsics(const Eigen::VectorXd& x) const {
    PlenopticIntrinsics intr;  // bypass validation: transient iterates may sit at the boundary
    intr.s_x = s_x_;
    intr.s_y = s_y_;
    return unpack_intrinsics(x, intr);
  }

  const MicroLensGrid* grid_;
  double s_x_;
  double s_y_;
  std::vector<Observation> records_;
};

}  // namespace

void CalibrationProblem::validate() const {
  intrinsics.validate();
  grid.validate();
  if (poses.empty()) throw ProblemError("problem has no poses");
  if (!fixed.poses.empty() && fixed.poses.size() != poses.size()) {
    throw ProblemError("fixed pose mask size does not match pose count");
  }
  if (!fixed.poses.empty() && !fixed.poses[0]) {
    throw ProblemError("pose 0 must be fixed (gauge)");
  }
  for (const Pose& p : poses) {
    if (!p.is_normalized()) throw ProblemError("pose quaternion is not normalized");
  }
  for (const Observation& r : observations.records()) {
    if (r.point_id < 0 || r.point_id >= static_cast<int>(points.size())) {
      throw ProblemError("observation references unknown point");
    }
    if (r.view_id < 0 || r.view_id >= static_cast<int>(poses.size())) {
      throw ProblemError("observation references unknown view");
    }
    if (r.lens_id < 0 || r.lens_id >= static_cast<int>(grid.size())) {
      throw ProblemError("observation references unknown micro lens");
    }
  }
  for (const ScaleConstraint& c : scale_constraints) {
    if (c.point_a == c.point_b) throw ProblemError("scale constraint between identical points");
    if (c.point_a < 0 || c.point_a >= static_cast<int>(points.size()) || c.point_b < 0 ||
        c.point_b >= static_cast<int>(points.size())) {
      throw ProblemError("scale constraint references unknown point");
    }
    if (!(c.distance > 0.0)) throw ProblemError("scale constraint distance must be positive");
  }
}

ResidualResult residual(const CalibrationProblem& problem, const Observation& record) {
  ResidualResult out;
  const model::FullProjection proj = model::project_full(
      problem.intrinsics, problem.grid, problem.poses[static_cast<std::size_t>(record.view_id)],
      problem.points[static_cast<std::size_t>(record.point_id)], record.lens_id,
      /*enforce_visibility=*/false);
  if (proj.status != model::ProjectionStatus::kOk) {
    out.status = proj.status;
    out.value = Vec2::Constant(engine::kInvalidResidualComponent);
    return out;
  }
  out.value = proj.pixel - record.xy();
  return out;
}

namespace detail {

ProblemAdapter::ProblemAdapter(const CalibrationProblem& problem) {
  problem.validate();
  robust_scale = problem.robust_scale;
  auto plen = std::make_unique<PlenopticResidualModel>(
      problem.grid, problem.intrinsics.s_x, problem.intrinsics.s_y, problem.observations.records());

  engine_problem.observations.reserve(plen->records().size());
  for (const Observation& r : plen->records()) {
    engine_problem.observations.push_back({r.point_id, r.view_id});
  }
  engine_problem.scale_constraints = problem.scale_constraints;
  engine_problem.fixed_intrinsics.assign(problem.fixed.intrinsics.begin(),
                                         problem.fixed.intrinsics.end());
  engine_problem.fixed_poses.assign(problem.poses.size(), false);
  engine_problem.fixed_poses[0] = true;
  for (std::size_t j = 0; j < problem.fixed.poses.size(); ++j) {
    if (problem.fixed.poses[j]) engine_problem.fixed_poses[j] = true;
  }

  state.intrinsics = pack_intrinsics(problem.intrinsics);
  state.poses = problem.poses;
  state.points = problem.points;

  model = std::move(plen);
  engine_problem.model = model.get();
}

engine::StepResult ProblemAdapter::step(double lambda, int threads) const {
  return engine::compute_step(engine_problem, state, lambda, robust_scale, threads);
}

}  // namespace detail

SolveResult solve(const CalibrationProblem& problem, const SolveOptions& options_in) {
  detail::ProblemAdapter adapter(problem);
  // Solvability: at least as many residual components as free parameters.
  std::size_t free_params = 6 * (problem.poses.size() - 1) + 3 * problem.points.size() +
                            model::kNumIntrinsicParams;
  for (const bool fixed : problem.fixed.intrinsics) free_params -= fixed ? 1 : 0;
  for (std::size_t j = 1; j < problem.fixed.poses.size(); ++j) {
    free_params -= problem.fixed.poses[j] ? 6 : 0;
  }
  const std::size_t residual_components =
      2 * problem.observations.size() + problem.scale_constraints.size();
  if (residual_components < free_params) {
    throw ProblemError("underdetermined problem: " + std::to_string(residual_components) +
                       " residual components for " + std::to_string(free_params) +
                       " free parameters");
  }
  SolveOptions options = options_in;
  options.robust_scale = problem.robust_scale;

  engine::EngineResult er = engine::solve(adapter.engine_problem, adapter.state, options);

  SolveResult out{problem, std::move(er.report)};
  out.problem.intrinsics = unpack_intrinsics(er.state.intrinsics, problem.intrinsics);
  out.problem.poses = std::move(er.state.poses);
  out.problem.points = std::move(er.state.points);
  return out;
}

CostStats evaluate_cost(const CalibrationProblem& problem, int threads) {
  detail::ProblemAdapter adapter(problem);
  return engine::evaluate_cost(adapter.engine_problem, adapter.state, problem.robust_scale,
                               threads);
}

}  // namespace ba
}  // namespace plencal
