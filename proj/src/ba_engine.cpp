#include "plencal/ba_engine.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plencal/parallel.hpp"

namespace plencal {
namespace ba {

const char* to_string(Termination t) {
  switch (t) {
    case Termination::kGradientTol: return "gradient tolerance";
    case Termination::kParamTol: return "parameter tolerance";
    case Termination::kMaxIterations: return "max iterations";
    case Termination::kSingularSystem: return "singular system";
    case Termination::kDiverged: return "diverged";
  }
  return "unknown";
}

namespace engine {
namespace {

/// Scale constraints are divided by the robust scale so their residuals are
/// commensurate with pixel residuals; with the robust loss disabled the
/// weight applies unscaled.
double constraint_divisor(double robust_scale) {
  return (robust_scale > 0.0 && std::isfinite(robust_scale)) ? robust_scale : 1.0;
}

double huber_cost(double squared_norm, double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) return squared_norm;
  const double d2 = delta * delta;
  if (squared_norm <= d2) return squared_norm;
  return 2.0 * delta * std::sqrt(squared_norm) - d2;
}

double huber_weight(double squared_norm, double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) return 1.0;
  const double d2 = delta * delta;
  if (squared_norm <= d2) return 1.0;
  return delta / std::sqrt(squared_norm);
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

/// Solve-time indexing: points grouped by scale-constraint connectivity so
/// the point block of the normal equations stays block-diagonal.
struct Context {
  const EngineProblem* problem = nullptr;
  CameraLayout layout;
  int threads = 1;
  double robust_scale = 1.0;

  int n_points = 0;
  std::vector<int> point_group;
  std::vector<int> point_offset;               // 3 * position inside its group
  std::vector<std::vector<int>> groups;        // point indices per group
  std::vector<std::vector<std::size_t>> group_constraints;
  std::vector<std::size_t> obs_order;          // observation indices, grouped
  std::vector<std::size_t> group_obs_begin;    // into obs_order, size groups+1
  std::vector<std::pair<std::size_t, std::size_t>> thread_groups;  // group ranges per thread
  std::vector<char> coord_fixed;               // n_points * 3
};

Context build_context(const EngineProblem& problem, double robust_scale, int threads) {
  Context ctx;
  ctx.problem = &problem;
  ctx.layout = camera_layout(problem);
  ctx.threads = std::max(1, resolve_thread_count(threads));
  ctx.robust_scale = robust_scale;

  int n_points = 0;
  for (const EngineObservation& o : problem.observations) n_points = std::max(n_points, o.point + 1);
  for (const ScaleConstraint& c : problem.scale_constraints) {
    n_points = std::max(n_points, std::max(c.point_a, c.point_b) + 1);
  }
  ctx.n_points = n_points;

  UnionFind uf(n_points);
  for (const ScaleConstraint& c : problem.scale_constraints) uf.unite(c.point_a, c.point_b);

  std::vector<int> root_to_group(static_cast<std::size_t>(n_points), -1);
  ctx.point_group.resize(static_cast<std::size_t>(n_points));
  ctx.point_offset.resize(static_cast<std::size_t>(n_points));
  for (int p = 0; p < n_points; ++p) {
    const int root = uf.find(p);
    if (root_to_group[static_cast<std::size_t>(root)] < 0) {
      root_to_group[static_cast<std::size_t>(root)] = static_cast<int>(ctx.groups.size());
      ctx.groups.emplace_back();
    }
    const int g = root_to_group[static_cast<std::size_t>(root)];
    ctx.point_group[static_cast<std::size_t>(p)] = g;
    ctx.point_offset[static_cast<std::size_t>(p)] = 3 * static_cast<int>(ctx.groups[static_cast<std::size_t>(g)].size());
    ctx.groups[static_cast<std::size_t>(g)].push_back(p);
  }

  ctx.group_constraints.resize(ctx.groups.size());
  for (std::size_t i = 0; i < problem.scale_constraints.size(); ++i) {
    const int g = ctx.point_group[static_cast<std::size_t>(problem.scale_constraints[i].point_a)];
    ctx.group_constraints[static_cast<std::size_t>(g)].push_back(i);
  }

  // Observations ordered by group; stable within a group, so accumulation
  // order per point block never depends on the thread count.
  ctx.obs_order.resize(problem.observations.size());
  std::iota(ctx.obs_order.begin(), ctx.obs_order.end(), std::size_t{0});
  std::stable_sort(ctx.obs_order.begin(), ctx.obs_order.end(), [&](std::size_t a, std::size_t b) {
    return ctx.point_group[static_cast<std::size_t>(problem.observations[a].point)] <
           ctx.point_group[static_cast<std::size_t>(problem.observations[b].point)];
  });
  ctx.group_obs_begin.assign(ctx.groups.size() + 1, 0);
  for (std::size_t i : ctx.obs_order) {
    const int g = ctx.point_group[static_cast<std::size_t>(problem.observations[i].point)];
    ++ctx.group_obs_begin[static_cast<std::size_t>(g) + 1];
  }
  for (std::size_t g = 0; g < ctx.groups.size(); ++g) {
    ctx.group_obs_begin[g + 1] += ctx.group_obs_begin[g];
  }

  // Static work split: contiguous group ranges with balanced record counts.
  ctx.thread_groups.clear();
  const std::size_t total = problem.observations.size();
  const std::size_t per_thread = (total + static_cast<std::size_t>(ctx.threads) - 1) /
                                 static_cast<std::size_t>(std::max(1, ctx.threads));
  std::size_t g = 0;
  while (g < ctx.groups.size()) {
    std::size_t end = g;
    const std::size_t begin_count = ctx.group_obs_begin[g];
    while (end < ctx.groups.size() &&
           (end == g || ctx.group_obs_begin[end] - begin_count < per_thread)) {
      ++end;
    }
    ctx.thread_groups.emplace_back(g, end);
    g = end;
  }

  ctx.coord_fixed.assign(static_cast<std::size_t>(n_points) * 3, 0);
  for (const auto& [point, axis] : problem.fixed_point_coords) {
    if (point >= 0 && point < n_points && axis >= 0 && axis < 3) {
      ctx.coord_fixed[static_cast<std::size_t>(point) * 3 + static_cast<std::size_t>(axis)] = 1;
    }
  }
  return ctx;
}

struct NormalEquations {
  Eigen::MatrixXd u;            // camera block, cols x cols
  Eigen::VectorXd g_camera;
  std::vector<Eigen::MatrixXd> v;        // per group, 3g x 3g
  std::vector<Eigen::MatrixXd> w;        // per group, 3g x cols
  std::vector<Eigen::VectorXd> g_point;  // per group
  double cost = 0.0;
  std::size_t invalid = 0;
  double max_abs_gradient = 0.0;
};

/// Residual-only cost of a state. Components of every valid record pass
/// through the robust loss; scale constraints stay quadratic.
double state_cost(const Context& ctx, const EngineState& state, std::size_t* invalid_out,
                  std::vector<double>* abs_components) {
  const EngineProblem& problem = *ctx.problem;
  const std::size_t n = problem.observations.size();
  std::vector<double> partial(static_cast<std::size_t>(ctx.threads), 0.0);
  std::vector<std::size_t> partial_invalid(static_cast<std::size_t>(ctx.threads), 0);
  std::vector<std::vector<double>> partial_abs;
  if (abs_components != nullptr) partial_abs.resize(static_cast<std::size_t>(ctx.threads));

  parallel_chunks(n, ctx.threads, [&](int t, std::size_t begin, std::size_t end) {
    double cost = 0.0;
    std::size_t invalid = 0;
    std::vector<double>* abs_out = abs_components != nullptr ? &partial_abs[static_cast<std::size_t>(t)] : nullptr;
    Vec2 r;
    for (std::size_t i = begin; i < end; ++i) {
      const EngineObservation& o = problem.observations[i];
      const bool ok = problem.model->evaluate(state.intrinsics,
                                              state.poses[static_cast<std::size_t>(o.view)],
                                              state.points[static_cast<std::size_t>(o.point)], i, &r);
      if (!ok) {
        r = Vec2::Constant(kInvalidResidualComponent);
        ++invalid;
      }
      cost += huber_cost(r.squaredNorm(), ctx.robust_scale);
      if (abs_out != nullptr && ok) {
        abs_out->push_back(std::abs(r.x()));
        abs_out->push_back(std::abs(r.y()));
      }
    }
    partial[static_cast<std::size_t>(t)] = cost;
    partial_invalid[static_cast<std::size_t>(t)] = invalid;
  });

  double cost = 0.0;
  std::size_t invalid = 0;
  for (int t = 0; t < ctx.threads; ++t) {
    cost += partial[static_cast<std::size_t>(t)];
    invalid += partial_invalid[static_cast<std::size_t>(t)];
    if (abs_components != nullptr) {
      abs_components->insert(abs_components->end(), partial_abs[static_cast<std::size_t>(t)].begin(),
                             partial_abs[static_cast<std::size_t>(t)].end());
    }
  }
  for (const ScaleConstraint& c : problem.scale_constraints) {
    const double dist = (state.points[static_cast<std::size_t>(c.point_a)] -
                         state.points[static_cast<std::size_t>(c.point_b)]).norm();
    const double r = c.weight / constraint_divisor(ctx.robust_scale) * (dist - c.distance);
    cost += r * r;
  }
  if (invalid_out != nullptr) *invalid_out = invalid;
  return cost;
}

NormalEquations build_normal_equations(const Context& ctx, const EngineState& state) {
  const EngineProblem& problem = *ctx.problem;
  const int nc = ctx.layout.cols;
  const int ni = ctx.layout.intrinsic_count;

  NormalEquations eq;
  eq.u = Eigen::MatrixXd::Zero(nc, nc);
  eq.g_camera = Eigen::VectorXd::Zero(nc);
  eq.v.resize(ctx.groups.size());
  eq.w.resize(ctx.groups.size());
  eq.g_point.resize(ctx.groups.size());
  for (std::size_t g = 0; g < ctx.groups.size(); ++g) {
    const int rows = 3 * static_cast<int>(ctx.groups[g].size());
    eq.v[g] = Eigen::MatrixXd::Zero(rows, rows);
    eq.w[g] = Eigen::MatrixXd::Zero(rows, nc);
    eq.g_point[g] = Eigen::VectorXd::Zero(rows);
  }

  const int n_workers = static_cast<int>(ctx.thread_groups.size());
  std::vector<Eigen::MatrixXd> u_part(static_cast<std::size_t>(n_workers));
  std::vector<Eigen::VectorXd> g_part(static_cast<std::size_t>(n_workers));
  std::vector<double> cost_part(static_cast<std::size_t>(n_workers), 0.0);
  std::vector<std::size_t> invalid_part(static_cast<std::size_t>(n_workers), 0);

  const auto worker = [&](int wi) {
    Eigen::MatrixXd& u = u_part[static_cast<std::size_t>(wi)];
    Eigen::VectorXd& gc = g_part[static_cast<std::size_t>(wi)];
    u = Eigen::MatrixXd::Zero(nc, nc);
    gc = Eigen::VectorXd::Zero(nc);
    double cost = 0.0;
    std::size_t invalid = 0;

    ResidualModel::IntrJacobian d_intr(2, ni);
    Eigen::Matrix<double, 2, 6> d_pose;
    Eigen::Matrix<double, 2, 3> d_point;
    Vec2 r;

    const auto [g_begin, g_end] = ctx.thread_groups[static_cast<std::size_t>(wi)];
    for (std::size_t g = g_begin; g < g_end; ++g) {
      Eigen::MatrixXd& v = eq.v[g];
      Eigen::MatrixXd& w = eq.w[g];
      Eigen::VectorXd& gp = eq.g_point[g];
      for (std::size_t k = ctx.group_obs_begin[g]; k < ctx.group_obs_begin[g + 1]; ++k) {
        const std::size_t i = ctx.obs_order[k];
        const EngineObservation& o = problem.observations[i];
        const bool ok = problem.model->evaluate_jacobians(
            state.intrinsics, state.poses[static_cast<std::size_t>(o.view)],
            state.points[static_cast<std::size_t>(o.point)], i, &r, &d_intr, &d_pose, &d_point);
        if (!ok) {
          cost += huber_cost(2.0 * kInvalidResidualComponent * kInvalidResidualComponent,
                             ctx.robust_scale);
          ++invalid;
          continue;
        }
        const double s = r.squaredNorm();
        cost += huber_cost(s, ctx.robust_scale);
        const double wgt = huber_weight(s, ctx.robust_scale);

        for (int c = 0; c < ni; ++c) {
          if (problem.fixed_intrinsics[static_cast<std::size_t>(c)]) d_intr.col(c).setZero();
        }
        const int off = ctx.point_offset[static_cast<std::size_t>(o.point)];
        for (int a = 0; a < 3; ++a) {
          if (ctx.coord_fixed[static_cast<std::size_t>(o.point) * 3 + static_cast<std::size_t>(a)]) {
            d_point.col(a).setZero();
          }
        }

        const int pc = ctx.layout.pose_col[static_cast<std::size_t>(o.view)];
        u.topLeftCorner(ni, ni).noalias() += wgt * d_intr.transpose() * d_intr;
        gc.head(ni).noalias() += wgt * d_intr.transpose() * r;
        if (pc >= 0) {
          u.block(0, pc, ni, 6).noalias() += wgt * d_intr.transpose() * d_pose;
          u.block(pc, pc, 6, 6).noalias() += wgt * d_pose.transpose() * d_pose;
          gc.segment<6>(pc).noalias() += wgt * d_pose.transpose() * r;
          w.block(off, pc, 3, 6).noalias() += wgt * d_point.transpose() * d_pose;
        }
        v.block<3, 3>(off, off).noalias() += wgt * d_point.transpose() * d_point;
        w.block(off, 0, 3, ni).noalias() += wgt * d_point.transpose() * d_intr;
        gp.segment<3>(off).noalias() += wgt * d_point.transpose() * r;
      }
      // Scale constraints of this group (quadratic, point-only residuals).
      for (const std::size_t ci : ctx.group_constraints[g]) {
        const ScaleConstraint& c = problem.scale_constraints[ci];
        const Vec3 diff = state.points[static_cast<std::size_t>(c.point_a)] -
                          state.points[static_cast<std::size_t>(c.point_b)];
        const double dist = diff.norm();
        const double scale = c.weight / constraint_divisor(ctx.robust_scale);
        const double rs = scale * (dist - c.distance);
        cost += rs * rs;
        if (dist < 1e-12) continue;  // direction undefined; keep the cost term only
        Vec3 ja = scale * diff / dist;
        Vec3 jb = -ja;
        const int oa = ctx.point_offset[static_cast<std::size_t>(c.point_a)];
        const int ob = ctx.point_offset[static_cast<std::size_t>(c.point_b)];
        for (int a = 0; a < 3; ++a) {
          if (ctx.coord_fixed[static_cast<std::size_t>(c.point_a) * 3 + static_cast<std::size_t>(a)]) ja[a] = 0.0;
          if (ctx.coord_fixed[static_cast<std::size_t>(c.point_b) * 3 + static_cast<std::size_t>(a)]) jb[a] = 0.0;
        }
        v.block<3, 3>(oa, oa).noalias() += ja * ja.transpose();
        v.block<3, 3>(ob, ob).noalias() += jb * jb.transpose();
        v.block<3, 3>(oa, ob).noalias() += ja * jb.transpose();
        v.block<3, 3>(ob, oa).noalias() += jb * ja.transpose();
        gp.segment<3>(oa).noalias() += ja * rs;
        gp.segment<3>(ob).noalias() += jb * rs;
      }
    }
    cost_part[static_cast<std::size_t>(wi)] = cost;
    invalid_part[static_cast<std::size_t>(wi)] = invalid;
  };

  parallel_chunks(static_cast<std::size_t>(n_workers), std::min(ctx.threads, n_workers),
                  [&](int, std::size_t begin, std::size_t end) {
                    for (std::size_t wi = begin; wi < end; ++wi) worker(static_cast<int>(wi));
                  });

  for (int wi = 0; wi < n_workers; ++wi) {
    eq.u += u_part[static_cast<std::size_t>(wi)];
    eq.g_camera += g_part[static_cast<std::size_t>(wi)];
    eq.cost += cost_part[static_cast<std::size_t>(wi)];
    eq.invalid += invalid_part[static_cast<std::size_t>(wi)];
  }
  // Only the upper-left rectangle of each (intr, pose) pair was filled;
  // mirror the camera block.
  eq.u = eq.u.selfadjointView<Eigen::Upper>();

  eq.max_abs_gradient = eq.g_camera.cwiseAbs().maxCoeff();
  for (const Eigen::VectorXd& gp : eq.g_point) {
    if (gp.size() > 0) eq.max_abs_gradient = std::max(eq.max_abs_gradient, gp.cwiseAbs().maxCoeff());
  }
  return eq;
}

struct SchurSolution {
  bool singular = false;
  Eigen::VectorXd camera_delta;
  std::vector<Eigen::VectorXd> point_delta;  // per group
};

/// Damped step from assembled normal equations: Marquardt damping on both
/// blocks, point blocks eliminated per group, dense reduced solve.
SchurSolution solve_damped(const Context& ctx, const NormalEquations& eq, double lambda) {
  SchurSolution out;
  const int nc = ctx.layout.cols;
  const int ni = ctx.layout.intrinsic_count;

  Eigen::MatrixXd s = eq.u;
  Eigen::VectorXd rhs = -eq.g_camera;
  for (int i = 0; i < nc; ++i) {
    if (i < ni && ctx.problem->fixed_intrinsics[static_cast<std::size_t>(i)]) {
      s(i, i) = 1.0;  // pinned column: unit diagonal, zero elsewhere by construction
    } else {
      s(i, i) += lambda * eq.u(i, i);
      if (s(i, i) == 0.0) s(i, i) = 1.0;  // parameter without any support
    }
  }

  std::vector<Eigen::LDLT<Eigen::MatrixXd>> v_fact(ctx.groups.size());
  out.point_delta.resize(ctx.groups.size());
  for (std::size_t g = 0; g < ctx.groups.size(); ++g) {
    Eigen::MatrixXd vd = eq.v[g];
    const int rows = static_cast<int>(vd.rows());
    for (int i = 0; i < rows; ++i) {
      const int point = ctx.groups[g][static_cast<std::size_t>(i / 3)];
      const int axis = i % 3;
      if (ctx.coord_fixed[static_cast<std::size_t>(point) * 3 + static_cast<std::size_t>(axis)]) {
        vd(i, i) = 1.0;
      } else {
        vd(i, i) += lambda * eq.v[g](i, i);
        if (vd(i, i) == 0.0) vd(i, i) = 1.0;
      }
    }
    v_fact[g].compute(vd);
    if (v_fact[g].info() != Eigen::Success) {
      out.singular = true;
      return out;
    }
    const Eigen::MatrixXd v_inv_w = v_fact[g].solve(eq.w[g]);
    s.noalias() -= eq.w[g].transpose() * v_inv_w;
    rhs.noalias() += eq.w[g].transpose() * v_fact[g].solve(eq.g_point[g]);
  }

  // Jacobi scaling before the dense solve: intrinsic magnitudes differ by
  // many orders (distortion coefficients vs focal length).
  Eigen::VectorXd d = s.diagonal().cwiseAbs().cwiseSqrt();
  for (int i = 0; i < nc; ++i) {
    if (d[i] == 0.0 || !std::isfinite(d[i])) d[i] = 1.0;
  }
  const Eigen::VectorXd d_inv = d.cwiseInverse();
  Eigen::MatrixXd s_scaled = d_inv.asDiagonal() * s * d_inv.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> fact(s_scaled);
  if (fact.info() != Eigen::Success || !fact.isPositive()) {
    out.singular = true;
    return out;
  }
  out.camera_delta = d_inv.asDiagonal() * fact.solve(d_inv.asDiagonal() * rhs);
  if (!out.camera_delta.allFinite()) {
    out.singular = true;
    return out;
  }

  for (std::size_t g = 0; g < ctx.groups.size(); ++g) {
    out.point_delta[g] = -v_fact[g].solve(eq.g_point[g] + eq.w[g] * out.camera_delta);
    if (!out.point_delta[g].allFinite()) {
      out.singular = true;
      return out;
    }
  }
  return out;
}

EngineState apply_step(const Context& ctx, const EngineState& state, const SchurSolution& step) {
  EngineState next = state;
  const int ni = ctx.layout.intrinsic_count;
  for (int i = 0; i < ni; ++i) {
    next.intrinsics[i] += step.camera_delta[i];
  }
  for (std::size_t j = 0; j < state.poses.size(); ++j) {
    const int pc = ctx.layout.pose_col[j];
    if (pc < 0) continue;
    const Vec3 omega = step.camera_delta.segment<3>(pc);
    const Vec3 dt = step.camera_delta.segment<3>(pc + 3);
    next.poses[j].rotation = (quaternion_exp(omega) * state.poses[j].rotation).normalized();
    next.poses[j].translation = state.poses[j].translation + dt;
  }
  for (std::size_t g = 0; g < ctx.groups.size(); ++g) {
    for (std::size_t k = 0; k < ctx.groups[g].size(); ++k) {
      next.points[static_cast<std::size_t>(ctx.groups[g][k])] +=
          step.point_delta[g].segment<3>(static_cast<int>(3 * k));
    }
  }
  return next;
}

double step_norm(const SchurSolution& step) {
  double s = step.camera_delta.squaredNorm();
  for (const Eigen::VectorXd& p : step.point_delta) s += p.squaredNorm();
  return std::sqrt(s);
}

double state_norm(const Context& ctx, const EngineState& state) {
  double s = state.intrinsics.squaredNorm();
  for (std::size_t j = 0; j < state.poses.size(); ++j) {
    if (ctx.layout.pose_col[j] >= 0) s += state.poses[j].translation.squaredNorm() + 1.0;
  }
  for (const Vec3& p : state.points) s += p.squaredNorm();
  return std::sqrt(s);
}

}  // namespace

CameraLayout camera_layout(const EngineProblem& problem) {
  CameraLayout layout;
  layout.intrinsic_count = problem.model->intrinsic_count();
  layout.pose_col.assign(problem.fixed_poses.size(), -1);
  int col = layout.intrinsic_count;
  for (std::size_t j = 0; j < problem.fixed_poses.size(); ++j) {
    if (!problem.fixed_poses[j]) {
      layout.pose_col[j] = col;
      col += 6;
    }
  }
  layout.cols = col;
  return layout;
}

StepResult compute_step(const EngineProblem& problem, const EngineState& state, double lambda,
                        double robust_scale, int threads) {
  const Context ctx = build_context(problem, robust_scale, threads);
  const NormalEquations eq = build_normal_equations(ctx, state);
  const SchurSolution sol = solve_damped(ctx, eq, lambda);
  StepResult out;
  out.singular = sol.singular;
  if (sol.singular) return out;
  out.camera_delta = sol.camera_delta;
  out.point_deltas.assign(static_cast<std::size_t>(ctx.n_points), Vec3::Zero());
  for (std::size_t g = 0; g < ctx.groups.size(); ++g) {
    for (std::size_t k = 0; k < ctx.groups[g].size(); ++k) {
      out.point_deltas[static_cast<std::size_t>(ctx.groups[g][k])] =
          sol.point_delta[g].segment<3>(static_cast<int>(3 * k));
    }
  }
  return out;
}

CostStats evaluate_cost(const EngineProblem& problem, const EngineState& state,
                        double robust_scale, int threads) {
  const Context ctx = build_context(problem, robust_scale, threads);
  CostStats stats;
  std::vector<double> abs_components;
  stats.cost = state_cost(ctx, state, &stats.invalid_count, &abs_components);
  stats.residual_count = 2 * problem.observations.size() + problem.scale_constraints.size();
  if (!abs_components.empty()) {
    stats.mean_abs_px = std::accumulate(abs_components.begin(), abs_components.end(), 0.0) /
                        static_cast<double>(abs_components.size());
    std::vector<double> sorted = abs_components;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    stats.median_abs_px = sorted.size() % 2 == 1
                              ? sorted[mid]
                              : 0.5 * (sorted[mid - 1] + sorted[mid]);
    stats.max_abs_px = sorted.back();
  }
  return stats;
}

EngineResult solve(const EngineProblem& problem, EngineState initial, const SolveOptions& options) {
  const Context ctx = build_context(problem, options.robust_scale, options.threads);

  EngineResult result;
  result.state = std::move(initial);
  SolveReport& report = result.report;

  std::size_t invalid = 0;
  double cost = state_cost(ctx, result.state, &invalid, nullptr);
  report.initial_cost = cost;

  double lambda = options.initial_lambda;
  int reject_streak = 0;
  int plateau_streak = 0;  // rejected steps that tie the cost at double precision
  bool done = false;

  for (int iter = 0; iter < options.max_iterations && !done; ++iter) {
    const NormalEquations eq = build_normal_equations(ctx, result.state);
    if (eq.max_abs_gradient <= options.gradient_tol) {
      report.termination = Termination::kGradientTol;
      done = true;
      break;
    }

    bool accepted = false;
    while (!accepted) {
      const SchurSolution sol = solve_damped(ctx, eq, lambda);
      if (sol.singular) {
        if (lambda >= options.max_lambda) {
          report.termination = Termination::kSingularSystem;
          done = true;
          break;
        }
        report.steps.push_back({cost, lambda, 0.0, false});
        lambda *= options.lambda_reject_mul;
        if (++reject_streak >= options.max_reject_streak) {
          report.termination = Termination::kDiverged;
          done = true;
          break;
        }
        continue;
      }
      const EngineState candidate = apply_step(ctx, result.state, sol);
      double candidate_cost = std::numeric_limits<double>::infinity();
      if (problem.model->state_valid(candidate.intrinsics)) {
        candidate_cost = state_cost(ctx, candidate, nullptr, nullptr);
      }
      const double norm = step_norm(sol);
      if (candidate_cost < cost) {
        result.state = candidate;
        cost = candidate_cost;
        report.steps.push_back({cost, lambda, norm, true});
        ++report.iterations;
        lambda = std::max(lambda / options.lambda_accept_div, 1e-18);
        reject_streak = 0;
        accepted = true;
        if (norm <= options.param_tol * (state_norm(ctx, result.state) + options.param_tol)) {
          report.termination = Termination::kParamTol;
          done = true;
        }
      } else {
        report.steps.push_back({candidate_cost, lambda, norm, false});
        // A rejected step this small means the iterate cannot improve at
        // double precision: converged, not diverged.
        if (norm <= options.param_tol * (state_norm(ctx, result.state) + options.param_tol)) {
          report.termination = Termination::kParamTol;
          done = true;
          break;
        }
        if (std::isfinite(candidate_cost) && candidate_cost - cost <= 1e-12 * (1.0 + cost)) {
          // The candidate ties the cost at double precision: the iterate sits
          // on the cost floor, where strict decrease cannot be resolved.
          if (++plateau_streak >= 8) {
            report.termination = Termination::kParamTol;
            done = true;
            break;
          }
        } else {
          plateau_streak = 0;
        }
        if (lambda >= options.max_lambda) {
          report.termination = Termination::kSingularSystem;
          done = true;
          break;
        }
        lambda *= options.lambda_reject_mul;
        if (++reject_streak >= options.max_reject_streak) {
          report.termination = Termination::kDiverged;
          done = true;
          break;
        }
      }
    }
  }
  if (!done) report.termination = Termination::kMaxIterations;

  const CostStats final_stats =
      evaluate_cost(problem, result.state, options.robust_scale, options.threads);
  report.final_cost = final_stats.cost;
  report.final_mean_abs_residual_px = final_stats.mean_abs_px;
  report.final_median_abs_residual_px = final_stats.median_abs_px;
  report.residual_count = final_stats.residual_count;
  report.invalid_residuals = final_stats.invalid_count;

  if (options.compute_covariance) {
    const NormalEquations eq = build_normal_equations(ctx, result.state);
    Eigen::MatrixXd s = eq.u;
    const int nc = ctx.layout.cols;
    const int ni = ctx.layout.intrinsic_count;
    for (int i = 0; i < nc; ++i) {
      if (i < ni && problem.fixed_intrinsics[static_cast<std::size_t>(i)]) {
        s(i, i) = 1.0;
      } else {
        s(i, i) += lambda * eq.u(i, i);
        if (s(i, i) == 0.0) s(i, i) = 1.0;
      }
    }
    for (std::size_t g = 0; g < ctx.groups.size(); ++g) {
      Eigen::MatrixXd vd = eq.v[g];
      for (int i = 0; i < vd.rows(); ++i) {
        vd(i, i) += lambda * eq.v[g](i, i);
        if (vd(i, i) == 0.0) vd(i, i) = 1.0;
      }
      Eigen::LDLT<Eigen::MatrixXd> f(vd);
      if (f.info() != Eigen::Success) continue;
      s.noalias() -= eq.w[g].transpose() * f.solve(eq.w[g]);
    }
    Eigen::LDLT<Eigen::MatrixXd> f(s);
    if (f.info() == Eigen::Success) {
      report.covariance_diagonal =
          f.solve(Eigen::MatrixXd::Identity(nc, nc)).diagonal();
    }
  }
  return result;
}

}  // namespace engine
}  // namespace ba
}  // namespace plencal
