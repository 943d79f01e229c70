#pragma once

// Semantic direct image alignment: residuals r = sqrt(-2 log p) of the
// rendered class at warped edge pixels, analytic Jacobians, and a damped
// Gauss-Newton solve running coarse-to-fine over the pyramid.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geom.hpp"
#include "semloc/renderer.hpp"
#include "semloc/semantics.hpp"

namespace semloc {

struct AlignmentConfig
{
  int levels_total = 6;
  int levels_used = 3;
  int iters_per_level = 10;
  double prob_floor = 1e-6;
  double early_exit_step = 1e-8;
  double damping = 1e-6;
  int min_residuals = 6;
  /// Step halvings tried before a level gives up on a non-decreasing step.
  int max_halvings = 8;
  /// A level counts as converged when its last step is below this norm.
  double converged_step = 1e-2;
  /// Smallest / largest eigenvalue of J^T J below which the normal
  /// equations are treated as rank deficient.
  double degeneracy_ratio = 1e-7;
  /// Largest finest-level mean squared residual a converged result may
  /// have; rejects settled but wrong local minima. Finer levels sample more
  /// mixed boundary pixels, so the bound grows per level below level 3.
  double max_mean_cost = 1.45;
  double max_mean_cost_per_level = 0.25;
  double z_min = kDefaultZMin;

  int finest_level() const { return levels_total - levels_used; }
  double mean_cost_bound(int level) const { return max_mean_cost + max_mean_cost_per_level * std::max(0, 3 - level); }
  int coarsest_level() const { return levels_total - 1; }

  void validate(int num_classes) const
  {
    if (levels_total < 1 || levels_used < 1 || levels_used > levels_total)
      throw InvalidArgument("need 1 <= levels_used <= levels_total");
    if (iters_per_level < 1) throw InvalidArgument("iters_per_level must be positive");
    if (!(prob_floor > 0.0) || prob_floor > 1.0 / num_classes)
      throw InvalidArgument("prob_floor must lie in (0, 1/N]");
    if (damping < 0.0) throw InvalidArgument("damping must be non-negative");
  }
};

/// One level of the rendered side: top-left subsampled view, its edge
/// pixels, and the intrinsics matching that subsampling.
struct ViewLevel
{
  RenderedView view;
  std::vector<EdgePixel> edges;
  CameraIntrinsics intrinsics;
};

struct AlignmentProblem
{
  std::vector<ViewLevel> view_pyramid;
  LogitsPyramid frame_pyramid;
  std::vector<CameraIntrinsics> frame_intrinsics;
  Pose initial_rel;

  int levels() const { return static_cast<int>(view_pyramid.size()); }

  void validate() const
  {
    if (view_pyramid.size() != frame_pyramid.levels.size() || frame_intrinsics.size() != view_pyramid.size())
      throw DimensionError("view and frame pyramids differ in level count");
    for (size_t l = 0; l < view_pyramid.size(); ++l) {
      const auto& k = view_pyramid[l].intrinsics;
      const auto& kf = frame_intrinsics[l];
      if (k.width != kf.width || k.height != kf.height)
        throw DimensionError("level " + std::to_string(l) + " dimensions differ");
    }
  }
};

/// Builds the view pyramid (top-left subsampling) and edge pixels per level.
/// Levels finer than `keep_from` keep only their intrinsics.
inline std::vector<ViewLevel> make_view_pyramid(const RenderedView& view, const CameraIntrinsics& k, int levels,
                                                int keep_from = 0, int background_id = 0)
{
  auto views = build_view_pyramid(view, levels);
  std::vector<ViewLevel> out(static_cast<size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    auto& vl = out[static_cast<size_t>(l)];
    vl.intrinsics = k.top_left_level(l);
    if (l >= keep_from) {
      vl.edges = extract_edge_pixels(views[static_cast<size_t>(l)], background_id);
      vl.view = std::move(views[static_cast<size_t>(l)]);
    }
  }
  return out;
}

inline std::vector<CameraIntrinsics> make_frame_intrinsics(const CameraIntrinsics& k, int levels)
{
  std::vector<CameraIntrinsics> out;
  for (int l = 0; l < levels; ++l) out.push_back(k.mean_level(l));
  return out;
}

inline AlignmentProblem make_alignment_problem(const RenderedView& view, const LogitsImage& frame_logits,
                                               const CameraIntrinsics& k, const AlignmentConfig& cfg,
                                               const Pose& initial_rel = Pose::identity(), int background_id = 0)
{
  if (view.width() != frame_logits.width() || view.height() != frame_logits.height())
    throw DimensionError("rendered view and frame differ in size");
  AlignmentProblem p;
  p.view_pyramid = make_view_pyramid(view, k, cfg.levels_total, cfg.finest_level(), background_id);
  p.frame_pyramid = build_pyramid(frame_logits, cfg.levels_total);
  p.frame_pyramid.release_below(cfg.finest_level());
  p.frame_intrinsics = make_frame_intrinsics(k, cfg.levels_total);
  p.initial_rel = initial_rel;
  return p;
}

inline double semantic_residual(double logprob) { return std::sqrt(std::max(0.0, -2.0 * logprob)); }

enum class DropReason { None, BehindCamera, OutOfBounds, ProbabilityFloor };

struct ResidualRow
{
  DropReason dropped = DropReason::None;
  double r = 0.0;
  double logprob = 0.0;
  Vector6d J = Vector6d::Zero();  // dr / d delta for rel <- exp(delta) * rel

  bool kept() const { return dropped == DropReason::None; }
};

inline ResidualRow residual_row(const ViewLevel& view_level, const LogitsImage& frame,
                                const CameraIntrinsics& frame_k, const EdgePixel& e, const Pose& rel,
                                const AlignmentConfig& cfg)
{
  ResidualRow row;
  const Vector3d p = rel * unproject(view_level.intrinsics, Vector2d(e.x, e.y), e.depth);
  const auto uv = try_project(frame_k, p, cfg.z_min);
  if (!uv) {
    row.dropped = DropReason::BehindCamera;
    return row;
  }
  const auto s = try_sample_logprob(frame, *uv, e.class_id);
  if (!s) {
    row.dropped = DropReason::OutOfBounds;
    return row;
  }
  if (s->logprob <= std::log(cfg.prob_floor)) {
    row.dropped = DropReason::ProbabilityFloor;
    row.logprob = std::log(cfg.prob_floor);
    row.r = semantic_residual(row.logprob);
    return row;
  }
  row.logprob = s->logprob;
  row.r = semantic_residual(s->logprob);
  const Matrix26d duv = point_projection_jacobian(frame_k, p);
  row.J = (-1.0 / std::max(row.r, 1e-9)) * (duv.transpose() * s->gradient);
  return row;
}

inline ResidualRow residual_row(const AlignmentProblem& problem, int level, const EdgePixel& e, const Pose& rel,
                                const AlignmentConfig& cfg)
{
  const auto l = static_cast<size_t>(level);
  return residual_row(problem.view_pyramid.at(l), problem.frame_pyramid.level(level),
                      problem.frame_intrinsics.at(l), e, rel, cfg);
}

/// Gauss-Newton normal equations over all edge pixels of one level.
/// `cost` sums r^2 over kept rows only.
struct NormalEquations
{
  Matrix6d H = Matrix6d::Zero();
  Vector6d g = Vector6d::Zero();
  double cost = 0.0;
  int used = 0;
  int dropped = 0;

  /// Mean squared residual over kept rows; the quantity steps must not increase.
  double mean_cost() const { return used > 0 ? cost / used : 0.0; }
};

inline NormalEquations accumulate_level(const ViewLevel& view_level, const LogitsImage& frame,
                                        const CameraIntrinsics& frame_k, const Pose& rel,
                                        const AlignmentConfig& cfg)
{
  NormalEquations ne;
  for (const auto& e : view_level.edges) {
    const ResidualRow row = residual_row(view_level, frame, frame_k, e, rel, cfg);
    if (!row.kept()) {
      ++ne.dropped;
      continue;
    }
    ++ne.used;
    ne.cost += row.r * row.r;
    ne.H.selfadjointView<Eigen::Upper>().rankUpdate(row.J);
    ne.g += row.J * row.r;
  }
  ne.H = ne.H.selfadjointView<Eigen::Upper>();
  return ne;
}

/// Ratio of smallest to largest eigenvalue of a symmetric PSD matrix.
inline double eigen_ratio(const Matrix6d& H)
{
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(H, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (!(ev(5) > 0.0)) return 0.0;
  return std::max(0.0, ev(0)) / ev(5);
}

/// Solves (H + damping I) d = g; throws SolverFailure on non-finite output.
template <typename Mat, typename Vec>
inline Eigen::VectorXd solve_damped(const Mat& H, const Vec& g, double damping)
{
  Eigen::MatrixXd A = H;
  A.diagonal().array() += damping;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  Eigen::VectorXd x = ldlt.solve(Eigen::VectorXd(g));
  if (ldlt.info() != Eigen::Success || !x.allFinite()) throw SolverFailure("normal equations not solvable");
  return x;
}

inline Vector6d solve_damped6(const Matrix6d& H, const Vector6d& g, double damping)
{
  Matrix6d A = H;
  A.diagonal().array() += damping;
  Eigen::LDLT<Matrix6d> ldlt(A);
  Vector6d x = ldlt.solve(g);
  if (ldlt.info() != Eigen::Success || !x.allFinite()) throw SolverFailure("normal equations not solvable");
  return x;
}

struct LevelReport
{
  int level = 0;
  Pose rel;
  std::vector<double> costs;  // mean cost before each iteration, plus the final one
  double last_step = 0.0;     // norm of the last applied increment
  int iterations = 0;
  int used = 0;
  int dropped = 0;
  double eigen_ratio = 0.0;
  bool early_exit = false;
  bool stalled = false;  // no step length reduced the cost
  bool well_conditioned = false;
};

/// Damped Gauss-Newton on one level. A step that raises the mean cost is
/// halved until it does not; if no halving helps the level stops.
inline LevelReport gauss_newton_level(const AlignmentProblem& problem, int level, const Pose& rel0,
                                      const AlignmentConfig& cfg)
{
  const auto l = static_cast<size_t>(level);
  const ViewLevel& vl = problem.view_pyramid.at(l);
  const LogitsImage& frame = problem.frame_pyramid.level(level);
  const CameraIntrinsics& fk = problem.frame_intrinsics.at(l);

  LevelReport rep;
  rep.level = level;
  rep.rel = rel0;
  NormalEquations ne = accumulate_level(vl, frame, fk, rep.rel, cfg);
  if (ne.used < cfg.min_residuals) {
    throw DegenerateLevel("level " + std::to_string(level) + " has " + std::to_string(ne.used) +
                          " usable residuals");
  }
  for (int it = 0; it < cfg.iters_per_level; ++it) {
    rep.costs.push_back(ne.mean_cost());
    rep.eigen_ratio = eigen_ratio(ne.H);
    const Vector6d step = solve_damped6(ne.H, ne.g, cfg.damping);
    rep.iterations = it + 1;

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= cfg.max_halvings; ++h, scale *= 0.5) {
      const Pose cand = exp_map(Twist(Vector6d(-scale * step))) * rep.rel;
      NormalEquations cne = accumulate_level(vl, frame, fk, cand, cfg);
      if (cne.used >= cfg.min_residuals && cne.mean_cost() <= ne.mean_cost()) {
        rep.rel = cand;
        ne = std::move(cne);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      rep.stalled = true;
      rep.last_step = 0.0;
      break;
    }
    rep.last_step = scale * step.norm();
    if (rep.last_step < cfg.early_exit_step) {
      rep.early_exit = true;
      break;
    }
  }
  rep.costs.push_back(ne.mean_cost());
  rep.used = ne.used;
  rep.dropped = ne.dropped;
  rep.well_conditioned = rep.eigen_ratio >= cfg.degeneracy_ratio;
  return rep;
}

struct AlignmentResult
{
  Pose rel;
  std::vector<LevelReport> levels;  // coarsest first
  std::vector<double> level_final_cost;
  int residuals_used = 0;
  int residuals_dropped = 0;
  bool converged = false;
  std::vector<std::string> errors;
};

inline AlignmentResult align_multiscale(const AlignmentProblem& problem, const AlignmentConfig& cfg)
{
  problem.validate();
  if (problem.levels() != cfg.levels_total) throw DimensionError("problem level count differs from config");
  cfg.validate(problem.frame_pyramid.levels.empty() ? 2 : problem.frame_pyramid.level(cfg.finest_level()).channels());

  AlignmentResult res;
  res.rel = problem.initial_rel;
  bool ok = true;
  for (int level = cfg.coarsest_level(); level >= cfg.finest_level(); --level) {
    try {
      LevelReport rep = gauss_newton_level(problem, level, res.rel, cfg);
      res.rel = rep.rel;
      res.level_final_cost.push_back(rep.costs.back());
      res.levels.push_back(std::move(rep));
    } catch (const DegenerateLevel& e) {
      ok = false;
      res.errors.emplace_back(e.what());
    } catch (const SolverFailure& e) {
      ok = false;
      res.errors.emplace_back(e.what());
    }
  }
  if (!res.levels.empty() && res.levels.back().level == cfg.finest_level()) {
    const auto& fin = res.levels.back();
    res.residuals_used = fin.used;
    res.residuals_dropped = fin.dropped;
    res.converged = ok && fin.well_conditioned && (fin.stalled || fin.last_step < cfg.converged_step);

    // Coarse levels can pull the estimate somewhere the finest level likes
    // less than the start. Then refine the start at the finest level alone;
    // the line search keeps that from raising the cost.
    const auto l = static_cast<size_t>(cfg.finest_level());
    const NormalEquations start =
        accumulate_level(problem.view_pyramid[l], problem.frame_pyramid.level(cfg.finest_level()),
                         problem.frame_intrinsics[l], problem.initial_rel, cfg);
    if (start.used >= cfg.min_residuals && start.mean_cost() < fin.costs.back()) {
      res.errors.emplace_back("coarse levels raised the finest-level cost; refined the initial estimate instead");
      try {
        LevelReport rep = gauss_newton_level(problem, cfg.finest_level(), problem.initial_rel, cfg);
        res.rel = rep.rel;
        res.residuals_used = rep.used;
        res.residuals_dropped = rep.dropped;
        res.converged = rep.well_conditioned && (rep.stalled || rep.last_step < cfg.converged_step);
        res.level_final_cost.push_back(rep.costs.back());
        res.levels.push_back(std::move(rep));
      } catch (const std::exception& e) {
        res.rel = problem.initial_rel;
        res.converged = false;
        res.errors.emplace_back(e.what());
      }
    }
    if (res.converged && !(res.levels.back().costs.back() <= cfg.mean_cost_bound(cfg.finest_level()))) {
      res.converged = false;
      res.errors.emplace_back("finest-level mean cost above the fit bound");
    }
  }
  return res;
}

}  // namespace semloc
