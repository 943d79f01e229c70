#pragma once

// Keyframe window with joint semantic + odometry optimization, and the
// frame-by-frame localization engine built on it.

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "semloc/align.hpp"
#include "semloc/errors.hpp"
#include "semloc/geom.hpp"
#include "semloc/mesh.hpp"
#include "semloc/parallel.hpp"
#include "semloc/renderer.hpp"
#include "semloc/semantics.hpp"

namespace semloc {

enum class SemanticNormalization { raw, per_pixel_mean };

inline Vector6d default_odometry_weight()
{
  Vector6d w;
  w << 10.0, 10.0, 10.0, 50.0, 50.0, 50.0;
  return w;
}

/// Measured motion from keyframe k to keyframe k + 1 (k_from_k1) and the
/// diagonal of W_O.
struct OdometryMeasurement
{
  Pose rel;
  Vector6d weight = default_odometry_weight();
};

struct WindowConfig
{
  int window_size = 8;
  double lambda = 0.65;
  int keyframe_stride = 5;
  SemanticNormalization normalization = SemanticNormalization::per_pixel_mean;
  Vector6d odom_weight = default_odometry_weight();
  int lost_after = 3;
  /// Keyframes allowed before the first converged one; tracking counts as
  /// lost only once it has been acquired or this runs out.
  int max_acquisition_keyframes = 40;
  double p_pred = 0.9;
  AlignmentConfig align;
  RenderConfig render;
  int threads = 1;

  void validate(int num_classes) const
  {
    if (window_size < 2) throw InvalidArgument("window_size must be at least 2");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("lambda must lie in [0, 1]");
    if (keyframe_stride < 1) throw InvalidArgument("keyframe_stride must be positive");
    if (!((odom_weight.array() > 0.0).all())) throw InvalidArgument("odometry weights must be positive");
    if (lost_after < 1 || max_acquisition_keyframes < 1)
      throw InvalidArgument("lost_after and max_acquisition_keyframes must be positive");
    if (threads < 1) throw InvalidArgument("threads must be positive");
    align.validate(num_classes);
  }
};

struct Keyframe
{
  int id = 0;
  Pose render_pose;  // map_from_render
  AlignmentProblem problem;
  Pose rel;  // frame_from_render, exp of the keyframe twist
  bool converged = false;

  Twist twist() const { return log_map(rel); }
  /// Map pose of the camera frame: render_pose * rel^-1.
  Pose estimate() const { return render_pose * inverse(rel); }
};

inline Vector6d odometry_residual(const Pose& est_k, const Pose& est_k1, const OdometryMeasurement& meas)
{
  return meas.weight.cwiseProduct(boxminus(meas.rel, inverse(est_k) * est_k1).coords);
}

/// Weighted odometry residual and its Jacobians with respect to left
/// increments of the two keyframes' rel (rel <- exp(d) * rel).
struct OdometryLinearization
{
  Vector6d r = Vector6d::Zero();
  Matrix6d J_k = Matrix6d::Zero();
  Matrix6d J_k1 = Matrix6d::Zero();
};

inline OdometryLinearization linearize_odometry(const Pose& render_k, const Pose& rel_k, const Pose& render_k1,
                                                const Pose& rel_k1, const OdometryMeasurement& meas)
{
  const Pose est_k = render_k * inverse(rel_k);
  const Pose est_k1 = render_k1 * inverse(rel_k1);
  const Pose E = inverse(est_k) * est_k1;
  const Twist e = log_map(inverse(E) * meas.rel);
  const auto W = meas.weight.asDiagonal();
  OdometryLinearization out;
  out.r = W * e.coords;
  out.J_k1 = W * left_jacobian_inverse(e);
  out.J_k = -(W * (right_jacobian_inverse(e) * adjoint(inverse(meas.rel))));
  return out;
}

struct WindowLevelReport
{
  int level = 0;
  std::vector<double> costs;  // total cost before each iteration, plus the final one
  int iterations = 0;
  bool stalled = false;
  bool early_exit = false;
};

struct WindowReport
{
  double cost_before = 0.0;  // total cost at the finest level
  double cost_after = 0.0;
  std::vector<bool> converged;
  std::vector<double> fit_cost;   // finest-level mean squared semantic residual per keyframe
  std::vector<double> step_norm;  // last applied increment per keyframe at the finest level
  std::vector<WindowLevelReport> levels;
  std::vector<std::string> errors;
  bool reverted = false;  // the result raised the cost and was discarded
};

namespace detail {

struct WindowLinearization
{
  std::vector<NormalEquations> sem;
  std::vector<double> sem_weight;  // 0 where a keyframe has too few residuals
  std::vector<OdometryLinearization> odo;
  double cost = 0.0;
};

inline WindowLinearization linearize_window(const std::vector<Keyframe>& window, const std::vector<Pose>& rels,
                                            const std::vector<OdometryMeasurement>& odom, const WindowConfig& cfg,
                                            int level)
{
  const size_t n = window.size();
  const auto l = static_cast<size_t>(level);
  WindowLinearization lin;
  lin.sem.resize(n);
  lin.sem_weight.assign(n, 0.0);
  if (cfg.lambda > 0.0) {
    parallel_for(n, cfg.threads, [&](size_t k) {
      const auto& p = window[k].problem;
      if (p.view_pyramid.at(l).edges.empty()) return;
      lin.sem[k] = accumulate_level(p.view_pyramid[l], p.frame_pyramid.level(level), p.frame_intrinsics.at(l),
                                    rels[k], cfg.align);
    });
  }
  for (size_t k = 0; k < n; ++k) {
    if (lin.sem[k].used < cfg.align.min_residuals) continue;
    lin.sem_weight[k] = cfg.normalization == SemanticNormalization::per_pixel_mean ? 1.0 / lin.sem[k].used : 1.0;
    lin.cost += cfg.lambda * lin.sem_weight[k] * lin.sem[k].cost;
  }
  if (cfg.lambda < 1.0) {
    for (size_t k = 0; k + 1 < n; ++k) {
      lin.odo.push_back(linearize_odometry(window[k].render_pose, rels[k], window[k + 1].render_pose, rels[k + 1],
                                           odom[k]));
      lin.cost += (1.0 - cfg.lambda) * lin.odo.back().r.squaredNorm();
    }
  }
  return lin;
}

inline double window_cost(const std::vector<Keyframe>& window, const std::vector<Pose>& rels,
                          const std::vector<OdometryMeasurement>& odom, const WindowConfig& cfg, int level)
{
  return linearize_window(window, rels, odom, cfg, level).cost;
}

struct JointLevelOutcome
{
  WindowLevelReport report;
  std::vector<double> step_norm;  // last applied per-keyframe increment
  std::vector<double> eigen_ratio;
  std::vector<bool> semantic_ok;
};

/// One pyramid level of the joint damped Gauss-Newton over all free keyframes.
inline JointLevelOutcome optimize_window_level(const std::vector<Keyframe>& window, std::vector<Pose>& rels,
                                               const std::vector<OdometryMeasurement>& odom,
                                               const WindowConfig& cfg, int level)
{
  const size_t n = window.size();
  const double lam = cfg.lambda;
  const bool linked = lam < 1.0 && n > 1;
  JointLevelOutcome out;
  out.report.level = level;
  out.step_norm.assign(n, 0.0);
  out.eigen_ratio.assign(n, 0.0);
  out.semantic_ok.assign(n, false);

  WindowLinearization lin = linearize_window(window, rels, odom, cfg, level);

  // Free keyframes carry information; with no semantic anchor anywhere the
  // first keyframe is held fixed to remove the gauge freedom.
  std::vector<int> index(n, -1);
  bool anchored = false;
  for (size_t k = 0; k < n; ++k) {
    out.semantic_ok[k] = lam > 0.0 && lin.sem_weight[k] > 0.0;
    anchored = anchored || out.semantic_ok[k];
  }
  int free_count = 0;
  for (size_t k = 0; k < n; ++k) {
    const bool informed = out.semantic_ok[k] || linked;
    const bool gauge = !anchored && k == 0;
    if (informed && !gauge) index[k] = free_count++;
  }
  if (free_count == 0) {
    out.report.costs.push_back(lin.cost);
    return out;
  }

  const double damping = cfg.align.damping;
  for (int it = 0; it < cfg.align.iters_per_level; ++it) {
    out.report.costs.push_back(lin.cost);
    out.report.iterations = it + 1;
    const auto dim = static_cast<Eigen::Index>(6 * free_count);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd damp = Eigen::VectorXd::Zero(dim);
    for (size_t k = 0; k < n; ++k) {
      if (index[k] < 0) continue;
      const Eigen::Index o = 6 * index[k];
      const double w = lin.sem_weight[k];
      if (out.semantic_ok[k] && w > 0.0) {
        H.block<6, 6>(o, o) += lam * w * lin.sem[k].H;
        g.segment<6>(o) += lam * w * lin.sem[k].g;
        out.eigen_ratio[k] = eigen_ratio(lin.sem[k].H);
      }
      damp.segment<6>(o).array() +=
          damping * ((out.semantic_ok[k] ? lam * w : 0.0) + (linked ? 1.0 - lam : 0.0));
    }
    for (size_t j = 0; j < lin.odo.size(); ++j) {
      const auto& od = lin.odo[j];
      const int a = index[j], b = index[j + 1];
      const double w = 1.0 - lam;
      if (a >= 0) {
        H.block<6, 6>(6 * a, 6 * a) += w * od.J_k.transpose() * od.J_k;
        g.segment<6>(6 * a) += w * od.J_k.transpose() * od.r;
      }
      if (b >= 0) {
        H.block<6, 6>(6 * b, 6 * b) += w * od.J_k1.transpose() * od.J_k1;
        g.segment<6>(6 * b) += w * od.J_k1.transpose() * od.r;
      }
      if (a >= 0 && b >= 0) {
        const Matrix6d cross = w * od.J_k.transpose() * od.J_k1;
        H.block<6, 6>(6 * a, 6 * b) += cross;
        H.block<6, 6>(6 * b, 6 * a) += cross.transpose();
      }
    }
    H.diagonal() += damp;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    const Eigen::VectorXd step = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite())
      throw SolverFailure("window normal equations not solvable at level " + std::to_string(level));

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= cfg.align.max_halvings; ++h, scale *= 0.5) {
      std::vector<Pose> cand = rels;
      for (size_t k = 0; k < n; ++k)
        if (index[k] >= 0) cand[k] = exp_map(Twist(Vector6d(-scale * step.segment<6>(6 * index[k])))) * rels[k];
      WindowLinearization clin = linearize_window(window, cand, odom, cfg, level);
      if (clin.cost <= lin.cost) {
        rels = std::move(cand);
        lin = std::move(clin);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.report.stalled = true;
      std::fill(out.step_norm.begin(), out.step_norm.end(), 0.0);
      break;
    }
    for (size_t k = 0; k < n; ++k)
      out.step_norm[k] = index[k] >= 0 ? scale * step.segment<6>(6 * index[k]).norm() : 0.0;
    if (scale * step.norm() < cfg.align.early_exit_step) {
      out.report.early_exit = true;
      break;
    }
  }
  out.report.costs.push_back(lin.cost);
  for (size_t k = 0; k < n; ++k) out.semantic_ok[k] = lam > 0.0 && lin.sem_weight[k] > 0.0;
  return out;
}

}  // namespace detail

/// Total cost of the window at one pyramid level for the keyframes' current rel.
inline double window_cost(const std::vector<Keyframe>& window, const std::vector<OdometryMeasurement>& odom,
                          const WindowConfig& cfg, int level)
{
  std::vector<Pose> rels;
  for (const auto& kf : window) rels.push_back(kf.rel);
  return detail::window_cost(window, rels, odom, cfg, level);
}

/// Jointly refines every keyframe's rel, coarse to fine. With lambda = 1
/// the keyframes decouple and each runs single-frame alignment.
inline WindowReport optimize_window(std::vector<Keyframe>& window, const std::vector<OdometryMeasurement>& odom,
                                    const WindowConfig& cfg)
{
  if (window.empty()) throw EmptyInput("window has no keyframes");
  if (odom.size() + 1 != window.size()) throw DimensionError("need one odometry measurement per keyframe pair");
  const AlignmentConfig& ac = cfg.align;
  const int finest = ac.finest_level();

  WindowReport rep;
  rep.converged.assign(window.size(), false);
  rep.step_norm.assign(window.size(), 0.0);
  std::vector<Pose> rels;
  for (const auto& kf : window) rels.push_back(kf.rel);
  const std::vector<Pose> start = rels;
  rep.cost_before = detail::window_cost(window, rels, odom, cfg, finest);

  auto flag_converged = [&](const detail::JointLevelOutcome& out) {
    const bool settled = out.report.stalled || out.report.early_exit;
    for (size_t k = 0; k < window.size(); ++k) {
      const bool small = settled || out.step_norm[k] < ac.converged_step;
      const bool informed = cfg.lambda <= 0.0 || (out.semantic_ok[k] && out.eigen_ratio[k] >= ac.degeneracy_ratio);
      rep.converged[k] = small && informed;
      rep.step_norm[k] = out.step_norm[k];
    }
  };

  if (cfg.lambda >= 1.0) {
    for (size_t k = 0; k < window.size(); ++k) {
      auto& p = window[k].problem;
      if (p.view_pyramid.at(static_cast<size_t>(finest)).edges.empty()) {
        rep.errors.push_back("keyframe " + std::to_string(window[k].id) + " has no edge pixels");
        continue;
      }
      p.initial_rel = rels[k];
      const AlignmentResult res = align_multiscale(p, ac);
      rels[k] = res.rel;
      rep.converged[k] = res.converged;
      if (!res.levels.empty()) rep.step_norm[k] = res.levels.back().last_step;
      for (const auto& e : res.errors) rep.errors.push_back("keyframe " + std::to_string(window[k].id) + ": " + e);
    }
  } else {
    detail::JointLevelOutcome last;
    bool ok = true;
    for (int level = ac.coarsest_level(); level >= finest; --level) {
      try {
        last = detail::optimize_window_level(window, rels, odom, cfg, level);
        rep.levels.push_back(last.report);
      } catch (const SolverFailure& e) {
        ok = false;
        rep.errors.emplace_back(e.what());
      }
    }
    if (ok && !rep.levels.empty() && rep.levels.back().level == finest) flag_converged(last);
  }

  rep.cost_after = detail::window_cost(window, rels, odom, cfg, finest);
  if (rep.cost_after > rep.cost_before) {
    // Coarse levels led somewhere worse: refine the previous estimate at the
    // finest level alone, which cannot raise the cost.
    rels = start;
    rep.reverted = true;
    rep.converged.assign(window.size(), false);
    rep.errors.emplace_back("coarse levels raised the window cost; refined the previous estimate instead");
    // with lambda = 1 each keyframe's alignment already fell back on its own
    if (cfg.lambda < 1.0) {
      try {
        const detail::JointLevelOutcome polish = detail::optimize_window_level(window, rels, odom, cfg, finest);
        rep.levels.push_back(polish.report);
        flag_converged(polish);
      } catch (const SolverFailure& e) {
        rels = start;
        rep.errors.emplace_back(e.what());
      }
    }
    rep.cost_after = detail::window_cost(window, rels, odom, cfg, finest);
  }
  rep.fit_cost.assign(window.size(), std::numeric_limits<double>::infinity());
  const auto fl = static_cast<size_t>(finest);
  for (size_t k = 0; k < window.size(); ++k) {
    const auto& p = window[k].problem;
    if (!p.view_pyramid.at(fl).edges.empty()) {
      const NormalEquations ne =
          accumulate_level(p.view_pyramid[fl], p.frame_pyramid.level(finest), p.frame_intrinsics.at(fl), rels[k], ac);
      if (ne.used >= ac.min_residuals) rep.fit_cost[k] = ne.mean_cost();
    }
    if (cfg.lambda > 0.0 && !(rep.fit_cost[k] <= ac.mean_cost_bound(finest))) rep.converged[k] = false;
    window[k].rel = rels[k];
    window[k].converged = rep.converged[k];
  }
  return rep;
}

/// Final pose of a keyframe that left the window.
struct FrozenKeyframe
{
  int id = 0;
  Pose pose;
  bool converged = false;
};

/// Tracks a camera through a semantic map: every keyframe_stride-th frame
/// becomes a keyframe aligned against a rendered map view; other frames are
/// extrapolated from the newest keyframe with odometry. Processing is
/// synchronous, so each keyframe's optimization finishes before returning.
class LocalizationEngine
{
 public:
  LocalizationEngine(SemanticMesh map, ClassTable classes, CameraIntrinsics intrinsics, WindowConfig cfg = {})
      : map_(std::move(map)), classes_(std::move(classes)), k_(intrinsics), cfg_(std::move(cfg))
  {
    k_.validate();
    cfg_.validate(classes_.size());
    validate_mesh(map_, classes_.size());
    const int scale = 1 << (cfg_.align.levels_total - 1);
    if (k_.width % scale != 0 || k_.height % scale != 0)
      throw DimensionError("image size must be divisible by 2^(levels_total-1)");
  }

  void initialize(const Pose& pose)
  {
    if (!pose.is_finite()) throw InvalidArgument("initial pose is not finite");
    window_.clear();
    odom_.clear();
    evicted_.clear();
    last_estimate_ = pose;
    accumulated_ = Pose::identity();
    frame_index_ = 0;
    failures_ = 0;
    acquired_ = false;
    lost_ = false;
    initialized_ = true;
    last_report_ = {};
  }

  Pose process_frame(const LabelImage& labels, const Pose& odom_step)
  {
    require_ready();
    validate_labels(labels, classes_);
    return process_frame(labels_to_logits(labels, classes_, cfg_.p_pred), odom_step);
  }

  Pose process_frame(const LogitsImage& logits, const Pose& odom_step)
  {
    require_ready();
    if (logits.width() != k_.width || logits.height() != k_.height || logits.channels() != classes_.size())
      throw DimensionError("frame logits do not match the camera or class table");
    if (frame_index_ > 0) accumulated_ = accumulated_ * odom_step;
    const int index = frame_index_++;
    if (index % cfg_.keyframe_stride != 0) return last_estimate_ * accumulated_;

    add_keyframe(index, last_estimate_ * accumulated_, logits);
    last_report_ = optimize_window(window_, odom_, cfg_);
    const Keyframe& newest = window_.back();
    last_estimate_ = newest.estimate();
    accumulated_ = Pose::identity();
    if (newest.converged) acquired_ = true;
    failures_ = newest.converged ? 0 : failures_ + 1;
    if (acquired_ && failures_ >= cfg_.lost_after) {
      lost_ = true;
      throw LostTracking(std::to_string(failures_) + " consecutive keyframes failed to converge (frame " +
                         std::to_string(index) + ")");
    }
    if (!acquired_ && failures_ >= cfg_.max_acquisition_keyframes) {
      lost_ = true;
      throw LostTracking("no keyframe converged within " + std::to_string(failures_) + " keyframes (frame " +
                         std::to_string(index) + ")");
    }
    return last_estimate_;
  }

  bool initialized() const { return initialized_; }
  bool lost() const { return lost_; }
  bool acquired() const { return acquired_; }
  int frames_processed() const { return frame_index_; }
  const std::vector<Keyframe>& window() const { return window_; }
  const std::vector<OdometryMeasurement>& window_odometry() const { return odom_; }
  const std::vector<FrozenKeyframe>& evicted() const { return evicted_; }
  const WindowReport& last_report() const { return last_report_; }
  const WindowConfig& config() const { return cfg_; }
  const CameraIntrinsics& intrinsics() const { return k_; }

 private:
  void require_ready() const
  {
    if (!initialized_) throw NotInitialized("call initialize() before process_frame()");
    if (lost_) throw LostTracking("tracking was lost; re-initialize the engine");
  }

  void add_keyframe(int id, const Pose& render_pose, const LogitsImage& logits)
  {
    Keyframe kf;
    kf.id = id;
    kf.render_pose = render_pose;
    const RenderedView view = render(map_, k_, render_pose, cfg_.render);
    kf.problem = make_alignment_problem(view, logits, k_, cfg_.align, Pose::identity(), cfg_.render.background_id);
    if (!window_.empty()) odom_.push_back({accumulated_, cfg_.odom_weight});
    window_.push_back(std::move(kf));
    if (static_cast<int>(window_.size()) > cfg_.window_size) {
      const Keyframe& old = window_.front();
      evicted_.push_back({old.id, old.estimate(), old.converged});
      window_.erase(window_.begin());
      odom_.erase(odom_.begin());
    }
  }

  SemanticMesh map_;
  ClassTable classes_;
  CameraIntrinsics k_;
  WindowConfig cfg_;

  bool initialized_ = false;
  bool lost_ = false;
  bool acquired_ = false;
  int frame_index_ = 0;
  int failures_ = 0;
  Pose last_estimate_;
  Pose accumulated_;
  std::vector<Keyframe> window_;
  std::vector<OdometryMeasurement> odom_;
  std::vector<FrozenKeyframe> evicted_;
  WindowReport last_report_;
};

}  // namespace semloc
