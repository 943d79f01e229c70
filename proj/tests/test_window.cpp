#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "semloc/pipeline.hpp"
#include "semloc/window.hpp"
#include "support.hpp"

using namespace semloc;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const Scenario& scenario()
{
  static const Scenario s = [] {
    ScenarioConfig cfg;
    cfg.trajectory.frame_count = 60;
    cfg.noise.seg_flip_prob = 0.02;
    cfg.noise.odom_sigma << 0.01, 0.01, 0.01, 0.002, 0.002, 0.002;
    cfg.noise.seed = 3;
    return make_scenario(cfg);
  }();
  return s;
}

Pose odometry_between(const Scenario& s, int a, int b)
{
  Pose out = Pose::identity();
  for (int i = a; i < b; ++i) out = out * s.odometry[static_cast<size_t>(i)];
  return out;
}

/// Keyframes at the given frames with render poses offset from the truth.
struct Window
{
  std::vector<Keyframe> keyframes;
  std::vector<OdometryMeasurement> odom;
};

Window make_window(const std::vector<int>& ids, const WindowConfig& cfg, std::uint64_t seed, double trans = 0.15,
                   double rot = 1.0 * kDeg)
{
  const Scenario& s = scenario();
  std::mt19937_64 rng(seed);
  Window w;
  for (size_t j = 0; j < ids.size(); ++j) {
    const int id = ids[j];
    Keyframe kf;
    kf.id = id;
    kf.render_pose = s.ground_truth[static_cast<size_t>(id)].pose *
                     exp_map(Twist(semloc::test::random_twist(rng, trans, rot)));
    const LogitsImage logits = labels_to_logits(s.frames[static_cast<size_t>(id)], s.classes, cfg.p_pred);
    kf.problem = make_alignment_problem(render(s.map, s.camera, kf.render_pose), logits, s.camera, cfg.align);
    w.keyframes.push_back(std::move(kf));
    if (j > 0) w.odom.push_back({odometry_between(s, ids[j - 1], id), cfg.odom_weight});
  }
  return w;
}

TEST(OdometryResidual, Cases)
{
  const OdometryMeasurement exact{Pose::from_translation({1, 0, 0})};
  EXPECT_LT(odometry_residual(Pose::identity(), Pose::from_translation({1, 0, 0}), exact).norm(), 1e-15);
  const OdometryMeasurement longer{Pose::from_translation({1.1, 0, 0})};
  const Vector6d r = odometry_residual(Pose::identity(), Pose::from_translation({1, 0, 0}), longer);
  EXPECT_NEAR(r[0], 1.0, 1e-12);
  EXPECT_LT(r.tail<5>().norm(), 1e-12);
  // a common rigid motion of both estimates does not change the residual
  std::mt19937_64 rng(3);
  const Pose T = semloc::test::random_pose(rng), a = semloc::test::random_pose(rng), b = semloc::test::random_pose(rng);
  const OdometryMeasurement m{semloc::test::random_pose(rng, 0.5, 0.3)};
  EXPECT_LT((odometry_residual(a, b, m) - odometry_residual(T * a, T * b, m)).norm(), 1e-9);
}

TEST(OdometryResidual, LinearizationMatchesFiniteDifferences)
{
  std::mt19937_64 rng(23);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Pose rk = semloc::test::random_pose(rng), rk1 = semloc::test::random_pose(rng);
    const Pose relk = semloc::test::random_pose(rng, 0.3, 0.2), relk1 = semloc::test::random_pose(rng, 0.3, 0.2);
    // keep the measurement near the estimate so the error stays small
    const Pose E = inverse(rk * inverse(relk)) * (rk1 * inverse(relk1));
    const OdometryMeasurement m{E * semloc::test::random_pose(rng, 0.2, 0.2)};
    const OdometryLinearization lin = linearize_odometry(rk, relk, rk1, relk1, m);
    auto residual = [&](const Pose& a, const Pose& b) { return linearize_odometry(rk, a, rk1, b, m).r; };
    const double h = 1e-5;
    Matrix6d Nk, Nk1;
    for (int j = 0; j < 6; ++j) {
      Vector6d d = Vector6d::Zero();
      d[j] = h;
      const Pose p = exp_map(Twist(d)), n = exp_map(Twist(Vector6d(-d)));
      Nk.col(j) = (residual(p * relk, relk1) - residual(n * relk, relk1)) / (2 * h);
      Nk1.col(j) = (residual(relk, p * relk1) - residual(relk, n * relk1)) / (2 * h);
    }
    EXPECT_LT((lin.r - m.weight.cwiseProduct(boxminus(m.rel, E).coords)).norm(), 1e-9);
    worst = std::max({worst, (Nk - lin.J_k).norm() / Nk.norm(), (Nk1 - lin.J_k1).norm() / Nk1.norm()});
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(OptimizeWindow, LambdaOneMatchesSingleFrameAlignment)
{
  WindowConfig cfg;
  cfg.lambda = 1.0;
  Window w = make_window({0, 5, 10}, cfg, 41);
  std::vector<AlignmentResult> expected;
  for (const auto& kf : w.keyframes) expected.push_back(align_multiscale(kf.problem, cfg.align));
  const WindowReport rep = optimize_window(w.keyframes, w.odom, cfg);
  ASSERT_FALSE(rep.reverted);
  for (size_t k = 0; k < expected.size(); ++k) {
    const Pose d = inverse(expected[k].rel) * w.keyframes[k].rel;
    EXPECT_LT(d.translation.norm() + rotation_angle(d.rotation), 1e-9);
  }
}

TEST(OptimizeWindow, LambdaZeroFollowsOdometry)
{
  WindowConfig cfg;
  cfg.lambda = 0.0;
  Window w = make_window({0, 5, 10, 15}, cfg, 43);
  const Pose first = w.keyframes[0].estimate();
  const WindowReport rep = optimize_window(w.keyframes, w.odom, cfg);
  EXPECT_LE(rep.cost_after, rep.cost_before);
  EXPECT_LT(rep.cost_after, 1e-12);
  Pose dead = first;
  for (size_t k = 0; k < w.keyframes.size(); ++k) {
    if (k > 0) dead = dead * w.odom[k - 1].rel;
    const Pose d = inverse(dead) * w.keyframes[k].estimate();
    EXPECT_LT(d.translation.norm(), 1e-6) << k;
    EXPECT_LT(rotation_angle(d.rotation), 1e-6) << k;
  }
}

TEST(OptimizeWindow, CostNeverIncreases)
{
  for (double lambda : {0.0, 0.3, 0.65, 1.0}) {
    WindowConfig cfg;
    cfg.lambda = lambda;
    for (std::uint64_t seed : {1u, 2u}) {
      Window w = make_window({10, 15, 20, 25}, cfg, seed, 0.4, 2.0 * kDeg);
      const WindowReport rep = optimize_window(w.keyframes, w.odom, cfg);
      EXPECT_LE(rep.cost_after, rep.cost_before) << lambda;
      EXPECT_EQ(rep.converged.size(), 4u);
      EXPECT_EQ(rep.fit_cost.size(), 4u);
      if (lambda < 1.0) {
        for (const auto& l : rep.levels)
          for (size_t i = 1; i < l.costs.size(); ++i) EXPECT_LE(l.costs[i], l.costs[i - 1]);
      }
    }
  }
}

TEST(OptimizeWindow, JointWindowImprovesOnOffsetStart)
{
  WindowConfig cfg;
  Window w = make_window({20, 25, 30, 35}, cfg, 47, 0.3, 1.5 * kDeg);
  double before = 0.0, after = 0.0;
  const Scenario& s = scenario();
  auto err = [&](const Keyframe& kf) {
    return (kf.estimate().translation - s.ground_truth[static_cast<size_t>(kf.id)].pose.translation).norm();
  };
  for (const auto& kf : w.keyframes) before += err(kf);
  optimize_window(w.keyframes, w.odom, cfg);
  for (const auto& kf : w.keyframes) after += err(kf);
  EXPECT_LT(after, 0.5 * before);
}

TEST(OptimizeWindow, BlankKeyframeIsNotConverged)
{
  WindowConfig cfg;
  cfg.lambda = 1.0;
  const Scenario& s = scenario();
  Keyframe kf;
  RenderedView blank;
  blank.labels = LabelImage(s.camera.width, s.camera.height, 1, 0);
  blank.depth = Image<double>(s.camera.width, s.camera.height, 1, std::numeric_limits<double>::infinity());
  kf.problem = make_alignment_problem(blank, labels_to_logits(s.frames[0], s.classes, 0.9), s.camera, cfg.align);
  std::vector<Keyframe> w{kf};
  const WindowReport rep = optimize_window(w, {}, cfg);
  EXPECT_FALSE(rep.converged[0]);
  EXPECT_FALSE(rep.errors.empty());
  EXPECT_TRUE(w[0].rel.translation.isZero());
}

TEST(OptimizeWindow, ShapeChecks)
{
  WindowConfig cfg;
  std::vector<Keyframe> none;
  EXPECT_THROW(optimize_window(none, {}, cfg), EmptyInput);
  Window w = make_window({0, 5}, cfg, 1);
  EXPECT_THROW(optimize_window(w.keyframes, {}, cfg), DimensionError);
}

WindowConfig fast_config()
{
  WindowConfig cfg;
  cfg.window_size = 3;
  return cfg;
}

TEST(Engine, RequiresInitialization)
{
  const Scenario& s = scenario();
  LocalizationEngine e(s.map, s.classes, s.camera, fast_config());
  EXPECT_THROW(e.process_frame(s.frames[0], Pose::identity()), NotInitialized);
  EXPECT_THROW(e.initialize(Pose(Matrix3d::Identity(), Vector3d(std::nan(""), 0, 0))), InvalidArgument);
}

TEST(Engine, FirstKeyframeRendersAtInitialPose)
{
  const Scenario& s = scenario();
  LocalizationEngine e(s.map, s.classes, s.camera, fast_config());
  const Pose init = apply_random_offset(s.ground_truth[0].pose, 0.3, 1.0, 5);
  e.initialize(init);
  e.process_frame(s.frames[0], Pose::identity());
  ASSERT_EQ(e.window().size(), 1u);
  EXPECT_EQ(e.window()[0].render_pose.translation, init.translation);
  EXPECT_EQ(e.window()[0].render_pose.rotation, init.rotation);
}

TEST(Engine, IntermediateFramesComposeOdometry)
{
  const Scenario& s = scenario();
  LocalizationEngine e(s.map, s.classes, s.camera, fast_config());
  e.initialize(s.ground_truth[0].pose);
  const Pose kf = e.process_frame(s.frames[0], Pose::identity());
  Pose expected = kf;
  for (int i = 1; i < 5; ++i) {
    const Pose p = e.process_frame(s.frames[static_cast<size_t>(i)], s.odometry[static_cast<size_t>(i - 1)]);
    expected = expected * s.odometry[static_cast<size_t>(i - 1)];
    EXPECT_EQ(p.translation, (kf * odometry_between(s, 0, i)).translation);
    EXPECT_LT((p.translation - expected.translation).norm(), 1e-12);
  }
  EXPECT_EQ(e.window().size(), 1u);
  e.process_frame(s.frames[5], s.odometry[4]);
  EXPECT_EQ(e.window().size(), 2u);
  EXPECT_EQ(e.window()[1].id, 5);
}

TEST(Engine, TracksAndFreezesEvictedKeyframes)
{
  const Scenario& s = scenario();
  LocalizationEngine e(s.map, s.classes, s.camera, fast_config());
  e.initialize(s.ground_truth[0].pose);
  std::vector<FrozenKeyframe> seen;
  for (size_t i = 0; i < 40; ++i) {
    const Pose p = e.process_frame(s.frames[i], i == 0 ? Pose::identity() : s.odometry[i - 1]);
    EXPECT_LT((p.translation - s.ground_truth[i].pose.translation).norm(), 0.3) << i;
    const auto& ev = e.evicted();
    for (size_t j = 0; j < seen.size(); ++j) {
      EXPECT_EQ(ev[j].pose.translation, seen[j].pose.translation);
      EXPECT_EQ(ev[j].id, seen[j].id);
    }
    seen = ev;
    EXPECT_LE(e.window().size(), 3u);
  }
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_TRUE(e.acquired());
}

TEST(Engine, NoiseFreeRunStaysOnTheTruth)
{
  ScenarioConfig sc;
  sc.trajectory.frame_count = 200;
  const Scenario s = make_scenario(sc);
  WindowConfig cfg;
  cfg.align.levels_used = cfg.align.levels_total;
  const TrackResult r = run_localizer(s.map, s.classes, s.camera, s.frames, s.odometry, s.ground_truth[0].pose, cfg);
  ASSERT_FALSE(r.lost) << r.failure;
  ASSERT_EQ(r.trajectory.size(), 200u);
  for (size_t i = 0; i < 200; ++i)
    EXPECT_LT((r.trajectory[i].pose.translation - s.ground_truth[i].pose.translation).norm(), 0.02) << i;
  for (const auto& k : r.keyframes) EXPECT_TRUE(k.converged) << k.frame_id;
}

TEST(Engine, ReinitializeClearsState)
{
  const Scenario& s = scenario();
  LocalizationEngine e(s.map, s.classes, s.camera, fast_config());
  e.initialize(s.ground_truth[0].pose);
  for (size_t i = 0; i < 6; ++i) e.process_frame(s.frames[i], i == 0 ? Pose::identity() : s.odometry[i - 1]);
  e.initialize(s.ground_truth[10].pose);
  EXPECT_TRUE(e.window().empty());
  EXPECT_TRUE(e.evicted().empty());
  EXPECT_EQ(e.frames_processed(), 0);
  e.process_frame(s.frames[10], s.odometry[9]);  // the first step after initialization is ignored
  EXPECT_EQ(e.window()[0].render_pose.translation, s.ground_truth[10].pose.translation);
}

TEST(Engine, Deterministic)
{
  const Scenario& s = scenario();
  auto run = [&] {
    return run_localizer(s.map, s.classes, s.camera, std::vector<LabelImage>(s.frames.begin(), s.frames.begin() + 16),
                         s.odometry, apply_random_offset(s.ground_truth[0].pose, 0.5, 2.0, 9), fast_config());
  };
  const TrackResult a = run(), b = run();
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (size_t i = 0; i < a.trajectory.size(); ++i) {
    EXPECT_EQ(a.trajectory[i].pose.translation, b.trajectory[i].pose.translation);
    EXPECT_EQ(a.trajectory[i].pose.rotation, b.trajectory[i].pose.rotation);
  }
}

TEST(Engine, LostDuringAcquisitionAfterBudgetAndStaysLost)
{
  // with every class but the background removed nothing can converge
  const Scenario& s = scenario();
  WindowConfig cfg = fast_config();
  cfg.keyframe_stride = 1;
  cfg.max_acquisition_keyframes = 6;
  cfg.lost_after = 2;
  LocalizationEngine e(filter_classes(s.map, {0}), s.classes, s.camera, cfg);
  e.initialize(s.ground_truth[0].pose);
  int processed = 0;
  try {
    for (size_t i = 0; i < 20; ++i, ++processed)
      e.process_frame(s.frames[i], i == 0 ? Pose::identity() : s.odometry[i - 1]);
  } catch (const LostTracking&) {
  }
  EXPECT_EQ(processed, 5);  // the sixth failure throws
  EXPECT_TRUE(e.lost());
  EXPECT_FALSE(e.acquired());
  EXPECT_THROW(e.process_frame(s.frames[6], s.odometry[5]), LostTracking);
  e.initialize(s.ground_truth[0].pose);
  EXPECT_FALSE(e.lost());
}

TEST(Engine, LostAfterConsecutiveFailuresOnceAcquired)
{
  // acquire on the real map, then the frames turn to pure background
  const Scenario& s = scenario();
  WindowConfig cfg = fast_config();
  cfg.keyframe_stride = 1;
  cfg.lost_after = 3;
  LocalizationEngine e(s.map, s.classes, s.camera, cfg);
  e.initialize(s.ground_truth[0].pose);
  e.process_frame(s.frames[0], Pose::identity());
  e.process_frame(s.frames[1], s.odometry[0]);
  ASSERT_TRUE(e.acquired());
  const LabelImage empty(s.camera.width, s.camera.height, 1, 6);
  int failures = 0;
  try {
    for (size_t i = 2; i < 10; ++i, ++failures) e.process_frame(empty, s.odometry[i - 1]);
  } catch (const LostTracking&) {
  }
  EXPECT_EQ(failures, 2);
  EXPECT_TRUE(e.lost());
}

TEST(Engine, ConfigValidation)
{
  const Scenario& s = scenario();
  WindowConfig cfg;
  cfg.window_size = 1;
  EXPECT_THROW(LocalizationEngine(s.map, s.classes, s.camera, cfg), InvalidArgument);
  cfg = {};
  cfg.lambda = 1.5;
  EXPECT_THROW(LocalizationEngine(s.map, s.classes, s.camera, cfg), InvalidArgument);
  CameraIntrinsics odd = s.camera;
  odd.width = 650;
  EXPECT_THROW(LocalizationEngine(s.map, s.classes, odd, WindowConfig{}), DimensionError);
}

}  // namespace
