#pragma once

// End-to-end helpers shared by the command-line tool and the test suites:
// synthetic scenario construction and full-sequence tracking runs.

#include <chrono>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "semloc/baseline_pf.hpp"
#include "semloc/eval.hpp"
#include "semloc/io.hpp"
#include "semloc/scenegen.hpp"
#include "semloc/window.hpp"

namespace semloc {

struct ScenarioConfig
{
  std::string preset = "urban-street";
  std::uint64_t scene_seed = 7;
  TrajectorySpec trajectory;
  NoiseModel noise;
  CameraIntrinsics camera = default_camera();
};

struct Scenario
{
  SemanticMesh map;
  ClassTable classes;
  CameraIntrinsics camera;
  std::vector<TimedPose> ground_truth;
  std::vector<LabelImage> frames;
  std::vector<Pose> odometry;  // odometry[i] moves frame i to frame i + 1
};

inline Scenario make_scenario(const ScenarioConfig& cfg)
{
  const SceneSpec spec = scene_preset(cfg.preset, cfg.scene_seed);
  Scenario s;
  s.map = generate_scene(spec);
  s.classes = spec.classes;
  s.camera = cfg.camera;
  s.ground_truth = generate_trajectory(cfg.trajectory);
  s.frames = synthesize_frames(s.map, s.ground_truth, s.camera, s.classes.size(), cfg.noise);
  s.odometry = synthesize_odometry(s.ground_truth, cfg.noise);
  return s;
}

/// Parses a comma separated class list against the table.
inline std::set<int> parse_class_list(const std::string& text, const ClassTable& classes)
{
  std::set<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string name = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!name.empty()) out.insert(classes.id(name));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

/// Map with the listed classes removed; the background class is never dropped.
inline SemanticMesh drop_classes(const SemanticMesh& map, const ClassTable& classes, const std::set<int>& drop)
{
  std::set<int> keep;
  for (int c = 0; c < classes.size(); ++c)
    if (!drop.contains(c) || c == classes.background_id()) keep.insert(c);
  return filter_classes(map, keep);
}

/// Seeded pose offset: translation of uniform length in [0, max_m] along a
/// uniform horizontal direction of the map, rotation of uniform angle in
/// [0, max_deg] about a uniform random axis (applied in the camera frame).
inline Pose apply_random_offset(const Pose& pose, double max_m, double max_deg, std::uint64_t seed)
{
  if (max_m < 0.0 || max_deg < 0.0) throw InvalidArgument("offset bounds must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double heading = 2.0 * std::numbers::pi * unit(rng);
  const double dist = max_m * unit(rng);
  Vector3d axis(gauss(rng), gauss(rng), gauss(rng));
  axis.normalize();
  const double angle = deg2rad(max_deg) * unit(rng);
  Vector6d tw = Vector6d::Zero();
  tw.tail<3>() = angle * axis;
  Pose out = pose * exp_map(Twist(tw));
  out.translation += Vector3d(std::cos(heading), std::sin(heading), 0.0) * dist;
  return out;
}

struct KeyframeStatus
{
  int frame_id = 0;
  bool converged = false;
};

struct TrackResult
{
  std::vector<io::PoseRecord> trajectory;  // one row per processed frame
  std::vector<KeyframeStatus> keyframes;
  bool lost = false;
  std::string failure;
  double seconds = 0.0;
};

inline double elapsed_seconds(std::chrono::steady_clock::time_point since)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

/// Runs the window engine over a sequence. Stops at LostTracking and
/// returns the partial trajectory with lost set.
inline TrackResult run_localizer(const SemanticMesh& map, const ClassTable& classes, const CameraIntrinsics& k,
                                 const std::vector<LabelImage>& frames, const std::vector<Pose>& odometry,
                                 const Pose& init, const WindowConfig& cfg)
{
  if (frames.empty()) throw EmptyInput("no frames");
  if (odometry.size() + 1 < frames.size()) throw InvalidArgument("need one odometry step per frame transition");
  const auto t0 = std::chrono::steady_clock::now();
  LocalizationEngine engine(map, classes, k, cfg);
  engine.initialize(init);
  TrackResult out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Pose step = i == 0 ? Pose::identity() : odometry[i - 1];
    try {
      const Pose p = engine.process_frame(frames[i], step);
      out.trajectory.push_back({static_cast<int>(i), p});
    } catch (const LostTracking& e) {
      out.lost = true;
      out.failure = e.what();
      out.keyframes.push_back({static_cast<int>(i), false});
      break;
    }
    if (static_cast<int>(i) % cfg.keyframe_stride == 0)
      out.keyframes.push_back({static_cast<int>(i), engine.window().back().converged});
  }
  out.seconds = elapsed_seconds(t0);
  return out;
}

inline TrackResult run_particle_filter(const SemanticMesh& map, const CameraIntrinsics& k,
                                       const std::vector<LabelImage>& frames, const std::vector<Pose>& odometry,
                                       const Pose& init, const PfConfig& cfg)
{
  if (frames.empty()) throw EmptyInput("no frames");
  if (odometry.size() + 1 < frames.size()) throw InvalidArgument("need one odometry step per frame transition");
  const auto t0 = std::chrono::steady_clock::now();
  ParticleFilterLocalizer pf(map, k, cfg);
  pf.initialize(init);
  TrackResult out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Pose step = i == 0 ? Pose::identity() : odometry[i - 1];
    out.trajectory.push_back({static_cast<int>(i), pf.process_frame(frames[i], step)});
  }
  out.seconds = elapsed_seconds(t0);
  return out;
}

inline std::vector<io::PoseRecord> to_records(const std::vector<TimedPose>& traj)
{
  std::vector<io::PoseRecord> out;
  out.reserve(traj.size());
  for (const auto& tp : traj) out.push_back({tp.frame_id, tp.pose});
  return out;
}

}  // namespace semloc
