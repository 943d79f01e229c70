#pragma once

// Seeded synthetic worlds: a straight street with road, sidewalks, lane
// markings, poles, signs, building blocks and trees, plus trajectories,
// corrupted segmentations and noisy odometry.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "semloc/errors.hpp"
#include "semloc/geom.hpp"
#include "semloc/mesh.hpp"
#include "semloc/renderer.hpp"
#include "semloc/semantics.hpp"

namespace semloc {

namespace cls {
inline constexpr int background = 0;
inline constexpr int road = 1;
inline constexpr int sidewalk = 2;
inline constexpr int marking = 3;
inline constexpr int pole = 4;
inline constexpr int sign = 5;
inline constexpr int building = 6;
inline constexpr int nature = 7;
}  // namespace cls

inline ClassTable street_classes()
{
  return ClassTable({"background", "road", "sidewalk", "marking", "pole", "sign", "building", "nature"}, 0);
}

/// Street along +x from x = 0 to x = street_length; y points left, z up,
/// road surface at z = 0.
struct SceneSpec
{
  double street_length = 150.0;
  double road_width = 8.0;
  double sidewalk_width = 3.0;
  double segment_length = 10.0;
  double building_density = 0.7;  // probability a facade slot holds a building
  int marking_count = 25;         // center-line dashes
  int pole_count = 16;
  int sign_count = 6;             // each sign also adds one post of class pole
  int nature_count = 10;
  int hidden_pole_count = 0;      // poles placed behind the building rows
  ClassTable classes = street_classes();
  std::uint64_t seed = 1;

  void validate() const
  {
    if (!(street_length > 0.0) || !(road_width > 0.0) || !(segment_length > 0.0) || sidewalk_width < 0.0)
      throw InvalidArgument("scene dimensions must be positive");
    if (building_density < 0.0 || building_density > 1.0) throw InvalidArgument("building density outside [0,1]");
    if (marking_count < 0 || pole_count < 0 || sign_count < 0 || nature_count < 0 || hidden_pole_count < 0)
      throw InvalidArgument("negative object count");
  }
};

/// Object counts of a generated scene. Triangle counts per class follow:
/// road 2 per segment, sidewalk 4 per segment, marking 2 per dash,
/// pole 10 per pole/post, sign 2 per plate, building 8 per block,
/// nature 4 per tree.
struct SceneStats
{
  int segments = 0;
  int sidewalk_segments = 0;
  int markings = 0;
  int poles = 0;  // free-standing + sign posts + hidden
  int signs = 0;
  int buildings = 0;
  int trees = 0;
};

namespace detail {

inline void add_box(SemanticMesh& m, const Vector3d& lo, const Vector3d& hi, int class_id, bool top = true)
{
  const double x0 = lo.x(), y0 = lo.y(), z0 = lo.z(), x1 = hi.x(), y1 = hi.y(), z1 = hi.z();
  m.add_quad({x0, y0, z0}, {x0, y1, z0}, {x0, y1, z1}, {x0, y0, z1}, class_id);  // -x
  m.add_quad({x1, y0, z0}, {x1, y1, z0}, {x1, y1, z1}, {x1, y0, z1}, class_id);  // +x
  m.add_quad({x0, y0, z0}, {x1, y0, z0}, {x1, y0, z1}, {x0, y0, z1}, class_id);  // -y
  m.add_quad({x0, y1, z0}, {x1, y1, z0}, {x1, y1, z1}, {x0, y1, z1}, class_id);  // +y
  if (top) m.add_quad({x0, y0, z1}, {x1, y0, z1}, {x1, y1, z1}, {x0, y1, z1}, class_id);
}

inline void add_pole(SemanticMesh& m, double x, double y, double height, double width = 0.3)
{
  const double h = width / 2.0;
  add_box(m, {x - h, y - h, 0.0}, {x + h, y + h, height}, cls::pole);
}

}  // namespace detail

inline SemanticMesh generate_scene(const SceneSpec& spec, SceneStats* stats = nullptr)
{
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

  SemanticMesh m;
  SceneStats st;
  const double L = spec.street_length;
  const double hw = spec.road_width / 2.0;
  const double sw = spec.sidewalk_width;

  const int segments = static_cast<int>(std::ceil(L / spec.segment_length - 1e-9));
  for (int i = 0; i < segments; ++i) {
    const double xa = i * spec.segment_length;
    const double xb = std::min(L, xa + spec.segment_length);
    m.add_quad({xa, -hw, 0.0}, {xb, -hw, 0.0}, {xb, hw, 0.0}, {xa, hw, 0.0}, cls::road);
    ++st.segments;
    if (sw > 0.0) {
      m.add_quad({xa, hw, 0.0}, {xb, hw, 0.0}, {xb, hw + sw, 0.0}, {xa, hw + sw, 0.0}, cls::sidewalk);
      m.add_quad({xa, -hw - sw, 0.0}, {xb, -hw - sw, 0.0}, {xb, -hw, 0.0}, {xa, -hw, 0.0}, cls::sidewalk);
      ++st.sidewalk_segments;
    }
  }

  // Dashes sit slightly above the road to keep the z-buffer unambiguous.
  const double dash_len = 3.0, dash_w = 0.25, dash_z = 0.01;
  for (int i = 0; i < spec.marking_count; ++i) {
    const double period = L / spec.marking_count;
    const double xa = i * period + 0.25 * period;
    const double xb = std::min(xa + std::min(dash_len, 0.5 * period), L);
    m.add_quad({xa, -dash_w / 2, dash_z}, {xb, -dash_w / 2, dash_z}, {xb, dash_w / 2, dash_z},
               {xa, dash_w / 2, dash_z}, cls::marking);
    ++st.markings;
  }

  auto side = [&]() { return unit(rng) < 0.5 ? -1.0 : 1.0; };
  for (int i = 0; i < spec.pole_count; ++i) {
    const double x = uniform(2.0, L - 2.0);
    const double s = side();
    detail::add_pole(m, x, s * (hw + 0.6), uniform(4.0, 6.0));
    ++st.poles;
  }
  for (int i = 0; i < spec.sign_count; ++i) {
    const double x = uniform(2.0, L - 2.0);
    const double y = side() * (hw + 1.0);
    const double z0 = uniform(2.0, 2.6), size = uniform(0.7, 1.0);
    detail::add_pole(m, x, y, z0 + size, 0.12);
    ++st.poles;
    // Plate faces oncoming traffic, just in front of its post.
    const double px = x - 0.08;
    m.add_quad({px, y - size / 2, z0}, {px, y + size / 2, z0}, {px, y + size / 2, z0 + size},
               {px, y - size / 2, z0 + size}, cls::sign);
    ++st.signs;
  }

  const double facade_offset = hw + sw;
  double max_setback = 0.0;
  if (spec.building_density > 0.0) {
    for (double s : {-1.0, 1.0}) {
      double x = uniform(0.0, 4.0);
      while (x < L) {
        const double width = uniform(8.0, 16.0);
        const double xb = std::min(x + width, L);
        if (unit(rng) < spec.building_density && xb - x > 2.0) {
          const double setback = uniform(2.0, 3.0);
          const double height = uniform(6.0, 15.0);
          const double y_front = s * (facade_offset + setback);
          const double y_back = s * (facade_offset + setback + 8.0);
          // Front, two sides, roof.
          m.add_quad({x, y_front, 0.0}, {xb, y_front, 0.0}, {xb, y_front, height}, {x, y_front, height}, cls::building);
          m.add_quad({x, y_front, 0.0}, {x, y_back, 0.0}, {x, y_back, height}, {x, y_front, height}, cls::building);
          m.add_quad({xb, y_front, 0.0}, {xb, y_back, 0.0}, {xb, y_back, height}, {xb, y_front, height}, cls::building);
          m.add_quad({x, y_front, height}, {xb, y_front, height}, {xb, y_back, height}, {x, y_back, height}, cls::building);
          ++st.buildings;
          max_setback = std::max(max_setback, setback);
        }
        x = xb + uniform(1.0, 4.0);
      }
    }
  }

  for (int i = 0; i < spec.nature_count; ++i) {
    const double x = uniform(2.0, L - 2.0);
    const double y = side() * (facade_offset + 1.0);
    const double h = uniform(4.0, 6.0), r = uniform(1.2, 1.8);
    m.add_quad({x - r, y, 0.0}, {x + r, y, 0.0}, {x + r, y, h}, {x - r, y, h}, cls::nature);
    m.add_quad({x, y - r, 0.0}, {x, y + r, 0.0}, {x, y + r, h}, {x, y - r, h}, cls::nature);
    ++st.trees;
  }

  for (int i = 0; i < spec.hidden_pole_count; ++i) {
    const double x = uniform(2.0, L - 2.0);
    const double y = side() * (facade_offset + 3.0 + 8.0 + 2.0);
    detail::add_pole(m, x, y, uniform(4.0, 5.0), 0.4);
    ++st.poles;
  }

  if (stats) *stats = st;
  return m;
}

/// Named scene presets of decreasing semantic richness.
inline SceneSpec scene_preset(const std::string& name, std::uint64_t seed)
{
  SceneSpec s;
  s.seed = seed;
  if (name == "urban-street") return s;
  if (name == "occluded-street") {
    s.building_density = 0.95;
    s.hidden_pole_count = 30;
    return s;
  }
  if (name == "sparse-rural") {
    s.road_width = 7.0;
    s.sidewalk_width = 0.0;
    s.building_density = 0.0;
    s.pole_count = 6;
    s.sign_count = 2;
    s.marking_count = 15;
    s.nature_count = 24;
    return s;
  }
  if (name == "markings-only") {
    s.building_density = 0.0;
    s.pole_count = 0;
    s.sign_count = 0;
    s.nature_count = 0;
    return s;
  }
  throw InvalidArgument("unknown preset '" + name + "'");
}

inline std::vector<std::string> preset_names()
{
  return {"urban-street", "sparse-rural", "markings-only", "occluded-street"};
}

/// Default camera: 640x480 pinhole, about 65 degrees horizontal field of view.
inline CameraIntrinsics default_camera() { return {500.0, 500.0, 319.5, 239.5, 640, 480}; }

/// Rotation taking camera axes (x right, y down, z forward) into a vehicle
/// frame (x forward, y left, z up).
inline Matrix3d vehicle_from_camera()
{
  Matrix3d R;
  R << 0, 0, 1,
       -1, 0, 0,
       0, -1, 0;
  return R;
}

struct PathSegment
{
  double length = 0.0;
  double curvature = 0.0;  // 1/radius, positive turns left
};

/// Planar path at constant height sampled at speed / frame_rate spacing.
struct TrajectorySpec
{
  Vector3d start{5.0, -2.0, 1.5};
  double start_heading = 0.0;  // radians about +z
  std::vector<PathSegment> segments{{80.0, 0.0}};
  double speed = 10.0;       // m/s
  double frame_rate = 25.0;  // Hz
  int frame_count = -1;      // -1: as many frames as fit on the path

  double total_length() const
  {
    double l = 0.0;
    for (const auto& s : segments) l += s.length;
    return l;
  }

  void validate() const
  {
    if (!(speed > 0.0) || !(frame_rate > 0.0)) throw InvalidArgument("speed and frame rate must be positive");
    if (segments.empty()) throw InvalidArgument("path has no segments");
    for (const auto& s : segments)
      if (!(s.length > 0.0)) throw InvalidArgument("segment length must be positive");
  }
};

/// Camera pose (map_from_camera) at arc length s along the path.
inline Pose path_pose(const TrajectorySpec& spec, double s)
{
  double x = spec.start.x(), y = spec.start.y(), heading = spec.start_heading;
  double remaining = s;
  for (size_t i = 0; i < spec.segments.size(); ++i) {
    const auto& seg = spec.segments[i];
    const bool last = i + 1 == spec.segments.size();
    const double d = last ? remaining : std::min(remaining, seg.length);
    if (std::abs(seg.curvature) < 1e-12) {
      x += d * std::cos(heading);
      y += d * std::sin(heading);
    } else {
      const double r = 1.0 / seg.curvature;
      const double h1 = heading + seg.curvature * d;
      x += r * (std::sin(h1) - std::sin(heading));
      y += r * (-std::cos(h1) + std::cos(heading));
      heading = h1;
    }
    remaining -= d;
    if (remaining <= 0.0) break;
  }
  const Matrix3d yaw = Eigen::AngleAxisd(heading, Vector3d::UnitZ()).toRotationMatrix();
  return Pose(yaw * vehicle_from_camera(), Vector3d(x, y, spec.start.z()));
}

struct TimedPose
{
  int frame_id = 0;
  Pose pose;
};

inline std::vector<TimedPose> generate_trajectory(const TrajectorySpec& spec)
{
  spec.validate();
  const double step = spec.speed / spec.frame_rate;
  int count = spec.frame_count;
  if (count < 0) count = static_cast<int>(std::floor(spec.total_length() / step + 1e-9)) + 1;
  std::vector<TimedPose> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back({i, path_pose(spec, i * step)});
  return out;
}

struct NoiseModel
{
  double seg_flip_prob = 0.0;
  int seg_boundary_jitter = 0;  // pixels
  Vector6d odom_sigma = Vector6d::Zero();
  std::uint64_t seed = 0;

  void validate() const
  {
    if (seg_flip_prob < 0.0 || seg_flip_prob > 1.0) throw InvalidArgument("flip probability outside [0,1]");
    if (seg_boundary_jitter < 0) throw InvalidArgument("negative boundary jitter");
    if ((odom_sigma.array() < 0.0).any()) throw InvalidArgument("negative odometry sigma");
  }
};

/// Applies boundary jitter (each pixel copies a random neighbor within the
/// jitter radius) and then per-pixel flips to a uniformly drawn class.
inline LabelImage corrupt_labels(const LabelImage& clean, int num_classes, const NoiseModel& noise,
                                 std::uint64_t frame_seed)
{
  std::seed_seq seq{static_cast<std::uint32_t>(noise.seed), static_cast<std::uint32_t>(noise.seed >> 32),
                    static_cast<std::uint32_t>(frame_seed), static_cast<std::uint32_t>(frame_seed >> 32), 0x5e6u};
  std::mt19937_64 rng(seq);
  LabelImage out = clean;
  const int w = clean.width(), h = clean.height();
  if (noise.seg_boundary_jitter > 0) {
    std::uniform_int_distribution<int> off(-noise.seg_boundary_jitter, noise.seg_boundary_jitter);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int sx = std::clamp(x + off(rng), 0, w - 1);
        const int sy = std::clamp(y + off(rng), 0, h - 1);
        out(x, y) = clean(sx, sy);
      }
    }
  }
  if (noise.seg_flip_prob > 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, num_classes - 1);
    for (auto& v : out.data())
      if (unit(rng) < noise.seg_flip_prob) v = static_cast<std::uint8_t>(cls(rng));
  }
  return out;
}

/// Ground-truth segmentation of one trajectory frame with the noise model applied.
inline LabelImage synthesize_frame(const SemanticMesh& mesh, const TimedPose& tp, const CameraIntrinsics& k,
                                   int num_classes, const NoiseModel& noise, const RenderConfig& rc = {})
{
  const RenderedView view = render(mesh, k, tp.pose, rc);
  return corrupt_labels(view.labels, num_classes, noise, static_cast<std::uint64_t>(tp.frame_id));
}

inline std::vector<LabelImage> synthesize_frames(const SemanticMesh& mesh, const std::vector<TimedPose>& traj,
                                                 const CameraIntrinsics& k, int num_classes,
                                                 const NoiseModel& noise, const RenderConfig& rc = {})
{
  noise.validate();
  std::vector<LabelImage> out;
  out.reserve(traj.size());
  for (const auto& tp : traj) out.push_back(synthesize_frame(mesh, tp, k, num_classes, noise, rc));
  return out;
}

/// Relative motion between consecutive poses, perturbed by exp of Gaussian
/// twist noise. Element i is the step from pose i to pose i + 1.
inline std::vector<Pose> synthesize_odometry(const std::vector<TimedPose>& traj, const NoiseModel& noise)
{
  noise.validate();
  if (traj.size() < 2) throw InvalidArgument("odometry needs at least two poses");
  std::seed_seq seq{static_cast<std::uint32_t>(noise.seed), static_cast<std::uint32_t>(noise.seed >> 32), 0x0d0u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Pose> out;
  out.reserve(traj.size() - 1);
  for (size_t i = 1; i < traj.size(); ++i) {
    const Pose rel = inverse(traj[i - 1].pose) * traj[i].pose;
    Vector6d n;
    for (int j = 0; j < 6; ++j) n(j) = noise.odom_sigma(j) * gauss(rng);
    out.push_back(rel * exp_map(Twist(n)));
  }
  return out;
}

}  // namespace semloc
