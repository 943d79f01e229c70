#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "semloc/geom.hpp"
#include "semloc/mesh.hpp"

namespace semloc::test {

inline Vector6d random_twist(std::mt19937_64& rng, double trans_scale, double max_angle)
{
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector6d t;
  for (int i = 0; i < 3; ++i) t[i] = trans_scale * u(rng);
  Vector3d axis(g(rng), g(rng), g(rng));
  axis.normalize();
  t.tail<3>() = axis * (max_angle * std::abs(u(rng)));
  return t;
}

inline Pose random_pose(std::mt19937_64& rng, double trans_scale = 2.0, double max_angle = 3.0)
{
  return exp_map(Twist(random_twist(rng, trans_scale, max_angle)));
}

inline double pose_distance(const Pose& a, const Pose& b)
{
  const Pose d = inverse(a) * b;
  return d.translation.norm() + rotation_angle(d.rotation);
}

/// Axis-aligned rectangle at depth z in camera coordinates (identity pose
/// looks down +z), spanning [x0,x1] x [y0,y1].
inline void add_plane(SemanticMesh& m, double x0, double x1, double y0, double y1, double z, int class_id)
{
  m.add_quad({x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z}, class_id);
}

}  // namespace semloc::test
