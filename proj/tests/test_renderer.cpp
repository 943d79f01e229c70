#include <gtest/gtest.h>

#include <random>
#include <set>

#include "semloc/renderer.hpp"
#include "semloc/scenegen.hpp"
#include "support.hpp"

using namespace semloc;
using semloc::test::add_plane;

namespace {

const CameraIntrinsics kCam{100.0, 100.0, 31.5, 23.5, 64, 48};

RenderedView labels_only(const LabelImage& l)
{
  RenderedView v;
  v.labels = l;
  v.depth = Image<double>(l.width(), l.height(), 1, 1.0);
  return v;
}

TEST(Render, FrontoParallelPlaneFillsView)
{
  SemanticMesh m;
  add_plane(m, -10, 10, -10, 10, 5.0, 3);
  const RenderedView v = render(m, kCam, Pose::identity());
  for (int y = 0; y < kCam.height; ++y)
    for (int x = 0; x < kCam.width; ++x) {
      ASSERT_EQ(v.labels(x, y), 3);
      ASSERT_NEAR(v.depth(x, y), 5.0, 1e-6);
    }
}

TEST(Render, NearerSurfaceWins)
{
  SemanticMesh m;
  add_plane(m, -10, 10, -10, 10, 8.0, 1);
  add_plane(m, -0.5, 0.5, -0.5, 0.5, 4.0, 2);
  add_plane(m, -10, 10, -10, 10, 9.0, 3);
  const RenderedView v = render(m, kCam, Pose::identity());
  int near = 0;
  for (int y = 0; y < kCam.height; ++y)
    for (int x = 0; x < kCam.width; ++x) {
      const Vector3d ray = unproject(kCam, Vector2d(x, y), 1.0);
      const bool inside = std::abs(ray.x() * 4.0) < 0.5 - 1e-6 && std::abs(ray.y() * 4.0) < 0.5 - 1e-6;
      if (inside) {
        ++near;
        EXPECT_EQ(v.labels(x, y), 2);
        EXPECT_NEAR(v.depth(x, y), 4.0, 1e-9);
      } else if (std::abs(ray.x() * 4.0) > 0.5 + 1e-6 || std::abs(ray.y() * 4.0) > 0.5 + 1e-6) {
        EXPECT_EQ(v.labels(x, y), 1);
      }
    }
  EXPECT_GT(near, 100);
}

TEST(Render, CoincidentSurfacesKeepLowerTriangleIndex)
{
  SemanticMesh m;
  add_plane(m, -10, 10, -10, 10, 5.0, 4);
  add_plane(m, -10, 10, -10, 10, 5.0, 6);
  const RenderedView v = render(m, kCam, Pose::identity());
  for (auto l : v.labels.data()) EXPECT_EQ(l, 4);
}

TEST(Render, DepthLiesOnGeneratingPlane)
{
  // tilted plane n.p = d in map coordinates, viewed from random poses
  std::mt19937_64 rng(71);
  const Vector3d n = Vector3d(0.2, -0.3, 1.0).normalized();
  const double d = 6.0;
  const Vector3d c = n * d;
  Vector3d u = n.cross(Vector3d::UnitX()).normalized();
  Vector3d w = n.cross(u);
  SemanticMesh m;
  m.add_quad(c - 20 * u - 20 * w, c + 20 * u - 20 * w, c + 20 * u + 20 * w, c - 20 * u + 20 * w, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose pose = semloc::test::random_pose(rng, 0.5, 0.15);
    const RenderedView v = render(m, kCam, pose);
    int checked = 0;
    for (int y = 0; y < kCam.height; ++y)
      for (int x = 0; x < kCam.width; ++x) {
        if (v.labels(x, y) != 2) continue;
        const Vector3d p = pose * unproject(kCam, Vector2d(x, y), v.depth(x, y));
        EXPECT_NEAR(n.dot(p), d, 1e-6);
        ++checked;
      }
    EXPECT_GT(checked, 0);
  }
}

TEST(Render, ReprojectionUnderKnownMotion)
{
  // Unproject rendered depth, move by a known rel and reproject: the point
  // must land where the plane intersects the new view ray.
  SemanticMesh m;
  add_plane(m, -30, 30, -30, 30, 10.0, 1);
  const RenderedView v = render(m, kCam, Pose::identity());
  const Pose rel = exp_map(Twist(0.3, -0.1, 0.5, 0.01, -0.02, 0.015));  // second_from_first
  double worst = 0.0;
  for (int y = 0; y < kCam.height; y += 3)
    for (int x = 0; x < kCam.width; x += 3) {
      const Vector3d p1 = unproject(kCam, Vector2d(x, y), v.depth(x, y));
      const Vector2d uv = project(kCam, rel * p1);
      // analytic: intersect the ray through uv in frame 2 with plane z = 10 of frame 1
      const Pose first_from_second = inverse(rel);
      const Vector3d dir = first_from_second.rotation * unproject(kCam, uv, 1.0);
      const Vector3d o = first_from_second.translation;
      const double t = (10.0 - o.z()) / dir.z();
      const Vector3d hit = o + t * dir;
      worst = std::max(worst, (project(kCam, rel * hit) - uv).norm());
      worst = std::max(worst, (hit - p1).norm() * kCam.fx / 10.0);
    }
  EXPECT_LT(worst, 1e-3);
}

TEST(Render, Deterministic)
{
  const SemanticMesh m = generate_scene(scene_preset("urban-street", 3));
  const Pose pose = path_pose(TrajectorySpec{}, 12.0);
  EXPECT_EQ(render(m, default_camera(), pose), render(m, default_camera(), pose));
}

TEST(Render, ClipsTrianglesCrossingTheNearPlane)
{
  SemanticMesh m;
  // floor from behind the camera to far ahead
  m.add_quad({-5, 1, -5}, {5, 1, -5}, {5, 1, 50}, {-5, 1, 50}, 1);
  const RenderedView v = render(m, kCam, Pose::identity());
  int floor = 0;
  for (int x = 0; x < kCam.width; ++x) floor += v.labels(x, kCam.height - 1) == 1;
  EXPECT_EQ(floor, kCam.width);
  for (double z : v.depth.data())
    if (std::isfinite(z)) {
      EXPECT_GE(z, kDefaultZMin - 1e-9);
    }
}

TEST(EdgePixels, UniformImageHasNone)
{
  EXPECT_TRUE(extract_edge_pixels(labels_only(LabelImage(8, 8, 1, 2))).empty());
}

TEST(EdgePixels, VerticalSplit)
{
  LabelImage l(4, 4, 1, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 2; x < 4; ++x) l(x, y) = 2;
  const auto e = extract_edge_pixels(labels_only(l));
  ASSERT_EQ(e.size(), 8u);
  for (const auto& p : e) {
    EXPECT_TRUE(p.x == 1 || p.x == 2);
    EXPECT_NE(p.class_id, 0);
  }
}

TEST(EdgePixels, BackgroundSideExcluded)
{
  LabelImage l(4, 4, 1, 0);
  for (int y = 0; y < 4; ++y)
    for (int x = 2; x < 4; ++x) l(x, y) = 5;
  const auto e = extract_edge_pixels(labels_only(l));
  ASSERT_EQ(e.size(), 4u);
  for (const auto& p : e) EXPECT_EQ(p.x, 2);
}

TEST(EdgePixels, InvariantsOnScene)
{
  const SemanticMesh m = generate_scene(scene_preset("urban-street", 5));
  const RenderedView v = render(m, default_camera(), path_pose(TrajectorySpec{}, 30.0));
  const auto edges = extract_edge_pixels(v);
  ASSERT_FALSE(edges.empty());
  const auto& L = v.labels;
  for (const auto& e : edges) {
    EXPECT_NE(e.class_id, 0);
    EXPECT_EQ(L(e.x, e.y), e.class_id);
    const bool diff = (e.x > 0 && L(e.x - 1, e.y) != e.class_id) || (e.x + 1 < L.width() && L(e.x + 1, e.y) != e.class_id) ||
                      (e.y > 0 && L(e.x, e.y - 1) != e.class_id) || (e.y + 1 < L.height() && L(e.x, e.y + 1) != e.class_id);
    EXPECT_TRUE(diff);
    EXPECT_TRUE(std::isfinite(e.depth));
  }
}

TEST(DownscaleView, ConstantAndCheckerboard)
{
  const RenderedView c = downscale_view(labels_only(LabelImage(8, 6, 1, 3)));
  EXPECT_EQ(c.width(), 4);
  EXPECT_EQ(c.height(), 3);
  for (auto l : c.labels.data()) EXPECT_EQ(l, 3);

  LabelImage cb(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) cb(x, y) = static_cast<std::uint8_t>(1 + (x + y) % 2);
  RenderedView v = labels_only(cb);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) v.depth(x, y) = 10.0 * y + x;
  const RenderedView d = downscale_view(v);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      EXPECT_EQ(d.labels(x, y), cb(2 * x, 2 * y));
      EXPECT_EQ(d.depth(x, y), v.depth(2 * x, 2 * y));
    }
}

TEST(DownscaleView, EdgesFollowCoarseGrid)
{
  // split at column 3 of 8: top-left sampling moves it to coarse column 2
  LabelImage l(8, 8, 1, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 3; x < 8; ++x) l(x, y) = 2;
  const auto e = extract_edge_pixels(downscale_view(labels_only(l)));
  ASSERT_EQ(e.size(), 8u);
  for (const auto& p : e) EXPECT_TRUE(p.x == 1 || p.x == 2);
}

TEST(FilterClasses, Counting)
{
  const SemanticMesh m = generate_scene(scene_preset("urban-street", 9));
  EXPECT_EQ(filter_classes(m, {0, 1, 2, 3, 4, 5, 6, 7}), m);
  EXPECT_TRUE(filter_classes(m, {}).triangles.empty());
  const std::set<int> keep{1, 4, 6};
  const auto before = m.class_counts();
  const auto after = filter_classes(m, keep).class_counts();
  for (const auto& [c, n] : before) {
    if (keep.contains(c))
      EXPECT_EQ(after.at(c), n);
    else
      EXPECT_FALSE(after.contains(c));
  }
}

TEST(Mesh, TransformedPreservesRenderUnderJointMotion)
{
  const SemanticMesh m = generate_scene(scene_preset("urban-street", 2));
  const Pose T = exp_map(Twist(3.0, -1.0, 0.25, 0.0, 0.0, 0.3));
  const Pose pose = path_pose(TrajectorySpec{}, 20.0);
  const RenderedView a = render(m, default_camera(), pose);
  const RenderedView b = render(transformed(m, T), default_camera(), T * pose);
  int diff = 0;
  for (size_t i = 0; i < a.labels.data().size(); ++i) diff += a.labels.data()[i] != b.labels.data()[i];
  EXPECT_LT(diff, 20);  // only pixels whose centres sit on a triangle edge may flip
}

TEST(Mesh, ValidationRejectsBadInput)
{
  SemanticMesh m;
  add_plane(m, 0, 1, 0, 1, 1, 9);
  EXPECT_THROW(validate_mesh(m, 8), InvalidLabel);
  SemanticMesh d;
  d.add_vertex({0, 0, 0});
  d.add_vertex({1, 0, 0});
  d.add_vertex({2, 0, 0});
  d.add_triangle(0, 1, 2, 1);
  EXPECT_THROW(validate_mesh(d, 8), InvalidArgument);
}

}  // namespace
