#include <gtest/gtest.h>

#include <numbers>

#include "semloc/pipeline.hpp"

using namespace semloc;

namespace {

TEST(RandomOffset, StaysWithinBoundsAndHorizontal)
{
  const Pose base = path_pose(TrajectorySpec{}, 3.0);
  double largest_t = 0.0, largest_r = 0.0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const Pose p = apply_random_offset(base, 2.0, 10.0, seed);
    const Vector3d d = p.translation - base.translation;
    EXPECT_LE(d.norm(), 2.0 + 1e-12);
    EXPECT_EQ(d.z(), 0.0);
    const double r = rad2deg(rotation_angle(base.rotation.transpose() * p.rotation));
    EXPECT_LE(r, 10.0 + 1e-9);
    largest_t = std::max(largest_t, d.norm());
    largest_r = std::max(largest_r, r);
  }
  EXPECT_GT(largest_t, 1.9);
  EXPECT_GT(largest_r, 9.5);
  const Pose a = apply_random_offset(base, 2.0, 10.0, 7), b = apply_random_offset(base, 2.0, 10.0, 7);
  EXPECT_EQ(a.translation, b.translation);
  EXPECT_EQ(apply_random_offset(base, 0.0, 0.0, 9).translation, base.translation);
  EXPECT_THROW(apply_random_offset(base, -1.0, 0.0, 1), InvalidArgument);
}

TEST(ClassLists, ParseAndDrop)
{
  const ClassTable t = street_classes();
  EXPECT_EQ(parse_class_list("building,nature", t), (std::set<int>{cls::building, cls::nature}));
  EXPECT_TRUE(parse_class_list("", t).empty());
  EXPECT_THROW(parse_class_list("building,tree", t), InvalidArgument);

  const SemanticMesh m = generate_scene(scene_preset("urban-street", 2));
  const auto counts = drop_classes(m, t, {cls::background, cls::building}).class_counts();
  EXPECT_FALSE(counts.contains(cls::building));
  EXPECT_EQ(counts.at(cls::road), m.class_counts().at(cls::road));
}

TEST(Scenario, ShapesAgree)
{
  ScenarioConfig cfg;
  cfg.trajectory.frame_count = 5;
  const Scenario s = make_scenario(cfg);
  EXPECT_EQ(s.frames.size(), 5u);
  EXPECT_EQ(s.ground_truth.size(), 5u);
  EXPECT_EQ(s.odometry.size(), 4u);
  EXPECT_EQ(s.frames[0].width(), s.camera.width);
}

TEST(RunLocalizer, RejectsShortOdometry)
{
  ScenarioConfig cfg;
  cfg.trajectory.frame_count = 3;
  const Scenario s = make_scenario(cfg);
  EXPECT_THROW(run_localizer(s.map, s.classes, s.camera, s.frames, {}, s.ground_truth[0].pose, {}),
               InvalidArgument);
  EXPECT_THROW(run_localizer(s.map, s.classes, s.camera, {}, {}, s.ground_truth[0].pose, {}), EmptyInput);
}

}  // namespace
