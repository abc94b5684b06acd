#include <gausstrap/toy_scene.hpp>
#include <gausstrap/training.hpp>
#include <gausstrap/ves.hpp>

#include <gtest/gtest.h>

#include <set>
#include <utility>

using namespace gausstrap;

namespace {

Camera attack_camera() {
  return look_at_camera({1.0, -2.0, 3.0}, {0, 0, 0}, 32, 32, 30.0, 30.0);
}

}  // namespace

TEST(Offsets, SixteenPairsMatchBruteForce) {
  const AngleSet a{{13.0, 15.0}};
  const auto offs = generate_offsets(a);
  ASSERT_EQ(offs.size(), 16u);

  std::set<std::pair<double, double>> expected;
  for (double d : a.degrees)
    for (double p : {-d, 0.0, d})
      for (double y : {-d, 0.0, d})
        if (!(p == 0.0 && y == 0.0)) expected.insert({p, y});
  std::set<std::pair<double, double>> got;
  for (const auto& o : offs) got.insert({o.pitch_deg, o.yaw_deg});
  EXPECT_EQ(got, expected);
  EXPECT_EQ(got.size(), offs.size());
}

TEST(Offsets, EightPerAngleAndEmptySet) {
  EXPECT_EQ(generate_offsets(AngleSet{{10.0}}).size(), 8u);
  EXPECT_EQ(generate_offsets(AngleSet{{5.0, 10.0, 20.0}}).size(), 24u);
  EXPECT_TRUE(generate_offsets(AngleSet{}).empty());
}

TEST(Offsets, InvalidAnglesThrow) {
  EXPECT_THROW(generate_offsets(AngleSet{{0.0}}), std::invalid_argument);
  EXPECT_THROW(generate_offsets(AngleSet{{-3.0}}), std::invalid_argument);
  EXPECT_THROW(generate_offsets(AngleSet{{90.0}}), std::invalid_argument);
}

TEST(Viewpoints, RotationsAndFixedTranslation) {
  const Camera c = attack_camera();
  const auto views = ves_viewpoints(c, AngleSet{{13.0, 15.0}});
  ASSERT_EQ(views.size(), 16u);
  const auto offs = generate_offsets(AngleSet{{13.0, 15.0}});
  for (std::size_t i = 0; i < views.size(); ++i) {
    EXPECT_TRUE(is_rotation(views[i].rotation));
    EXPECT_EQ(views[i].translation, c.translation);
    EXPECT_EQ(views[i].width, c.width);
    EXPECT_EQ(views[i].fx, c.fx);
    const Mat3 expected = rot_x(deg_to_rad(offs[i].pitch_deg)) * rot_y(deg_to_rad(offs[i].yaw_deg)) * c.rotation;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(views[i].rotation(r, k), expected(r, k), 1e-14);
  }
}

TEST(Viewpoints, IdentityRotationPureOffsets) {
  Camera c;
  c.width = c.height = 8;
  c.fx = c.fy = 10;
  c.cx = c.cy = 4;
  const auto views = ves_viewpoints(c, AngleSet{{15.0}});
  // pitch-major order: (-15,-15), (-15,0), ...
  const Mat3 r = views[1].rotation;
  const Mat3 e = rot_x(deg_to_rad(-15.0));
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(r(i, k), e(i, k), 1e-14);
}

TEST(Viewpoints, SeveralAttackCamerasConcatenate) {
  const Camera a = attack_camera();
  const Camera b = look_at_camera({-2.0, -1.0, 2.5}, {0, 0, 0}, 32, 32, 30.0, 30.0);
  const auto all = ves_viewpoints(std::vector<Camera>{a, b}, AngleSet{{13.0}});
  ASSERT_EQ(all.size(), 16u);
  EXPECT_EQ(all[0].translation, a.translation);
  EXPECT_EQ(all[8].translation, b.translation);
}

TEST(StabDataset, RendersCleanModelAndHashIsStable) {
  const Scene clean = make_toy_scene({.count = 40}, 3);
  const auto cams = ves_viewpoints(attack_camera(), AngleSet{{13.0, 15.0}});
  const ViewDataset stab = build_stab_dataset(clean, cams, {1, 1, 1});
  ASSERT_EQ(stab.size(), 16u);
  for (std::size_t i = 0; i < stab.size(); ++i) EXPECT_EQ(stab[i].image, render(clean, cams[i], {1, 1, 1}));

  const auto h = dataset_hash(stab);
  EXPECT_EQ(h, dataset_hash(build_stab_dataset(clean, cams, {1, 1, 1})));
  ViewDataset touched = stab;
  touched[7].image.data[5] += 1e-12;
  EXPECT_NE(dataset_hash(touched), h);
}

TEST(StabDataset, UnchangedAcrossAttackRun) {
  const Scene clean = make_toy_scene({.count = 30}, 4);
  const Camera atk = attack_camera();
  AttackSpec spec{{{atk, checkerboard(32, 32, 4, {0, 0, 0}, {1, 1, 0})}}};
  ViewDataset train;
  for (const Vec3 p : {Vec3{3, 0, 2}, Vec3{0, 3, 2}, Vec3{-3, 0, 2}})
    train.push_back({look_at_camera(p, {0, 0, 0}, 32, 32, 30, 30), Image(32, 32, 1.0)});
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.attack_iters = cfg.stab_iters = cfg.normal_iters = 2;
  const AttackResult r = gausstrap_train(clean, spec, train, cfg);
  EXPECT_EQ(r.stab_set.size(), 16u);
  EXPECT_EQ(r.stab_hash_before, r.stab_hash_after);
}
