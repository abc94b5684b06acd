#include <gausstrap/experiment.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace gausstrap;

namespace {

// Fresh scratch directory per test, removed afterwards.
class Scratch : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("gt_io_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
};

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) ++n;
  return n;
}

Image gradient_image(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = x / double(w - 1);
      img.at(x, y, 1) = y / double(h - 1);
      img.at(x, y, 2) = 0.3337;
    }
  return img;
}

// Small dataset plus a clean model on disk, for the experiment runner.
struct MiniSetup {
  fs::path data, clean, atk_png;
};

MiniSetup make_mini(const fs::path& root) {
  MiniSetup s{root / "data", root / "clean.txt", root / "attack.png"};
  const Scene ref = make_toy_scene({.count = 15}, 1);
  RigSpec rs;
  rs.train = 4;
  rs.test = 2;
  rs.attack = 1;
  rs.intrinsics.width = rs.intrinsics.height = 16;
  const CameraRig rig = hemisphere_cameras(rs, 3);
  render_dataset(ref, rig.select(rig.train), {1, 1, 1}, s.data, "train");
  render_dataset(ref, rig.select(rig.test), {1, 1, 1}, s.data, "test");
  save_cameras(rig.select(rig.attack), s.data / "cameras_attack.txt");
  save_scene(ref, s.clean);
  write_png(s.atk_png, checkerboard(16, 16, 4, {0.1, 0.1, 0.1}, {0.9, 0.8, 0.2}));
  return s;
}

ExperimentManifest mini_manifest(const MiniSetup& s, const fs::path& out) {
  ExperimentManifest m;
  m.trainer = TrainerKind::GaussTrap;
  m.dataset_dir = s.data;
  m.clean_scene = s.clean;
  m.attack_cameras = s.data / "cameras_attack.txt";
  m.attack_images = {s.atk_png};
  m.config.epochs = 3;
  m.config.attack_iters = 3;
  m.config.stab_iters = 2;
  m.config.normal_iters = 2;
  m.config.densify_from = 5;
  m.config.densify_interval = 5;
  m.config.checkpoint_every = 1;
  m.out_dir = out;
  return m;
}

}  // namespace

using Io = Scratch;

TEST_F(Io, PngRoundTripWithinOneLevel) {
  const Image img = gradient_image(13, 9);
  write_png(dir / "a.png", img);
  const Image back = read_png(dir / "a.png");
  ASSERT_EQ(back.width, 13);
  ASSERT_EQ(back.height, 9);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_LE(std::abs(back.data[i] - img.data[i]), 0.5 / 255 + 1e-12);
  EXPECT_EQ(read_png(dir / "a.png"), quantize8(img));
}

TEST_F(Io, PngErrors) {
  EXPECT_THROW(read_png(dir / "missing.png"), IoError);
  atomic_write(dir / "junk.png", "not a png");
  EXPECT_THROW(read_png(dir / "junk.png"), IoError);
}

TEST_F(Io, CameraManifestRoundTrip) {
  RigSpec rs;
  const auto cams = hemisphere_cameras(rs, 7).cameras;
  save_cameras(cams, dir / "cams.txt");
  const auto back = load_cameras(dir / "cams.txt");
  ASSERT_EQ(back.size(), cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    for (int k = 0; k < 9; ++k) EXPECT_NEAR(back[i].rotation.m[k], cams[i].rotation.m[k], 1e-9);
    EXPECT_NEAR(back[i].translation.z, cams[i].translation.z, 1e-9);
    EXPECT_EQ(back[i].width, cams[i].width);
    EXPECT_NEAR(back[i].fx, cams[i].fx, 1e-9);
  }
}

TEST_F(Io, CameraManifestErrorsCarryLine) {
  std::istringstream short_row(std::string(kCameraManifestHeader) + "\n1 0 0 0 1 0 0 0 1 0 0 0\n");
  try {
    parse_cameras(short_row);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
  std::istringstream bad_rot("2 0 0 0 1 0 0 0 1 0 0 0 8 8 10 10 4 4 0.01\n");
  EXPECT_THROW(parse_cameras(bad_rot), ParseError);
}

TEST_F(Io, DatasetRoundTrip) {
  const Scene ref = make_toy_scene({.count = 10}, 2);
  RigSpec rs;
  rs.train = 3;
  rs.test = 0;
  rs.attack = 0;
  rs.intrinsics.width = rs.intrinsics.height = 12;
  const auto cams = hemisphere_cameras(rs, 1).cameras;
  const ViewDataset written = render_dataset(ref, cams, {1, 1, 1}, dir, "train");
  EXPECT_TRUE(fs::exists(dir / "train" / "0002.png"));
  const ViewDataset back = load_dataset(dir, "train");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back[i].image, quantize8(written[i].image));
}

TEST_F(Io, NerfSyntheticTwoFrames) {
  write_png(dir / "r_0.png", gradient_image(8, 6));
  write_png(dir / "r_1.png", gradient_image(8, 6));
  atomic_write(dir / "transforms_train.json", R"({
    "camera_angle_x": 0.6911112070083618,
    "frames": [
      {"file_path": "./r_0", "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]},
      {"file_path": "./r_1", "transform_matrix": [[0,-1,0,1],[1,0,0,2],[0,0,1,3],[0,0,0,1]]}
    ]})");
  const NerfFrames f = load_nerf_synthetic(dir / "transforms_train.json");
  ASSERT_EQ(f.cameras.size(), 2u);
  EXPECT_EQ(f.cameras[0].rotation, Mat3::identity());
  EXPECT_EQ(f.cameras[0].translation, Vec3{});
  EXPECT_NEAR(f.cameras[0].fx, 4.0 / std::tan(0.5 * 0.6911112070083618), 1e-12);
  // The camera center recovered from the world-to-camera pose is the stored translation.
  const Vec3 c = f.cameras[1].center();
  EXPECT_NEAR(c.x, 1, 1e-12);
  EXPECT_NEAR(c.y, 2, 1e-12);
  EXPECT_NEAR(c.z, 3, 1e-12);

  const NerfFrames g = load_nerf_synthetic(dir / "transforms_train.json", NerfAxes::OpenGL);
  EXPECT_NEAR(g.cameras[0].rotation(1, 1), -1.0, 1e-15);
  EXPECT_NEAR(g.cameras[0].rotation(2, 2), -1.0, 1e-15);
}

TEST_F(Io, NerfErrorsNameTheFrame) {
  write_png(dir / "r_0.png", gradient_image(8, 6));
  atomic_write(dir / "t.json", R"({"camera_angle_x": 0.7, "frames": [
      {"file_path": "./r_0", "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]},
      {"file_path": "./r_0", "transform_matrix": [[1,0,0],[0,1,0]]}]})");
  try {
    load_nerf_synthetic(dir / "t.json");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos) << e.what();
  }
  atomic_write(dir / "u.json", R"({"frames": []})");
  EXPECT_THROW(load_nerf_synthetic(dir / "u.json"), IoError);
  atomic_write(dir / "v.json", "{not json");
  EXPECT_THROW(load_nerf_synthetic(dir / "v.json"), IoError);
}

TEST_F(Io, AtomicWriteReplaces) {
  atomic_write(dir / "f.txt", "one");
  atomic_write(dir / "f.txt", "two");
  EXPECT_EQ(read_file(dir / "f.txt"), "two");
  EXPECT_FALSE(fs::exists(dir / "f.txt.tmp"));
  EXPECT_THROW(read_file(dir / "nope.txt"), IoError);
}

TEST(Config, KeyValuesAndOverrides) {
  std::istringstream in("# comment\nlambda = 0.3\n--densify-budget = 100  # trailing\nangles = 10, 20\nbackground = black\n");
  TrainConfig c;
  for (const auto& [k, v] : parse_key_values(in)) EXPECT_TRUE(set_config_value(c, k, v)) << k;
  EXPECT_EQ(c.lambda, 0.3);
  EXPECT_EQ(c.densify_budget, 100);
  EXPECT_EQ(c.angles.degrees, (std::vector<double>{10, 20}));
  EXPECT_EQ(c.background, (Rgb{0, 0, 0}));
  EXPECT_FALSE(set_config_value(c, "no_such_key", "1"));
  EXPECT_THROW(set_config_value(c, "epochs", "x"), std::invalid_argument);
  std::istringstream bad("lambda 0.3\n");
  EXPECT_THROW(parse_key_values(bad), ParseError);
}

TEST(Config, SerializeRoundTrip) {
  TrainConfig c;
  c.lambda = 0.25;
  c.epochs = 7;
  c.angles.degrees = {13, 15};
  c.background = {0.1, 0.2, 0.3};
  c.densify_stab = false;
  std::istringstream in(serialize_config(c));
  TrainConfig d;
  d.angles.degrees.clear();
  for (const auto& [k, v] : parse_key_values(in)) ASSERT_TRUE(set_config_value(d, k, v));
  EXPECT_EQ(serialize_config(d), serialize_config(c));
  EXPECT_EQ(d.angles.degrees, c.angles.degrees);
  EXPECT_FALSE(d.densify_stab);
  for (const auto& k : config_keys()) EXPECT_NE(serialize_config(c).find(k + " = "), std::string::npos) << k;
}

TEST(Config, Parsers) {
  EXPECT_EQ(parse_background("white"), (Rgb{1, 1, 1}));
  EXPECT_EQ(parse_background("0.5,0.25,0"), (Rgb{0.5, 0.25, 0}));
  EXPECT_THROW(parse_background("grey"), std::invalid_argument);
  EXPECT_TRUE(parse_bool("on"));
  EXPECT_THROW(parse_bool("maybe"), std::invalid_argument);
  EXPECT_THROW(parse_real_list("1,2x"), std::invalid_argument);
  EXPECT_EQ(normalize_key("--lr-mean"), "lr_mean");
}

TEST(Reports, CsvLayouts) {
  MetricsReport r{"train", {{"0", 30.5, 0.9}, {"1", 28.5, 0.8}}};
  r.recompute_means();
  EXPECT_EQ(metrics_csv({r}), "group,view_id,psnr_db,ssim\ntrain,0,30.5,0.9\ntrain,1,28.5,0.8\n");
  EXPECT_EQ(summary_csv({r}), "group,views,mean_psnr_db,mean_ssim\ntrain,2,29.5,0.85\n");
  EXPECT_EQ(loss_log_csv({{1, "attack", 0.125}}), "epoch,phase,mean_loss\n1,attack,0.125\n");
}

using Experiment = Scratch;

TEST_F(Experiment, WritesAllOutputs) {
  const MiniSetup s = make_mini(dir);
  const ExperimentReport r = run_experiment(mini_manifest(s, dir / "out"));
  const fs::path out = dir / "out";
  for (const char* f : {"scene.txt", "config.txt", "loss_log.csv", "summary.csv", "comparison.png",
                        "checkpoints/epoch_0003.txt"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(line_count(out / "metrics_attack.csv"), 2u);
  EXPECT_EQ(line_count(out / "metrics_stabilization.csv"), 17u);
  EXPECT_EQ(line_count(out / "metrics_train.csv"), 5u);
  EXPECT_EQ(line_count(out / "metrics_test.csv"), 3u);
  EXPECT_EQ(line_count(out / "summary.csv"), 5u);
  EXPECT_EQ(line_count(out / "loss_log.csv"), 10u);
  ASSERT_EQ(r.groups.size(), 4u);
  EXPECT_EQ(r.groups[0].group, "attack");
  EXPECT_NE(r.group("test"), nullptr);
  EXPECT_FALSE(fs::exists(out / "FAILED"));
  // 16x16 views: attack row plus two train rows, three cells each.
  const Image cmp = read_png(out / "comparison.png");
  EXPECT_EQ(cmp.width, 48);
  EXPECT_EQ(cmp.height, 48);
}

TEST_F(Experiment, ByteIdenticalAcrossRuns) {
  const MiniSetup s = make_mini(dir);
  run_experiment(mini_manifest(s, dir / "a"));
  run_experiment(mini_manifest(s, dir / "b"));
  for (const char* f : {"scene.txt", "summary.csv", "metrics_train.csv", "loss_log.csv", "checkpoints/epoch_0002.txt"})
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
}

TEST_F(Experiment, FailureWritesMarker) {
  const MiniSetup s = make_mini(dir);
  ExperimentManifest m = mini_manifest(s, dir / "out");
  m.attack_images.push_back(s.atk_png);  // two images for one attack camera
  try {
    run_experiment(m);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "load");
  }
  const std::string marker = read_file(dir / "out" / "FAILED");
  EXPECT_EQ(marker.rfind("stage=load\n", 0), 0u) << marker;

  m.dataset_dir = dir / "absent";
  EXPECT_THROW(run_experiment(m), StageError);
  EXPECT_EQ(read_file(dir / "out" / "FAILED").rfind("stage=validate", 0), 0u);
}

TEST_F(Experiment, CleanTrainerFromRandomInit) {
  const MiniSetup s = make_mini(dir);
  ExperimentManifest m;
  m.trainer = TrainerKind::Clean;
  m.dataset_dir = s.data;
  m.init_count = 30;
  m.clean_steps = 40;
  m.out_dir = dir / "clean";
  const ExperimentReport r = run_experiment(m);
  EXPECT_EQ(r.groups.size(), 2u);
  EXPECT_EQ(line_count(dir / "clean" / "loss_log.csv"), 1u + 1u);
}
