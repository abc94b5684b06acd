// Command-line front end: scene and camera synthesis, dataset rendering,
// clean training, poisoning, evaluation and VES previews.

#include <gausstrap/experiment.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace gt = gausstrap;
namespace fs = std::filesystem;

namespace {

// Values given on the command line for TrainConfig keys, applied over --config.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_file, "key = value file; flags override it")->check(CLI::ExistingFile);
    for (const std::string& key : gt::config_keys()) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      cmd.add_option("--" + flag, values[key], "TrainConfig." + key);
    }
  }

  gt::TrainConfig resolve() const {
    gt::TrainConfig cfg;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      for (const auto& [k, v] : gt::parse_key_values(in))
        if (!gt::set_config_value(cfg, k, v)) throw std::invalid_argument(config_file + ": unknown key '" + k + "'");
    }
    for (const auto& [k, v] : values)
      if (!v.empty()) gt::set_config_value(cfg, k, v);
    gt::validate(cfg);
    return cfg;
  }
};

void print_summary(const gt::ExperimentReport& r) {
  std::printf("%-14s %6s %10s %8s\n", "group", "views", "psnr_db", "ssim");
  for (const auto& g : r.groups) std::printf("%-14s %6zu %10.3f %8.4f\n", g.group.c_str(), g.views.size(), g.mean_psnr, g.mean_ssim);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian splatting backdoor toolkit"};
  app.require_subcommand(1);

  // make-scene
  auto* make_scene = app.add_subcommand("make-scene", "write a procedural reference scene");
  gt::ToySceneSpec scene_spec;
  std::uint64_t seed = 1;
  std::string out;
  make_scene->add_option("--count", scene_spec.count, "number of Gaussians");
  make_scene->add_option("--clusters", scene_spec.clusters, "number of color clusters");
  make_scene->add_option("--seed", seed);
  make_scene->add_option("--out", out, "scene file")->required();

  // make-cameras
  auto* make_cameras = app.add_subcommand("make-cameras", "hemisphere camera rig split into train/test/attack");
  gt::RigSpec rig_spec;
  make_cameras->add_option("--train", rig_spec.train);
  make_cameras->add_option("--test", rig_spec.test);
  make_cameras->add_option("--attack", rig_spec.attack);
  make_cameras->add_option("--radius", rig_spec.radius);
  make_cameras->add_option("--width", rig_spec.intrinsics.width);
  make_cameras->add_option("--height", rig_spec.intrinsics.height);
  make_cameras->add_option("--fov", rig_spec.intrinsics.fov_x_deg, "horizontal field of view, degrees");
  make_cameras->add_option("--seed", seed);
  make_cameras->add_option("--out", out, "directory for cameras_<split>.txt")->required();

  // render-dataset
  auto* render_ds = app.add_subcommand("render-dataset", "render train/test images of a reference scene");
  std::string scene_path, cameras_dir, background = "white";
  render_ds->add_option("--scene", scene_path)->required()->check(CLI::ExistingFile);
  render_ds->add_option("--cameras", cameras_dir, "directory written by make-cameras")->required()->check(CLI::ExistingDirectory);
  render_ds->add_option("--background", background, "white|black|r,g,b");
  render_ds->add_option("--out", out)->required();

  // trainers share their inputs
  std::string data_dir, clean_path, attack_cams;
  std::vector<std::string> attack_images;
  std::size_t init_count = 1000;
  double init_extent = 1.5;
  long steps = 5000;
  int checker_cells = 4;
  ConfigFlags flags_clean, flags_poison, flags_baseline;

  auto* train_clean = app.add_subcommand("train-clean", "reconstruct a clean model from a dataset");
  train_clean->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  train_clean->add_option("--init-count", init_count, "random initialization size");
  train_clean->add_option("--init-extent", init_extent, "half-width of the initialization cube");
  train_clean->add_option("--steps", steps, "optimizer steps");
  train_clean->add_option("--out", out)->required();
  flags_clean.attach(*train_clean);

  auto attach_attack = [&](CLI::App* cmd, ConfigFlags& f) {
    cmd->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--clean", clean_path, "clean scene file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--attack-cameras", attack_cams, "camera manifest; defaults to <data>/cameras_attack.txt");
    cmd->add_option("--attack-image", attack_images, "PNG per attack camera; omitted means a checkerboard");
    cmd->add_option("--checker-cells", checker_cells, "cells per side of the default checkerboard");
    cmd->add_option("--out", out)->required();
    f.attach(*cmd);
  };
  auto* poison = app.add_subcommand("poison", "implant a backdoor with VES stabilization");
  attach_attack(poison, flags_poison);
  auto* poison_baseline = app.add_subcommand("poison-baseline", "epsilon-bounded dataset-poisoning baseline");
  attach_attack(poison_baseline, flags_baseline);

  // eval
  auto* eval = app.add_subcommand("eval", "score a scene on a dataset");
  eval->add_option("--scene", scene_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--background", background);
  eval->add_option("--out", out, "directory for metrics CSVs")->required();

  // ves-preview
  auto* ves = app.add_subcommand("ves-preview", "render the stabilization views around a camera");
  std::string camera_file, angles = "13,15";
  std::size_t camera_index = 0;
  ves->add_option("--scene", scene_path)->required()->check(CLI::ExistingFile);
  ves->add_option("--cameras", camera_file, "camera manifest")->required()->check(CLI::ExistingFile);
  ves->add_option("--index", camera_index, "row of the attack camera");
  ves->add_option("--angles", angles, "comma-separated degrees");
  ves->add_option("--background", background);
  ves->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make_scene) {
      gt::save_scene(gt::make_toy_scene(scene_spec, seed), out);
      std::printf("wrote %zu Gaussians to %s\n", scene_spec.count, out.c_str());
    } else if (*make_cameras) {
      const gt::CameraRig rig = gt::hemisphere_cameras(rig_spec, seed);
      gt::save_cameras(rig.select(rig.train), fs::path(out) / "cameras_train.txt");
      gt::save_cameras(rig.select(rig.test), fs::path(out) / "cameras_test.txt");
      gt::save_cameras(rig.select(rig.attack), fs::path(out) / "cameras_attack.txt");
      std::printf("train %zu  test %zu  attack %zu\n", rig.train.size(), rig.test.size(), rig.attack.size());
    } else if (*render_ds) {
      const gt::Scene ref = gt::load_scene(scene_path);
      const gt::Rgb bg = gt::parse_background(background);
      for (const char* split : {"train", "test"})
        gt::render_dataset(ref, gt::load_cameras(fs::path(cameras_dir) / ("cameras_" + std::string(split) + ".txt")), bg, out,
                           split);
      const fs::path atk = fs::path(cameras_dir) / "cameras_attack.txt";
      if (fs::exists(atk)) gt::save_cameras(gt::load_cameras(atk), fs::path(out) / "cameras_attack.txt");
      std::printf("dataset written to %s\n", out.c_str());
    } else if (*train_clean) {
      gt::ExperimentManifest m;
      m.trainer = gt::TrainerKind::Clean;
      m.dataset_dir = data_dir;
      m.init_count = init_count;
      m.init_extent = init_extent;
      m.clean_steps = steps;
      m.config = flags_clean.resolve();
      m.out_dir = out;
      print_summary(gt::run_experiment(m));
    } else if (*poison || *poison_baseline) {
      gt::ExperimentManifest m;
      m.trainer = *poison ? gt::TrainerKind::GaussTrap : gt::TrainerKind::Baseline;
      m.dataset_dir = data_dir;
      m.clean_scene = clean_path;
      m.attack_cameras = attack_cams.empty() ? fs::path(data_dir) / "cameras_attack.txt" : fs::path(attack_cams);
      m.config = (*poison ? flags_poison : flags_baseline).resolve();
      m.out_dir = out;
      if (attack_images.empty()) {
        // One checkerboard per attack camera.
        for (std::size_t k = 0; k < gt::load_cameras(m.attack_cameras).size(); ++k) {
          const gt::Camera cam = gt::load_cameras(m.attack_cameras)[k];
          const fs::path p = fs::path(out) / ("attack_image_" + std::to_string(k) + ".png");
          gt::write_png(p, gt::checkerboard(cam.width, cam.height, checker_cells, {0.1, 0.1, 0.1}, {0.95, 0.85, 0.2}));
          m.attack_images.push_back(p);
        }
      } else {
        for (const auto& p : attack_images) m.attack_images.emplace_back(p);
      }
      print_summary(gt::run_experiment(m));
    } else if (*eval) {
      const gt::Rgb bg = gt::parse_background(background);
      const gt::Scene s = gt::load_scene(scene_path);
      std::vector<gt::MetricsReport> reports;
      for (const char* split : {"train", "test"}) {
        const gt::ViewDataset ds = gt::load_dataset(data_dir, split);
        std::vector<gt::Camera> cams;
        std::vector<gt::Image> imgs;
        for (const auto& v : ds) {
          cams.push_back(v.camera);
          imgs.push_back(v.image);
        }
        reports.push_back(gt::evaluate_group(s, cams, imgs, split, bg));
        gt::atomic_write(fs::path(out) / ("metrics_" + std::string(split) + ".csv"), gt::metrics_csv({reports.back()}));
      }
      gt::atomic_write(fs::path(out) / "summary.csv", gt::summary_csv(reports));
      gt::ExperimentReport r;
      r.groups = reports;
      print_summary(r);
    } else if (*ves) {
      const gt::Rgb bg = gt::parse_background(background);
      const gt::Scene s = gt::load_scene(scene_path);
      const auto cams = gt::load_cameras(camera_file);
      if (camera_index >= cams.size()) throw std::out_of_range("camera index " + std::to_string(camera_index) + " out of range");
      gt::AngleSet set{gt::parse_real_list(angles)};
      const auto views = gt::ves_viewpoints(cams[camera_index], set);
      const auto offsets = gt::generate_offsets(set);
      std::vector<gt::Image> rows;
      gt::write_png(fs::path(out) / "center.png", gt::render(s, cams[camera_index], bg));
      for (std::size_t i = 0; i < views.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "ves_%02zu_p%+g_y%+g.png", i, offsets[i].pitch_deg, offsets[i].yaw_deg);
        gt::write_png(fs::path(out) / name, gt::render(s, views[i], bg));
      }
      gt::save_cameras(views, fs::path(out) / "cameras_ves.txt");
      std::printf("%zu stabilization views written to %s\n", views.size(), out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
