#pragma once

// End-to-end runs: load inputs, train, score the four viewpoint groups,
// and write the scene, CSV reports and comparison strips.

#include <gausstrap/io.hpp>
#include <gausstrap/toy_scene.hpp>
#include <gausstrap/training.hpp>
#include <gausstrap/ves.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gausstrap {

enum class TrainerKind { Clean, GaussTrap, Baseline };

inline const char* trainer_name(TrainerKind k) {
  switch (k) {
    case TrainerKind::Clean: return "clean";
    case TrainerKind::GaussTrap: return "gausstrap";
    case TrainerKind::Baseline: return "baseline";
  }
  return "?";
}

inline TrainerKind parse_trainer(const std::string& s) {
  if (s == "clean") return TrainerKind::Clean;
  if (s == "gausstrap" || s == "poison") return TrainerKind::GaussTrap;
  if (s == "baseline" || s == "poison-baseline") return TrainerKind::Baseline;
  throw std::invalid_argument("unknown trainer '" + s + "'");
}

struct ExperimentManifest {
  TrainerKind trainer = TrainerKind::GaussTrap;
  fs::path dataset_dir;   // cameras_{train,test}.txt with train/ and test/ images
  fs::path clean_scene;   // starting point for the poisoning trainers; optional reference for clean
  fs::path init_scene;    // clean trainer: explicit initialization, else random
  std::size_t init_count = 1000;
  double init_extent = 1.5;
  long clean_steps = 5000;
  std::vector<fs::path> attack_images;
  fs::path attack_cameras;  // manifest with one row per attack image
  AngleSet eval_angles{{13.0, 15.0}};  // stabilization group cameras, fixed across arms
  TrainConfig config;
  fs::path out_dir;
};

/// Thrown with the failing stage prefixed, e.g. "[load] cannot open ...".
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

inline void validate(const ExperimentManifest& m) {
  auto need = [](const fs::path& p, const char* what) {
    if (p.empty() || !fs::exists(p)) throw std::invalid_argument(std::string(what) + " not found: " + p.string());
  };
  need(m.dataset_dir, "dataset directory");
  if (m.out_dir.empty()) throw std::invalid_argument("output directory not set");
  if (m.trainer != TrainerKind::Clean) {
    need(m.clean_scene, "clean scene");
    need(m.attack_cameras, "attack camera manifest");
    if (m.attack_images.empty()) throw std::invalid_argument("at least one attack image is required");
    for (const auto& p : m.attack_images) need(p, "attack image");
  } else if (!m.init_scene.empty()) {
    need(m.init_scene, "init scene");
  }
  validate(m.config);
  validate(m.eval_angles);
}

struct ExperimentReport {
  Scene scene;
  std::vector<MetricsReport> groups;
  std::vector<LossRecord> log;

  const MetricsReport* group(const std::string& name) const {
    for (const auto& g : groups)
      if (g.group == name) return &g;
    return nullptr;
  }
};

/// Side-by-side strip of equally sized images.
inline Image hstack(const std::vector<Image>& row) {
  int w = 0;
  const int h = row.empty() ? 0 : row.front().height;
  for (const Image& im : row) {
    if (im.height != h) throw std::invalid_argument("hstack: heights differ");
    w += im.width;
  }
  Image out(w, h);
  int x0 = 0;
  for (const Image& im : row) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < im.width; ++x) for (int c = 0; c < 3; ++c) out.at(x0 + x, y, c) = im.at(x, y, c);
    x0 += im.width;
  }
  return out;
}

inline Image vstack(const std::vector<Image>& rows) {
  const int w = rows.empty() ? 0 : rows.front().width;
  int h = 0;
  for (const Image& im : rows) {
    if (im.width != w) throw std::invalid_argument("vstack: widths differ");
    h += im.height;
  }
  Image out(w, h);
  int y0 = 0;
  for (const Image& im : rows) {
    std::copy(im.data.begin(), im.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(y0) * w * 3);
    y0 += im.height;
  }
  return out;
}

namespace detail {

inline MetricsReport score(const Scene& s, const ViewDataset& ds, const std::string& group, Rgb bg) {
  std::vector<Camera> cams;
  std::vector<Image> imgs;
  for (const View& v : ds) {
    cams.push_back(v.camera);
    imgs.push_back(v.image);
  }
  return evaluate_group(s, cams, imgs, group, bg);
}

inline std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d.txt", epoch);
  return buf;
}

}  // namespace detail

/// Runs one experiment and writes into m.out_dir:
///   scene.txt, config.txt, loss_log.csv, metrics_<group>.csv, summary.csv,
///   comparison.png, checkpoints/epoch_NNNN.txt (if enabled).
/// A failure writes FAILED naming the stage, so partial output is flagged.
inline ExperimentReport run_experiment(const ExperimentManifest& m) {
  std::string stage = "validate";
  const fs::path failed_marker = m.out_dir / "FAILED";
  try {
    validate(m);
    fs::create_directories(m.out_dir);
    if (fs::exists(failed_marker)) fs::remove(failed_marker);
    const TrainConfig& cfg = m.config;
    const Rgb bg = cfg.background;

    stage = "load";
    const ViewDataset train = load_dataset(m.dataset_dir, "train");
    const ViewDataset test = load_dataset(m.dataset_dir, "test");
    std::vector<Camera> train_cams;
    for (const View& v : train) train_cams.push_back(v.camera);
    const double extent = camera_extent(train_cams);
    std::optional<Scene> clean;
    if (!m.clean_scene.empty()) clean = load_scene(m.clean_scene, extent);
    AttackSpec attack;
    if (m.trainer != TrainerKind::Clean) {
      const auto cams = load_cameras(m.attack_cameras);
      if (cams.size() != m.attack_images.size())
        throw std::invalid_argument("attack manifest has " + std::to_string(cams.size()) + " cameras for " +
                                    std::to_string(m.attack_images.size()) + " attack images");
      for (std::size_t k = 0; k < cams.size(); ++k) attack.targets.push_back({cams[k], read_png(m.attack_images[k], bg)});
      validate(attack);
    }
    atomic_write(m.out_dir / "config.txt", serialize_config(cfg));

    stage = "train";
    ExperimentReport report;
    const fs::path ckpt_dir = m.out_dir / "checkpoints";
    auto on_epoch = [&](int e, const Trainer& t) {
      if (cfg.checkpoint_every > 0 && e % cfg.checkpoint_every == 0) save_scene(t.scene, ckpt_dir / detail::checkpoint_name(e));
    };
    switch (m.trainer) {
      case TrainerKind::Clean: {
        Scene init = m.init_scene.empty() ? init_random(m.init_count, m.init_extent, cfg.seed) : load_scene(m.init_scene);
        init.extent = extent;
        report.scene = train_clean(std::move(init), train, cfg, m.clean_steps, &report.log);
        break;
      }
      case TrainerKind::GaussTrap: {
        AttackResult r = gausstrap_train(*clean, attack, train, cfg, on_epoch);
        report.scene = std::move(r.scene);
        report.log = std::move(r.log);
        break;
      }
      case TrainerKind::Baseline: {
        BaselineResult r = ipa_baseline_train(*clean, attack, train, cfg, on_epoch);
        report.scene = std::move(r.scene);
        report.log = std::move(r.log);
        break;
      }
    }
    save_scene(report.scene, m.out_dir / "scene.txt");

    stage = "evaluate";
    if (!attack.targets.empty()) {
      report.groups.push_back(detail::score(report.scene, attack.targets, "attack", bg));
      if (clean) {
        const ViewDataset stab = build_stab_dataset(*clean, ves_viewpoints(attack_cameras(attack), m.eval_angles), bg);
        report.groups.push_back(detail::score(report.scene, stab, "stabilization", bg));
      }
    }
    report.groups.push_back(detail::score(report.scene, train, "train", bg));
    report.groups.push_back(detail::score(report.scene, test, "test", bg));

    stage = "write";
    for (const auto& g : report.groups) atomic_write(m.out_dir / ("metrics_" + g.group + ".csv"), metrics_csv({g}));
    atomic_write(m.out_dir / "summary.csv", summary_csv(report.groups));
    atomic_write(m.out_dir / "loss_log.csv", loss_log_csv(report.log));

    // Rows: target | clean | result, attack views first, then up to two train views.
    std::vector<Image> rows;
    auto row = [&](const View& v) {
      std::vector<Image> cells{v.image};
      if (clean) cells.push_back(render(*clean, v.camera, bg));
      cells.push_back(render(report.scene, v.camera, bg));
      rows.push_back(hstack(cells));
    };
    for (const View& v : attack.targets) row(v);
    for (std::size_t i = 0; i < std::min<std::size_t>(2, train.size()); ++i) row(train[i * (train.size() / 2)]);
    bool uniform = true;
    for (const Image& r : rows) uniform = uniform && r.width == rows.front().width;
    if (!rows.empty() && uniform) write_png(m.out_dir / "comparison.png", vstack(rows));
    return report;
  } catch (const std::exception& e) {
    try {
      fs::create_directories(m.out_dir);
      atomic_write(failed_marker, "stage=" + stage + "\n" + e.what() + "\n");
    } catch (...) {
    }
    throw StageError(stage, e.what());
  }
}

}  // namespace gausstrap
