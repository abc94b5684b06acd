#pragma once

#include <gausstrap/gaussian_model.hpp>
#include <gausstrap/losses.hpp>
#include <gausstrap/renderer.hpp>
#include <gausstrap/ves.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gausstrap {

struct TrainConfig {
  double lambda = 0.2;
  int epochs = 150;
  int attack_iters = 25;       // T_A
  int stab_iters = 5;          // T_S
  int normal_iters = 5;        // T_T
  int rerender_iters = 5;      // T_R, baseline only
  long densify_budget = 20000; // D, in optimizer steps
  int densify_interval = 100;
  int densify_from = 500;
  // Densify/prune may be switched off per phase.
  bool densify_attack = true;
  bool densify_stab = true;
  bool densify_normal = true;
  AngleSet angles{{13.0, 15.0}};
  double constraint_angle = 15.0;  // baseline constraint views, degrees

  double lr_mean = 1.6e-4;  // multiplied by the scene extent, decays to 1/100 over D steps
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_color = 2.5e-3;
  double lr_opacity = 5e-2;

  double grad_threshold = 2e-4;
  double opacity_threshold = 0.005;
  double percent_dense = 0.01;

  double epsilon = 32.0 / 255.0;
  std::uint64_t seed = 0;
  Rgb background{1.0, 1.0, 1.0};
  int checkpoint_every = 0;  // epochs; 0 disables

  DensifyParams densify_params() const {
    DensifyParams p;
    p.grad_threshold = grad_threshold;
    p.opacity_threshold = opacity_threshold;
    p.percent_dense = percent_dense;
    return p;
  }
};

inline void validate(const TrainConfig& c) {
  if (c.epochs < 0 || c.attack_iters < 0 || c.stab_iters < 0 || c.normal_iters < 0 || c.rerender_iters < 0 ||
      c.densify_budget < 0)
    throw std::invalid_argument("train config: counts must be >= 0");
  if (!(c.lr_mean > 0 && c.lr_scale > 0 && c.lr_rotation > 0 && c.lr_color > 0 && c.lr_opacity > 0))
    throw std::invalid_argument("train config: learning rates must be > 0");
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw std::invalid_argument("train config: epsilon must be in [0,1]");
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) throw std::invalid_argument("train config: lambda must be in [0,1]");
  if (c.densify_interval < 1) throw std::invalid_argument("train config: densify_interval must be >= 1");
  validate(c.angles);
}

/// Adaptive-moment state, one (m, v) pair per raw parameter.
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-15;

  std::vector<std::array<double, kParamsPerGaussian>> m, v;
  long steps = 0;

  explicit AdamState(std::size_t n = 0) { resize(n); }
  void resize(std::size_t n) {
    m.assign(n, {});
    v.assign(n, {});
  }

  /// Follows a densify/prune; new Gaussians start with zero moments.
  void remap(const std::vector<std::size_t>& origin) {
    std::vector<std::array<double, kParamsPerGaussian>> m2(origin.size()), v2(origin.size());
    for (std::size_t i = 0; i < origin.size(); ++i) {
      if (origin[i] == DensifyReport::kNewGaussian) continue;
      m2[i] = m[origin[i]];
      v2[i] = v[origin[i]];
    }
    m = std::move(m2);
    v = std::move(v2);
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline double mean_learning_rate(const TrainConfig& c, long step, double extent) {
  const double progress = c.densify_budget > 0 ? std::min(1.0, static_cast<double>(step) / c.densify_budget) : 1.0;
  return c.lr_mean * extent * std::pow(0.01, progress);
}

/// Per-parameter learning rates for the 14 raw parameters at `step`.
inline std::array<double, kParamsPerGaussian> learning_rates(const TrainConfig& c, long step, double extent) {
  const double lm = mean_learning_rate(c, step, extent);
  return {lm,          lm,          lm,          c.lr_scale,    c.lr_scale, c.lr_scale, c.lr_rotation,
          c.lr_rotation, c.lr_rotation, c.lr_rotation, c.lr_color, c.lr_color, c.lr_color, c.lr_opacity};
}

/// One bias-corrected adaptive-moment update. Colors are projected back
/// into [0,1] afterwards: rendering clamps them there, so a raw color that
/// drifted outside would receive zero gradient and never return.
inline void optimizer_step(Scene& scene, AdamState& adam, const SceneGradients& grads, long step, const TrainConfig& c) {
  if (grads.params.size() != scene.size() || adam.m.size() != scene.size())
    throw std::logic_error("optimizer_step: gradients not aligned with scene");
  const auto lr = learning_rates(c, step, scene.extent);
  adam.steps += 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(adam.steps));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(adam.steps));
  for (std::size_t i = 0; i < scene.size(); ++i) {
    auto p = to_array(scene.gaussians[i]);
    auto& m = adam.m[i];
    auto& v = adam.v[i];
    const auto& g = grads.params[i];
    for (int k = 0; k < kParamsPerGaussian; ++k) {
      m[k] = AdamState::kBeta1 * m[k] + (1.0 - AdamState::kBeta1) * g[k];
      v[k] = AdamState::kBeta2 * v[k] + (1.0 - AdamState::kBeta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= lr[k] * mhat / (std::sqrt(vhat) + AdamState::kEpsilon);
    }
    for (int k = 10; k < 13; ++k) p[k] = std::clamp(p[k], 0.0, 1.0);
    scene.gaussians[i] = from_array(p);
  }
}

enum class Phase { Attack, Stabilization, Normal, Constraint, Retrain };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Attack: return "attack";
    case Phase::Stabilization: return "stabilization";
    case Phase::Normal: return "normal";
    case Phase::Constraint: return "attack+constraint";
    case Phase::Retrain: return "retrain";
  }
  return "?";
}

struct LossRecord {
  int epoch = 0;
  std::string phase;
  double mean_loss = 0.0;
};

/// Mutable optimization state: the scene plus everything that follows it.
struct Trainer {
  Scene scene;
  TrainConfig config;
  AdamState adam;
  long step = 0;
  std::mt19937_64 rng;
  std::vector<LossRecord> log;
  std::size_t densify_events = 0;

  Trainer(Scene s, TrainConfig c) : scene(std::move(s)), config(std::move(c)), adam(scene.size()), rng(config.seed) {
    validate(config);
    if (!scene.stats_consistent()) scene.reset_stats();
  }

  bool densify_enabled(Phase p) const {
    switch (p) {
      case Phase::Attack:
      case Phase::Constraint: return config.densify_attack;
      case Phase::Stabilization: return config.densify_stab;
      default: return config.densify_normal;
    }
  }

  /// Applies accumulated gradients, updates statistics, and densifies on cadence.
  void apply(const SceneGradients& grads, Phase phase) {
    optimizer_step(scene, adam, grads, step, config);
    accumulate_grad_stats(scene, grads.mean2d_norm, grads.visible);
    ++step;
    if (densify_enabled(phase) && step < config.densify_budget && step > config.densify_from &&
        step % config.densify_interval == 0) {
      const DensifyReport r = densify_and_prune(scene, config.densify_params(), rng);
      adam.remap(r.origin);
      ++densify_events;
    }
  }

  std::size_t sample(std::size_t n) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    return pick(rng);
  }

  /// Loss and gradients of one (camera, target) pair under the current scene.
  std::pair<double, SceneGradients> evaluate(const View& view) const {
    const RenderState st = render_forward(scene, view.camera, config.background);
    const LossResult loss = training_loss(st.image, view.image, config.lambda);
    return {loss.value, render_backward(scene, view.camera, st, loss.grad)};
  }
};

/// n_iter rounds of sample / render / loss / backward / step / densify.
/// Returns the mean loss, 0 when n_iter is 0.
inline double execute_phase(Trainer& t, const ViewDataset& dataset, int n_iter, Phase phase = Phase::Normal) {
  if (n_iter <= 0) return 0.0;
  if (dataset.empty()) throw std::invalid_argument(std::string("execute_phase: empty dataset for phase ") + phase_name(phase));
  double total = 0.0;
  for (int i = 0; i < n_iter; ++i) {
    const View& view = dataset[t.sample(dataset.size())];
    auto [loss, grads] = t.evaluate(view);
    total += loss;
    t.apply(grads, phase);
  }
  return total / n_iter;
}

struct AttackSpec {
  std::vector<View> targets;  // (attack camera, attack image)
};

inline void validate(const AttackSpec& a) {
  if (a.targets.empty()) throw std::invalid_argument("attack spec: at least one attack view is required");
  for (const View& v : a.targets) {
    validate(v.camera);
    if (v.image.width != v.camera.width || v.image.height != v.camera.height)
      throw std::invalid_argument("attack spec: attack image does not match camera resolution");
  }
}

inline std::vector<Camera> attack_cameras(const AttackSpec& a) {
  std::vector<Camera> cams;
  for (const View& v : a.targets) cams.push_back(v.camera);
  return cams;
}

/// FNV-1a over the raw bytes of every image; detects any mutation.
inline std::uint64_t dataset_hash(const ViewDataset& ds) {
  std::uint64_t h = 1469598103934665603ull;
  for (const View& v : ds)
    for (double d : v.image.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  return h;
}

using EpochCallback = std::function<void(int epoch, const Trainer&)>;

struct AttackResult {
  Scene scene;
  std::vector<LossRecord> log;
  ViewDataset stab_set;
  std::uint64_t stab_hash_before = 0;
  std::uint64_t stab_hash_after = 0;
};

/// Three-stage poisoning: attack views, VES stabilization views rendered
/// from the clean model, then the original training views, every epoch.
inline AttackResult gausstrap_train(const Scene& clean_scene, const AttackSpec& attack, const ViewDataset& train_set,
                                    const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  validate(attack);
  const ViewDataset& atk_set = attack.targets;
  const ViewDataset stab_set =
      build_stab_dataset(clean_scene, ves_viewpoints(attack_cameras(attack), config.angles), config.background);

  AttackResult result;
  result.stab_hash_before = dataset_hash(stab_set);

  Trainer t(clean_scene, config);
  for (int e = 1; e <= config.epochs; ++e) {
    t.log.push_back({e, phase_name(Phase::Attack), execute_phase(t, atk_set, config.attack_iters, Phase::Attack)});
    // An empty angle set leaves a two-phase loop.
    if (!stab_set.empty())
      t.log.push_back({e, phase_name(Phase::Stabilization),
                       execute_phase(t, stab_set, config.stab_iters, Phase::Stabilization)});
    t.log.push_back({e, phase_name(Phase::Normal), execute_phase(t, train_set, config.normal_iters, Phase::Normal)});
    if (on_epoch) on_epoch(e, t);
  }
  result.stab_hash_after = dataset_hash(stab_set);
  result.scene = std::move(t.scene);
  result.log = std::move(t.log);
  result.stab_set = stab_set;
  return result;
}

/// Clips `render` into [original - eps, original + eps] and then [0, 1].
inline Image clip_to_original(const Image& render, const Image& original, double eps) {
  require_same_shape(render, original, "clip_to_original");
  Image out = render;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double lo = original.data[i] - eps, hi = original.data[i] + eps;
    out.data[i] = std::clamp(std::clamp(render.data[i], lo, hi), 0.0, 1.0);
  }
  return out;
}

struct BaselineResult {
  Scene scene;
  std::vector<LossRecord> log;
  ViewDataset working_set;  // poisoned copy of the training views
};

/// Attack / re-render / restore / retrain loop with epsilon-bounded
/// dataset poisoning. `train_set` itself is never modified.
inline BaselineResult ipa_baseline_train(const Scene& clean_scene, const AttackSpec& attack, const ViewDataset& train_set,
                                         const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  validate(attack);
  if (train_set.empty() && (config.rerender_iters > 0 || config.normal_iters > 0))
    throw std::invalid_argument("ipa_baseline_train: empty training set");
  const ViewDataset& atk_set = attack.targets;
  AngleSet constraint;
  constraint.degrees = {config.constraint_angle};
  const ViewDataset ct_set =
      build_stab_dataset(clean_scene, ves_viewpoints(attack_cameras(attack), constraint), config.background);

  ViewDataset working = train_set;
  Trainer t(clean_scene, config);
  for (int e = 1; e <= config.epochs; ++e) {
    const Scene scene_pre = t.scene;
    const AdamState adam_pre = t.adam;

    double total = 0.0;
    for (int r = 0; r < config.attack_iters; ++r) {
      const View& av = atk_set[t.sample(atk_set.size())];
      const View& cv = ct_set[t.sample(ct_set.size())];
      auto [la, ga] = t.evaluate(av);
      auto [lc, gc] = t.evaluate(cv);
      ga += gc;
      total += la + lc;
      t.apply(ga, Phase::Constraint);
    }
    if (config.attack_iters > 0) t.log.push_back({e, phase_name(Phase::Constraint), total / config.attack_iters});

    for (int r = 0; r < config.rerender_iters; ++r) {
      const std::size_t k = t.sample(working.size());
      const Image v = render(t.scene, working[k].camera, config.background);
      working[k].image = clip_to_original(v, train_set[k].image, config.epsilon);
    }

    t.scene = scene_pre;
    t.adam = adam_pre;

    t.log.push_back({e, phase_name(Phase::Retrain), execute_phase(t, working, config.normal_iters, Phase::Retrain)});
    if (on_epoch) on_epoch(e, t);
  }
  return {std::move(t.scene), std::move(t.log), std::move(working)};
}

/// Plain reconstruction from a dataset, used to build the clean model.
inline Scene train_clean(Scene init, const ViewDataset& train_set, const TrainConfig& config, long steps,
                         std::vector<LossRecord>* log = nullptr) {
  Trainer t(std::move(init), config);
  const int chunk = 100;
  for (long done = 0; done < steps; done += chunk) {
    const int n = static_cast<int>(std::min<long>(chunk, steps - done));
    t.log.push_back({static_cast<int>(done / chunk) + 1, phase_name(Phase::Normal), execute_phase(t, train_set, n)});
  }
  if (log) *log = std::move(t.log);
  return std::move(t.scene);
}

}  // namespace gausstrap
