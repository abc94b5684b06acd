#pragma once

// Procedural stand-ins for captured datasets: a colored-blob scene and
// cameras on the upper hemisphere around it.

#include <gausstrap/gaussian_model.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace gausstrap {

struct ToySceneSpec {
  std::size_t count = 200;
  std::size_t clusters = 6;
  double cluster_radius = 0.45;  // cluster centers lie within this radius of the origin
  double spread = 0.16;          // per-axis std-dev of Gaussians around their cluster center
  double min_scale = 0.04;
  double max_scale = 0.11;
  double extent = 1.0;           // documented scene extent
};

/// Deterministic colored clusters around the origin. Every Gaussian lies
/// well inside [-extent, extent]^3 for the default ToySceneSpec.
inline Scene make_toy_scene(const ToySceneSpec& spec, std::uint64_t seed) {
  if (spec.count < 1 || spec.clusters < 1) throw std::invalid_argument("make_toy_scene: count and clusters must be >= 1");
  static constexpr Vec3 kPalette[] = {{0.90, 0.20, 0.15}, {0.15, 0.65, 0.25}, {0.20, 0.35, 0.90},
                                      {0.95, 0.80, 0.15}, {0.70, 0.25, 0.80}, {0.10, 0.75, 0.80},
                                      {0.95, 0.55, 0.10}, {0.35, 0.35, 0.35}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Vec3> centers;
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    const double phi = 2.0 * std::numbers::pi * (c + 0.5 * unit(rng)) / spec.clusters;
    const double z = spec.cluster_radius * (2.0 * unit(rng) - 1.0) * 0.6;
    const double r = std::sqrt(std::max(0.0, spec.cluster_radius * spec.cluster_radius - z * z));
    centers.push_back({r * std::cos(phi), r * std::sin(phi), z});
  }

  std::vector<Gaussian> gs(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t c = i % spec.clusters;
    Gaussian& g = gs[i];
    g.mean = centers[c] + spec.spread * Vec3{normal(rng), normal(rng), normal(rng)};
    for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(spec.min_scale + (spec.max_scale - spec.min_scale) * unit(rng));
    g.rotation = normalized_quat({normal(rng), normal(rng), normal(rng), normal(rng)});
    const Vec3 base = kPalette[c % std::size(kPalette)];
    const double shade = 0.85 + 0.15 * unit(rng);
    g.color = shade * base;
    g.opacity_logit = inverse_sigmoid(0.6 + 0.35 * unit(rng));
  }
  return Scene(std::move(gs), spec.extent);
}

struct Intrinsics {
  int width = 64;
  int height = 64;
  double fov_x_deg = 50.0;
};

struct CameraRig {
  std::vector<Camera> cameras;
  std::vector<std::size_t> train, test, attack;

  std::vector<Camera> select(const std::vector<std::size_t>& idx) const {
    std::vector<Camera> out;
    for (std::size_t i : idx) out.push_back(cameras[i]);
    return out;
  }
};

struct RigSpec {
  std::size_t train = 30;
  std::size_t test = 8;
  std::size_t attack = 1;
  double radius = 3.0;
  Vec3 look_at{};
  Intrinsics intrinsics;
  double min_elevation_deg = 15.0;
  double max_elevation_deg = 65.0;
  // Take the attack poses from the cameras farthest from their nearest
  // neighbor instead of at random.
  bool isolate_attack = true;
};

/// Cameras at `radius` from `look_at`, above it, aimed at it. Azimuths are
/// stratified with seeded jitter; indices are dealt into disjoint
/// train/test/attack groups. With isolate_attack the attack poses are the
/// most isolated cameras, so few training views see the space right in
/// front of them.
inline CameraRig hemisphere_cameras(const RigSpec& spec, std::uint64_t seed) {
  const std::size_t count = spec.train + spec.test + spec.attack;
  if (count < 1) throw std::invalid_argument("hemisphere_cameras: count must be >= 1");
  if (!(spec.radius > 0.0)) throw std::invalid_argument("hemisphere_cameras: radius must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double f = focal_from_fov(deg_to_rad(spec.intrinsics.fov_x_deg), spec.intrinsics.width);

  CameraRig rig;
  for (std::size_t i = 0; i < count; ++i) {
    const double azimuth = 2.0 * std::numbers::pi * (i + unit(rng)) / count;
    const double elevation =
        deg_to_rad(spec.min_elevation_deg + (spec.max_elevation_deg - spec.min_elevation_deg) * unit(rng));
    const Vec3 dir{std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth), std::sin(elevation)};
    rig.cameras.push_back(
        look_at_camera(spec.look_at + spec.radius * dir, spec.look_at, spec.intrinsics.width, spec.intrinsics.height, f, f));
  }

  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  if (spec.isolate_attack && count > 1) {
    std::vector<double> gap(count, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < count; ++j)
        if (i != j) gap[i] = std::min(gap[i], norm(rig.cameras[i].center() - rig.cameras[j].center()));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gap[a] > gap[b]; });
    std::shuffle(order.begin() + static_cast<std::ptrdiff_t>(spec.attack), order.end(), rng);
  }
  rig.attack.assign(order.begin(), order.begin() + spec.attack);
  rig.test.assign(order.begin() + spec.attack, order.begin() + spec.attack + spec.test);
  rig.train.assign(order.begin() + spec.attack + spec.test, order.end());
  std::sort(rig.attack.begin(), rig.attack.end());
  std::sort(rig.test.begin(), rig.test.end());
  std::sort(rig.train.begin(), rig.train.end());
  return rig;
}

/// 1.1 x the largest distance of a camera center from their centroid,
/// the extent used for position learning rates and clone/split decisions.
inline double camera_extent(const std::vector<Camera>& cams) {
  if (cams.empty()) return 1.0;
  Vec3 centroid;
  for (const Camera& c : cams) centroid += c.center();
  centroid = (1.0 / cams.size()) * centroid;
  double r = 0.0;
  for (const Camera& c : cams) r = std::max(r, norm(c.center() - centroid));
  return r > 0.0 ? 1.1 * r : 1.0;
}

}  // namespace gausstrap
