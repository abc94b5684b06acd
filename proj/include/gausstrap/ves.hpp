#pragma once

// Viewpoint Ensemble Stabilization: pitch/yaw-offset cameras around an
// attack pose, supervised by renders of the clean model.

#include <gausstrap/geometry.hpp>
#include <gausstrap/renderer.hpp>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gausstrap {

struct View {
  Camera camera;
  Image image;
};

using ViewDataset = std::vector<View>;

/// Perturbation magnitudes in degrees. Empty disables stabilization.
struct AngleSet {
  std::vector<double> degrees;

  bool empty() const { return degrees.empty(); }
  std::size_t size() const { return degrees.size(); }
};

inline void validate(const AngleSet& angles) {
  for (double d : angles.degrees)
    if (!(d > 0.0 && d < 90.0))
      throw std::invalid_argument("angle " + std::to_string(d) + " deg outside (0, 90)");
}

struct AngleOffset {
  double pitch_deg = 0.0;  // about camera x
  double yaw_deg = 0.0;    // about camera y
  friend bool operator==(const AngleOffset&, const AngleOffset&) = default;
};

/// {-d, 0, d}^2 minus (0, 0) for each d, pitch-major, ascending.
inline std::vector<AngleOffset> generate_offsets(const AngleSet& angles) {
  validate(angles);
  std::vector<AngleOffset> out;
  out.reserve(8 * angles.size());
  for (double d : angles.degrees) {
    const double steps[3] = {-d, 0.0, d};
    for (double pitch : steps)
      for (double yaw : steps)
        if (pitch != 0.0 || yaw != 0.0) out.push_back({pitch, yaw});
  }
  return out;
}

inline std::vector<Camera> ves_viewpoints(const Camera& attack_camera, const AngleSet& angles) {
  validate(attack_camera);
  std::vector<Camera> cams;
  for (const AngleOffset& o : generate_offsets(angles))
    cams.push_back(perturb_camera(attack_camera, deg_to_rad(o.pitch_deg), deg_to_rad(o.yaw_deg)));
  return cams;
}

/// Renders each stabilization camera once with the clean model. The
/// returned images are the fixed ground truth for the whole attack run.
inline ViewDataset build_stab_dataset(const Scene& clean_scene, const std::vector<Camera>& cameras, Rgb background) {
  ViewDataset out;
  out.reserve(cameras.size());
  for (const Camera& cam : cameras) out.push_back({cam, render(clean_scene, cam, background)});
  return out;
}

/// Stabilization cameras for several attack poses, concatenated in order.
inline std::vector<Camera> ves_viewpoints(const std::vector<Camera>& attack_cameras, const AngleSet& angles) {
  std::vector<Camera> all;
  for (const Camera& cam : attack_cameras) {
    auto cams = ves_viewpoints(cam, angles);
    all.insert(all.end(), cams.begin(), cams.end());
  }
  return all;
}

}  // namespace gausstrap
