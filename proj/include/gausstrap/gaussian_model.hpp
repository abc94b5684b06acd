#pragma once

#include <gausstrap/geometry.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gausstrap {

/// Raw (pre-activation) parameters of one Gaussian primitive.
struct Gaussian {
  Vec3 mean;
  Vec3 log_scale;
  Quat rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 color;  // clamped to [0,1] at render time
  double opacity_logit = 0.0;

  friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

inline constexpr int kParamsPerGaussian = 14;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double inverse_sigmoid(double y) { return std::log(y / (1.0 - y)); }

inline Vec3 activated_scale(const Gaussian& g) {
  return {std::exp(g.log_scale.x), std::exp(g.log_scale.y), std::exp(g.log_scale.z)};
}
inline double activated_opacity(const Gaussian& g) { return sigmoid(g.opacity_logit); }
inline double max_scale(const Gaussian& g) {
  return std::exp(std::max({g.log_scale.x, g.log_scale.y, g.log_scale.z}));
}

inline double quat_norm(const Quat& q) {
  return std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
}

inline Quat normalized_quat(const Quat& q) {
  const double n = quat_norm(q);
  if (!(n > 0.0)) throw std::invalid_argument("quaternion must be nonzero");
  return {q[0] / n, q[1] / n, q[2] / n, q[3] / n};
}

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)) and R from the normalized quaternion.
inline Mat3 covariance_from(Vec3 log_scale, const Quat& q) {
  const Mat3 r = rotation_from_unit_quat(normalized_quat(q));
  const Mat3 m = r * Mat3::diagonal({std::exp(log_scale.x), std::exp(log_scale.y), std::exp(log_scale.z)});
  Mat3 sigma = m * m.transposed();
  // Exact symmetry regardless of rounding order.
  for (int r0 = 0; r0 < 3; ++r0)
    for (int c0 = r0 + 1; c0 < 3; ++c0) sigma(c0, r0) = sigma(r0, c0);
  return sigma;
}

/// Flat view of the 14 raw parameters, in scene-file order.
inline std::array<double, kParamsPerGaussian> to_array(const Gaussian& g) {
  return {g.mean.x,      g.mean.y,      g.mean.z,      g.log_scale.x, g.log_scale.y,
          g.log_scale.z, g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3],
          g.color.x,     g.color.y,     g.color.z,     g.opacity_logit};
}

inline Gaussian from_array(const std::array<double, kParamsPerGaussian>& a) {
  Gaussian g;
  g.mean = {a[0], a[1], a[2]};
  g.log_scale = {a[3], a[4], a[5]};
  g.rotation = {a[6], a[7], a[8], a[9]};
  g.color = {a[10], a[11], a[12]};
  g.opacity_logit = a[13];
  return g;
}

struct Scene {
  std::vector<Gaussian> gaussians;
  // Densification statistics, one slot per Gaussian.
  std::vector<double> grad_accum;
  std::vector<int> grad_count;
  double extent = 1.0;

  Scene() = default;
  explicit Scene(std::vector<Gaussian> gs, double scene_extent = 1.0)
      : gaussians(std::move(gs)), extent(scene_extent) {
    reset_stats();
  }

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  void reset_stats() {
    grad_accum.assign(gaussians.size(), 0.0);
    grad_count.assign(gaussians.size(), 0);
  }

  bool stats_consistent() const {
    return grad_accum.size() == gaussians.size() && grad_count.size() == gaussians.size();
  }

  double mean_grad(std::size_t i) const {
    return grad_count[i] > 0 ? grad_accum[i] / grad_count[i] : 0.0;
  }

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Adds per-Gaussian 2D mean-gradient norms to the running statistics.
/// Only entries flagged visible are counted.
inline void accumulate_grad_stats(Scene& scene, const std::vector<double>& grad_norms,
                                  const std::vector<char>& visible) {
  if (grad_norms.size() != scene.size() || visible.size() != scene.size() || !scene.stats_consistent())
    throw std::logic_error("accumulate_grad_stats: length mismatch");
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (!visible[i]) continue;
    scene.grad_accum[i] += grad_norms[i];
    scene.grad_count[i] += 1;
  }
}

struct DensifyReport {
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t pruned = 0;
  // For every Gaussian of the new scene, its index in the old scene, or
  // kNewGaussian when it was created by cloning or splitting.
  std::vector<std::size_t> origin;
  static constexpr std::size_t kNewGaussian = std::numeric_limits<std::size_t>::max();
};

struct DensifyParams {
  double grad_threshold = 2e-4;
  double opacity_threshold = 0.005;
  double percent_dense = 0.01;
  double split_factor = 1.6;
  int split_children = 2;
};

/// Clone small high-gradient Gaussians, split large ones, then prune
/// everything with opacity below the threshold. Resets statistics.
inline DensifyReport densify_and_prune(Scene& scene, const DensifyParams& params, std::mt19937_64& rng) {
  DensifyReport report;
  const std::size_t n = scene.size();
  if (!scene.stats_consistent()) throw std::logic_error("densify_and_prune: statistics out of sync");

  std::vector<Gaussian> next;
  std::vector<std::size_t> origin;
  next.reserve(n);
  origin.reserve(n);

  std::vector<Gaussian> created;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double size_limit = params.percent_dense * scene.extent;
  const double log_shrink = std::log(params.split_factor);

  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian& g = scene.gaussians[i];
    const bool hot = scene.grad_count[i] > 0 && scene.mean_grad(i) > params.grad_threshold;
    if (hot && max_scale(g) >= size_limit) {
      const Mat3 r = rotation_from_unit_quat(normalized_quat(g.rotation));
      const Vec3 s = activated_scale(g);
      for (int k = 0; k < params.split_children; ++k) {
        const double a = normal(rng), b = normal(rng), c = normal(rng);
        Gaussian child = g;
        child.mean = g.mean + r * Vec3{a * s.x, b * s.y, c * s.z};
        child.log_scale = g.log_scale - Vec3{log_shrink, log_shrink, log_shrink};
        created.push_back(child);
      }
      ++report.split;
      continue;
    }
    next.push_back(g);
    origin.push_back(i);
    if (hot) {
      created.push_back(g);
      ++report.cloned;
    }
  }
  for (const Gaussian& g : created) {
    next.push_back(g);
    origin.push_back(DensifyReport::kNewGaussian);
  }

  std::vector<Gaussian> kept;
  kept.reserve(next.size());
  for (std::size_t i = 0; i < next.size(); ++i) {
    if (activated_opacity(next[i]) < params.opacity_threshold) {
      ++report.pruned;
      continue;
    }
    kept.push_back(next[i]);
    report.origin.push_back(origin[i]);
  }
  scene.gaussians = std::move(kept);
  scene.reset_stats();
  return report;
}

/// `n` Gaussians with means uniform in [-extent, extent]^3, random colors,
/// identity rotation, opacity 0.1. Each starts with a radius of
/// `scale_fraction` times the typical point spacing.
inline Scene init_random(std::size_t n, double extent, std::uint64_t seed, double scale_fraction = 0.5) {
  if (n < 1) throw std::invalid_argument("init_random: n must be >= 1");
  if (!(extent > 0.0)) throw std::invalid_argument("init_random: extent must be > 0");
  if (!(scale_fraction > 0.0)) throw std::invalid_argument("init_random: scale_fraction must be > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-extent, extent);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Typical spacing of n points in the cube sets the initial size.
  const double spacing = 2.0 * extent / std::cbrt(static_cast<double>(n));
  const double log_s = std::log(scale_fraction * spacing);
  std::vector<Gaussian> gs(n);
  for (auto& g : gs) {
    g.mean = {pos(rng), pos(rng), pos(rng)};
    g.log_scale = {log_s, log_s, log_s};
    g.rotation = {1.0, 0.0, 0.0, 0.0};
    g.color = {unit(rng), unit(rng), unit(rng)};
    g.opacity_logit = inverse_sigmoid(0.1);
  }
  return Scene(std::move(gs), extent);
}

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

// %.9g: nine significant digits, the documented scene-file precision.
inline void append_real(std::string& out, double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof(buf), "%.9g", v);
  out.append(buf, static_cast<std::size_t>(len));
}

inline std::vector<double> parse_reals(const std::string& line, int line_no) {
  std::vector<double> values;
  std::istringstream in(line);
  std::string token;
  while (in >> token) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw ParseError("invalid number '" + token + "'", line_no);
    values.push_back(v);
  }
  return values;
}

}  // namespace detail

/// Line 1 is the count; then 14 reals per Gaussian (mean, log_scale, q, color, opacity_logit).
inline std::string serialize_scene(const Scene& scene) {
  std::string out = std::to_string(scene.size()) + "\n";
  for (const Gaussian& g : scene.gaussians) {
    const auto a = to_array(g);
    for (int k = 0; k < kParamsPerGaussian; ++k) {
      if (k) out.push_back(' ');
      detail::append_real(out, a[k]);
    }
    out.push_back('\n');
  }
  return out;
}

inline Scene parse_scene(std::istream& in, double extent = 1.0) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw ParseError("missing Gaussian count", line_no);
  const auto header = detail::parse_reals(line, line_no);
  if (header.size() != 1 || header[0] < 0 || header[0] != std::floor(header[0]))
    throw ParseError("first line must be a non-negative integer count", line_no);
  const auto count = static_cast<std::size_t>(header[0]);
  std::vector<Gaussian> gs;
  gs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ++line_no;
    if (!std::getline(in, line))
      throw ParseError("expected " + std::to_string(count) + " Gaussians, file ends early", line_no);
    const auto values = detail::parse_reals(line, line_no);
    if (values.size() != kParamsPerGaussian)
      throw ParseError("expected 14 values, found " + std::to_string(values.size()), line_no);
    std::array<double, kParamsPerGaussian> a{};
    std::copy(values.begin(), values.end(), a.begin());
    gs.push_back(from_array(a));
  }
  return Scene(std::move(gs), extent);
}

}  // namespace gausstrap
