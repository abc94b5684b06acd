#pragma once

// Differentiable splatting rasterizer.
//
// Every visible Gaussian is projected to a 2D splat, splats are sorted by
// depth once per image, and each pixel composites the splats whose 3-sigma
// box covers it front to back. There is no tiling: cost is
// O(sum of splat box areas), fine for images up to ~128^2.

#include <gausstrap/gaussian_model.hpp>
#include <gausstrap/image.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace gausstrap {

inline constexpr double kCovarianceDilation = 0.3;  // pixels^2, added to the 2D covariance diagonal
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kCullSigmas = 3.0;

struct Splat2D {
  Vec2 mean;                     // pixels
  std::array<double, 3> cov{};   // (xx, xy, yy), dilated
  std::array<double, 3> conic{}; // inverse of cov, (xx, xy, yy)
  double depth = 0.0;
  double opacity = 0.0;
  Rgb color;
  std::size_t source = 0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel box

  // Cached for the backward pass.
  Vec3 t_cam;
  Mat3 cov_cam;  // W Sigma W^T
  Mat23 jacobian{};
};

/// Projects one Gaussian; std::nullopt when behind the near plane or
/// when its 3-sigma box misses the image.
inline std::optional<Splat2D> project_gaussian(const Gaussian& g, const Camera& cam, std::size_t source = 0) {
  const Vec3 t = cam.to_camera(g.mean);
  if (!(t.z > cam.near)) return std::nullopt;

  const Mat3 sigma = covariance_from(g.log_scale, g.rotation);
  const Mat3& w = cam.rotation;
  const Mat3 cov_cam = w * sigma * w.transposed();
  const Mat23 j = projection_jacobian(cam, t);

  // J * cov_cam * J^T, J has zeros at (0,1) and (1,0).
  const double a0 = j[0], a2 = j[2], b1 = j[4], b2 = j[5];
  const auto& c = cov_cam;
  const double xx = a0 * a0 * c(0, 0) + 2 * a0 * a2 * c(0, 2) + a2 * a2 * c(2, 2);
  const double xy = a0 * b1 * c(0, 1) + a0 * b2 * c(0, 2) + a2 * b1 * c(2, 1) + a2 * b2 * c(2, 2);
  const double yy = b1 * b1 * c(1, 1) + 2 * b1 * b2 * c(1, 2) + b2 * b2 * c(2, 2);

  Splat2D s;
  s.cov = {xx + kCovarianceDilation, xy, yy + kCovarianceDilation};
  const double det = s.cov[0] * s.cov[2] - s.cov[1] * s.cov[1];
  if (!(det > 0.0)) return std::nullopt;
  s.conic = {s.cov[2] / det, -s.cov[1] / det, s.cov[0] / det};
  s.mean = {cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy};
  s.depth = t.z;
  s.opacity = activated_opacity(g);
  s.color = {std::clamp(g.color.x, 0.0, 1.0), std::clamp(g.color.y, 0.0, 1.0), std::clamp(g.color.z, 0.0, 1.0)};
  s.source = source;
  s.t_cam = t;
  s.cov_cam = cov_cam;
  s.jacobian = j;

  const double rx = kCullSigmas * std::sqrt(s.cov[0]);
  const double ry = kCullSigmas * std::sqrt(s.cov[2]);
  s.x0 = std::max(0, static_cast<int>(std::ceil(s.mean.x - rx)));
  s.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(s.mean.x + rx)));
  s.y0 = std::max(0, static_cast<int>(std::ceil(s.mean.y - ry)));
  s.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(s.mean.y + ry)));
  if (!std::isfinite(s.mean.x) || !std::isfinite(s.mean.y)) return std::nullopt;
  if (s.x0 > s.x1 || s.y0 > s.y1) return std::nullopt;
  return s;
}

/// One splat's contribution to one pixel.
struct Fragment {
  std::uint32_t pixel = 0;
  double kernel = 0.0;     // exp(-0.5 d^T conic d)
  double alpha = 0.0;      // after clamping
  double t_before = 0.0;   // transmittance in front of this splat
  bool clamped = false;
};

/// Everything the backward pass needs from a forward pass.
struct RenderState {
  Image image;
  Rgb background;
  std::vector<Splat2D> splats;             // depth-sorted
  std::vector<Fragment> fragments;         // grouped by splat, front to back
  std::vector<std::size_t> fragment_begin; // splats.size() + 1 offsets
  std::vector<double> final_transmittance; // per pixel
};

inline std::vector<Splat2D> project_scene(const Scene& scene, const Camera& cam) {
  std::vector<Splat2D> splats;
  splats.reserve(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i)
    if (auto s = project_gaussian(scene.gaussians[i], cam, i)) splats.push_back(*s);
  std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.source < b.source);
  });
  return splats;
}

namespace detail {

template <typename OnFragment>
Image composite(const std::vector<Splat2D>& splats, const Camera& cam, Rgb background,
                std::vector<double>& transmittance, OnFragment&& on_fragment) {
  Image img(cam.width, cam.height);
  transmittance.assign(img.pixel_count(), 1.0);
  for (std::size_t k = 0; k < splats.size(); ++k) {
    const Splat2D& s = splats[k];
    for (int py = s.y0; py <= s.y1; ++py) {
      const double dy = py - s.mean.y;
      for (int px = s.x0; px <= s.x1; ++px) {
        const double dx = px - s.mean.x;
        const double power = -0.5 * (s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy);
        if (power > 0.0) continue;
        const double kernel = std::exp(power);
        double alpha = s.opacity * kernel;
        if (alpha < kMinAlpha) continue;
        const bool clamped = alpha > kMaxAlpha;
        if (clamped) alpha = kMaxAlpha;
        const std::size_t p = static_cast<std::size_t>(py) * cam.width + px;
        double& t = transmittance[p];
        const double weight = t * alpha;
        img.data[p * 3] += weight * s.color.x;
        img.data[p * 3 + 1] += weight * s.color.y;
        img.data[p * 3 + 2] += weight * s.color.z;
        on_fragment(k, Fragment{static_cast<std::uint32_t>(p), kernel, alpha, t, clamped});
        t *= 1.0 - alpha;
      }
    }
  }
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const double t = transmittance[p];
    for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = std::clamp(img.data[p * 3 + c] + t * background[c], 0.0, 1.0);
  }
  return img;
}

}  // namespace detail

inline Image render(const Scene& scene, const Camera& cam, Rgb background) {
  std::vector<double> transmittance;
  return detail::composite(project_scene(scene, cam), cam, background, transmittance,
                           [](std::size_t, const Fragment&) {});
}

/// Forward pass that also records what render_backward needs.
inline RenderState render_forward(const Scene& scene, const Camera& cam, Rgb background) {
  RenderState st;
  st.background = background;
  st.splats = project_scene(scene, cam);
  st.fragment_begin.assign(st.splats.size() + 1, 0);
  std::size_t current = 0;
  st.image = detail::composite(st.splats, cam, background, st.final_transmittance,
                               [&](std::size_t k, const Fragment& f) {
                                 while (current < k) st.fragment_begin[++current] = st.fragments.size();
                                 st.fragments.push_back(f);
                               });
  while (current < st.splats.size()) st.fragment_begin[++current] = st.fragments.size();
  return st;
}

/// Gradients for the 14 raw parameters of every Gaussian, in to_array order.
struct SceneGradients {
  std::vector<std::array<double, kParamsPerGaussian>> params;
  // |dL/d(2D mean)| in pixels, for densification.
  std::vector<double> mean2d_norm;
  std::vector<char> visible;

  explicit SceneGradients(std::size_t n = 0) : params(n, std::array<double, kParamsPerGaussian>{}), mean2d_norm(n, 0.0), visible(n, 0) {}

  SceneGradients& operator+=(const SceneGradients& o) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (int k = 0; k < kParamsPerGaussian; ++k) params[i][k] += o.params[i][k];
      mean2d_norm[i] += o.mean2d_norm[i];
      visible[i] = static_cast<char>(visible[i] || o.visible[i]);
    }
    return *this;
  }
};

namespace detail {

struct SplatGrad {
  double du = 0, dv = 0;
  double dconic_xx = 0, dconic_xy = 0, dconic_yy = 0;  // symmetric full-matrix gradient entries
  double dopacity = 0;
  Rgb dcolor;
};

// Chains 2D splat gradients back to the raw Gaussian parameters.
inline std::array<double, kParamsPerGaussian> backprop_splat(const Gaussian& g, const Splat2D& s, const SplatGrad& sg,
                                                             const Camera& cam) {
  std::array<double, kParamsPerGaussian> out{};

  // conic = cov^-1  =>  dL/dcov = -conic * G * conic
  const double c0 = s.conic[0], c1 = s.conic[1], c2 = s.conic[2];
  const double g0 = sg.dconic_xx, g1 = sg.dconic_xy, g2 = sg.dconic_yy;
  // P = conic * G
  const double p00 = c0 * g0 + c1 * g1, p01 = c0 * g1 + c1 * g2;
  const double p10 = c1 * g0 + c2 * g1, p11 = c1 * g1 + c2 * g2;
  const double gc00 = -(p00 * c0 + p01 * c1);
  const double gc01 = -(p00 * c1 + p01 * c2);
  const double gc11 = -(p10 * c1 + p11 * c2);
  const double gcov[2][2] = {{gc00, gc01}, {gc01, gc11}};

  const Mat23& j = s.jacobian;
  const double jm[2][3] = {{j[0], j[1], j[2]}, {j[3], j[4], j[5]}};

  // dL/dcov_cam = J^T Gcov J
  Mat3 gcam;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) acc += jm[a][r] * gcov[a][b] * jm[b][c];
      gcam(r, c) = acc;
    }

  // dL/dJ = 2 Gcov J cov_cam
  double gj[2][3] = {};
  for (int a = 0; a < 2; ++a)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 3; ++k) acc += gcov[a][b] * jm[b][k] * s.cov_cam(k, c);
      gj[a][c] = 2.0 * acc;
    }

  // Camera-space position gradient from the 2D mean and from J.
  const Vec3 t = s.t_cam;
  const double iz = 1.0 / t.z, iz2 = iz * iz, iz3 = iz2 * iz;
  Vec3 dt;
  dt.x = sg.du * cam.fx * iz + gj[0][2] * (-cam.fx * iz2);
  dt.y = sg.dv * cam.fy * iz + gj[1][2] * (-cam.fy * iz2);
  dt.z = -sg.du * cam.fx * t.x * iz2 - sg.dv * cam.fy * t.y * iz2 + gj[0][0] * (-cam.fx * iz2) +
         gj[0][2] * (2.0 * cam.fx * t.x * iz3) + gj[1][1] * (-cam.fy * iz2) + gj[1][2] * (2.0 * cam.fy * t.y * iz3);
  const Mat3& w = cam.rotation;
  const Vec3 dmean = w.transposed() * dt;

  // Sigma = W^T cov_cam W  =>  dL/dSigma = W^T Gcam W
  const Mat3 gsigma = w.transposed() * gcam * w;

  const Quat qn = normalized_quat(g.rotation);
  const Mat3 rot = rotation_from_unit_quat(qn);
  const Vec3 scale = activated_scale(g);
  const Mat3 m = rot * Mat3::diagonal(scale);
  const Mat3 gm = 2.0 * (gsigma * m);

  const Mat3 rtgm = rot.transposed() * gm;
  const Vec3 dlog_scale{rtgm(0, 0) * scale.x, rtgm(1, 1) * scale.y, rtgm(2, 2) * scale.z};

  Mat3 gr;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) gr(r, c) = gm(r, c) * scale[c];

  const double qw = qn[0], qx = qn[1], qy = qn[2], qz = qn[3];
  const Quat dqn{
      2 * (-qz * gr(0, 1) + qy * gr(0, 2) + qz * gr(1, 0) - qx * gr(1, 2) - qy * gr(2, 0) + qx * gr(2, 1)),
      2 * (qy * gr(0, 1) + qz * gr(0, 2) + qy * gr(1, 0) - 2 * qx * gr(1, 1) - qw * gr(1, 2) + qz * gr(2, 0) +
           qw * gr(2, 1) - 2 * qx * gr(2, 2)),
      2 * (-2 * qy * gr(0, 0) + qx * gr(0, 1) + qw * gr(0, 2) + qx * gr(1, 0) + qz * gr(1, 2) - qw * gr(2, 0) +
           qz * gr(2, 1) - 2 * qy * gr(2, 2)),
      2 * (-2 * qz * gr(0, 0) - qw * gr(0, 1) + qx * gr(0, 2) + qw * gr(1, 0) - 2 * qz * gr(1, 1) + qy * gr(1, 2) +
           qx * gr(2, 0) + qy * gr(2, 1))};
  const double qlen = quat_norm(g.rotation);
  const double proj = qn[0] * dqn[0] + qn[1] * dqn[1] + qn[2] * dqn[2] + qn[3] * dqn[3];

  out[0] = dmean.x;
  out[1] = dmean.y;
  out[2] = dmean.z;
  out[3] = dlog_scale.x;
  out[4] = dlog_scale.y;
  out[5] = dlog_scale.z;
  for (int k = 0; k < 4; ++k) out[6 + k] = (dqn[k] - qn[k] * proj) / qlen;
  for (int c = 0; c < 3; ++c) {
    const double raw = g.color[c];
    out[10 + c] = (raw >= 0.0 && raw <= 1.0) ? sg.dcolor[c] : 0.0;
  }
  out[13] = sg.dopacity * s.opacity * (1.0 - s.opacity);
  return out;
}

}  // namespace detail

/// Exact gradients of a scalar loss given dL/d(image), reusing a forward pass.
inline SceneGradients render_backward(const Scene& scene, const Camera& cam, const RenderState& st,
                                      const Image& dloss_dimage) {
  require_same_shape(st.image, dloss_dimage, "render_backward");
  SceneGradients grads(scene.size());

  // The final [0,1] clamp only absorbs rounding, so it is treated as identity.
  const std::vector<double>& dpix = dloss_dimage.data;

  // Color behind the current splat, composited over the background.
  std::vector<double> behind(st.image.pixel_count() * 3);
  for (std::size_t p = 0; p < st.image.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) behind[p * 3 + c] = st.background[c];

  for (std::size_t k = st.splats.size(); k-- > 0;) {
    const Splat2D& s = st.splats[k];
    detail::SplatGrad sg;
    for (std::size_t f = st.fragment_begin[k + 1]; f-- > st.fragment_begin[k];) {
      const Fragment& fr = st.fragments[f];
      const std::size_t p = fr.pixel;
      const double* dc = &dpix[p * 3];
      double* b = &behind[p * 3];

      double dalpha = 0.0;
      for (int c = 0; c < 3; ++c) {
        dalpha += fr.t_before * (s.color[c] - b[c]) * dc[c];
        sg.dcolor[c] += fr.t_before * fr.alpha * dc[c];
        b[c] = fr.alpha * s.color[c] + (1.0 - fr.alpha) * b[c];
      }
      if (fr.clamped) continue;

      sg.dopacity += fr.kernel * dalpha;
      const double dpower = s.opacity * dalpha * fr.kernel;
      const int px = static_cast<int>(p % static_cast<std::size_t>(cam.width));
      const int py = static_cast<int>(p / static_cast<std::size_t>(cam.width));
      const double dx = px - s.mean.x, dy = py - s.mean.y;
      sg.dconic_xx += -0.5 * dx * dx * dpower;
      sg.dconic_xy += -0.5 * dx * dy * dpower;
      sg.dconic_yy += -0.5 * dy * dy * dpower;
      sg.du += dpower * (s.conic[0] * dx + s.conic[1] * dy);
      sg.dv += dpower * (s.conic[1] * dx + s.conic[2] * dy);
    }
    const std::size_t i = s.source;
    grads.visible[i] = 1;
    grads.params[i] = detail::backprop_splat(scene.gaussians[i], s, sg, cam);
    grads.mean2d_norm[i] = std::hypot(sg.du, sg.dv);
  }
  return grads;
}

inline SceneGradients render_backward(const Scene& scene, const Camera& cam, Rgb background, const Image& dloss_dimage) {
  return render_backward(scene, cam, render_forward(scene, cam, background), dloss_dimage);
}

}  // namespace gausstrap
