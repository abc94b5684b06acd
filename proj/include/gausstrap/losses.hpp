#pragma once

#include <gausstrap/image.hpp>
#include <gausstrap/renderer.hpp>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gausstrap {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPsnrIdentical = 99.0;

inline double l1(const Image& a, const Image& b) {
  require_same_shape(a, b, "l1");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
  return a.data.empty() ? 0.0 : sum / static_cast<double>(a.data.size());
}

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  return a.data.empty() ? 0.0 : sum / static_cast<double>(a.data.size());
}

/// 10 log10(1 / MSE) for unit dynamic range; identical images give 99 dB.
inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / m);
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
inline std::array<double, kSsimWindow> ssim_taps() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

namespace detail {

// Planar single-channel buffer.
struct Plane {
  int width = 0, height = 0;
  std::vector<double> v;
  Plane(int w, int h) : width(w), height(h), v(static_cast<std::size_t>(w) * h, 0.0) {}
  double& operator()(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

inline Plane channel(const Image& img, int c) {
  Plane p(img.width, img.height);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) p.v[i] = img.data[i * 3 + c];
  return p;
}

// Valid-mode separable correlation: output is (w-10) x (h-10).
inline Plane filter_valid(const Plane& in, const std::array<double, kSsimWindow>& taps) {
  const int ow = in.width - kSsimWindow + 1, oh = in.height - kSsimWindow + 1;
  Plane rows(ow, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[k] * in(x + k, y);
      rows(x, y) = acc;
    }
  Plane out(ow, oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[k] * rows(x, y + k);
      out(x, y) = acc;
    }
  return out;
}

// Adjoint of filter_valid: scatters a (w-10) x (h-10) map back to w x h.
inline Plane filter_valid_adjoint(const Plane& in, int width, int height, const std::array<double, kSsimWindow>& taps) {
  Plane cols(in.width, height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int k = 0; k < kSsimWindow; ++k) cols(x, y + k) += taps[k] * in(x, y);
  Plane out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int k = 0; k < kSsimWindow; ++k) out(x + k, y) += taps[k] * cols(x, y);
  return out;
}

inline void require_ssim_size(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
}

}  // namespace detail

/// Mean SSIM over valid window positions and channels, optionally with
/// d(SSIM)/d(a) written to `grad_a`.
inline double ssim(const Image& a, const Image& b, Image* grad_a = nullptr) {
  detail::require_ssim_size(a, b);
  const auto taps = ssim_taps();
  const int ow = a.width - kSsimWindow + 1, oh = a.height - kSsimWindow + 1;
  const double positions = static_cast<double>(ow) * oh * 3.0;
  if (grad_a) *grad_a = Image(a.width, a.height);

  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const detail::Plane x = detail::channel(a, c);
    const detail::Plane y = detail::channel(b, c);
    detail::Plane xx(a.width, a.height), yy(a.width, a.height), xy(a.width, a.height);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
      xx.v[i] = x.v[i] * x.v[i];
      yy.v[i] = y.v[i] * y.v[i];
      xy.v[i] = x.v[i] * y.v[i];
    }
    const detail::Plane mx = detail::filter_valid(x, taps);
    const detail::Plane my = detail::filter_valid(y, taps);
    const detail::Plane exx = detail::filter_valid(xx, taps);
    const detail::Plane eyy = detail::filter_valid(yy, taps);
    const detail::Plane exy = detail::filter_valid(xy, taps);

    detail::Plane d_mu(ow, oh), d_exx(ow, oh), d_exy(ow, oh);
    for (std::size_t i = 0; i < mx.v.size(); ++i) {
      const double ux = mx.v[i], uy = my.v[i];
      const double vx = exx.v[i] - ux * ux;
      const double vy = eyy.v[i] - uy * uy;
      const double cxy = exy.v[i] - ux * uy;
      const double a1 = 2.0 * ux * uy + kSsimC1, a2 = 2.0 * cxy + kSsimC2;
      const double b1 = ux * ux + uy * uy + kSsimC1, b2 = vx + vy + kSsimC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (!grad_a) continue;
      const double ds_dcxy = 2.0 * a1 / (b1 * b2);
      const double ds_dvx = -s / b2;
      // Direct dependence on mu_x plus its appearance inside the variance terms.
      d_mu.v[i] = 2.0 * uy * a2 / (b1 * b2) - 2.0 * ux * s / b1 - uy * ds_dcxy - 2.0 * ux * ds_dvx;
      d_exx.v[i] = ds_dvx;
      d_exy.v[i] = ds_dcxy;
    }
    if (!grad_a) continue;
    const detail::Plane g_mu = detail::filter_valid_adjoint(d_mu, a.width, a.height, taps);
    const detail::Plane g_xx = detail::filter_valid_adjoint(d_exx, a.width, a.height, taps);
    const detail::Plane g_xy = detail::filter_valid_adjoint(d_exy, a.width, a.height, taps);
    for (std::size_t i = 0; i < x.v.size(); ++i)
      grad_a->data[i * 3 + c] = (g_mu.v[i] + 2.0 * x.v[i] * g_xx.v[i] + y.v[i] * g_xy.v[i]) / positions;
  }
  return total / positions;
}

struct LossResult {
  double value = 0.0;
  Image grad;  // dLoss/d(render)
};

/// (1 - lambda) * L1 + lambda * (1 - SSIM) and its exact gradient w.r.t. the render.
inline LossResult training_loss(const Image& render, const Image& target, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("training_loss: lambda must be in [0,1]");
  require_same_shape(render, target, "training_loss");
  LossResult out;
  out.grad = Image(render.width, render.height);
  const double n = static_cast<double>(render.data.size());
  double l1_sum = 0.0;
  for (std::size_t i = 0; i < render.data.size(); ++i) {
    const double d = render.data[i] - target.data[i];
    l1_sum += std::abs(d);
    out.grad.data[i] = (1.0 - lambda) * ((d > 0.0) - (d < 0.0)) / n;
  }
  out.value = (1.0 - lambda) * l1_sum / n;
  if (lambda > 0.0) {
    Image dssim;
    const double s = ssim(render, target, &dssim);
    out.value += lambda * (1.0 - s);
    for (std::size_t i = 0; i < render.data.size(); ++i) out.grad.data[i] -= lambda * dssim.data[i];
  }
  return out;
}

struct ViewScore {
  std::string view_id;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricsReport {
  std::string group;  // attack | stabilization | train | test
  std::vector<ViewScore> views;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  void recompute_means() {
    mean_psnr = mean_ssim = 0.0;
    if (views.empty()) return;
    for (const auto& v : views) {
      mean_psnr += v.psnr_db;
      mean_ssim += v.ssim;
    }
    mean_psnr /= static_cast<double>(views.size());
    mean_ssim /= static_cast<double>(views.size());
  }
};

/// Renders each camera and scores it against the aligned target.
inline MetricsReport evaluate_group(const Scene& scene, const std::vector<Camera>& cameras,
                                    const std::vector<Image>& targets, const std::string& group, Rgb background) {
  if (cameras.size() != targets.size()) throw std::invalid_argument("evaluate_group: cameras and targets differ in length");
  MetricsReport report;
  report.group = group;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const Image img = render(scene, cameras[i], background);
    report.views.push_back({std::to_string(i), psnr(img, targets[i]), ssim(img, targets[i])});
  }
  report.recompute_means();
  return report;
}

}  // namespace gausstrap
