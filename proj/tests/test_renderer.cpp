#include <gausstrap/losses.hpp>
#include <gausstrap/renderer.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace gausstrap;

namespace {

Camera small_camera(int size = 16, double f = 20.0) {
  Camera c;
  c.width = c.height = size;
  c.fx = c.fy = f;
  c.cx = c.cy = 0.5 * size;
  return c;
}

Gaussian blob(Vec3 mean, double scale, Rgb color, double opacity) {
  Gaussian g;
  g.mean = mean;
  g.log_scale = {std::log(scale), std::log(scale), std::log(scale)};
  g.color = color;
  g.opacity_logit = inverse_sigmoid(opacity);
  return g;
}

// Twenty well-conditioned Gaussians in front of `small_camera`: opacities
// below the clamp, colors inside [0,1], a few pixels wide.
Scene gradient_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Gaussian> gs;
  for (int i = 0; i < 20; ++i) {
    Gaussian g;
    const double z = 3.0 + u(rng);
    g.mean = {(u(rng) - 0.5) * 0.35 * z, (u(rng) - 0.5) * 0.35 * z, z};
    for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(0.25 + 0.35 * u(rng));
    g.rotation = normalized_quat({n(rng), n(rng), n(rng), n(rng)});
    g.color = {0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng)};
    g.opacity_logit = inverse_sigmoid(0.25 + 0.5 * u(rng));
    gs.push_back(g);
  }
  return Scene(std::move(gs));
}

Image random_weights(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Image img(w, h);
  for (double& v : img.data) v = u(rng);
  return img;
}

double weighted_sum(const Image& img, const Image& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) s += img.data[i] * w.data[i];
  return s;
}

bool gradient_close(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  return diff <= 1e-6 || diff <= 1e-3 * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace

TEST(Project, AxialIsotropicCovariance) {
  const Camera c = small_camera(64, 100.0);
  const double s = 0.1, z = 4.0;
  const auto sp = project_gaussian(blob({0, 0, z}, s, {1, 1, 1}, 0.5), c);
  ASSERT_TRUE(sp);
  const double expected = std::pow(c.fx * s / z, 2) + kCovarianceDilation;
  EXPECT_NEAR(sp->cov[0], expected, 1e-6);
  EXPECT_NEAR(sp->cov[2], expected, 1e-6);
  EXPECT_NEAR(sp->cov[1], 0.0, 1e-6);
}

TEST(Project, BehindNearIsCulled) {
  const Camera c = small_camera();
  EXPECT_FALSE(project_gaussian(blob({0, 0, c.near}, 0.1, {1, 0, 0}, 0.5), c));
  EXPECT_FALSE(project_gaussian(blob({0, 0, -2}, 0.1, {1, 0, 0}, 0.5), c));
}

TEST(Project, OffscreenIsCulled) {
  EXPECT_FALSE(project_gaussian(blob({50, 0, 3}, 0.01, {1, 0, 0}, 0.5), small_camera()));
}

TEST(Project, MatchesDenseMatrixOracle) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Camera c = small_camera(64, 80.0);
    const Quat cq = normalized_quat({n(rng), n(rng), n(rng), n(rng)});
    c.rotation = rotation_from_unit_quat(cq);
    const Vec3 target{0.2 * n(rng), 0.2 * n(rng), 4.0};
    c.translation = target - c.rotation * Vec3{0.1 * n(rng), 0.1 * n(rng), 0.1 * n(rng)};
    Gaussian g;
    g.mean = {0.1 * n(rng), 0.1 * n(rng), 0.1 * n(rng)};
    g.log_scale = {-2 + 0.3 * n(rng), -2 + 0.3 * n(rng), -2 + 0.3 * n(rng)};
    g.rotation = {n(rng), n(rng), n(rng), n(rng)};
    const auto sp = project_gaussian(g, c);
    ASSERT_TRUE(sp);

    // Generic dense products: J (2x3) * W (3x3) * Sigma * W^T * J^T.
    const Mat3 sigma = covariance_from(g.log_scale, g.rotation);
    const Vec3 t = c.rotation * g.mean + c.translation;
    const double J[2][3] = {{c.fx / t.z, 0, -c.fx * t.x / (t.z * t.z)}, {0, c.fy / t.z, -c.fy * t.y / (t.z * t.z)}};
    double jw[2][3] = {}, jws[2][3] = {}, out[2][2] = {};
    for (int r = 0; r < 2; ++r)
      for (int k = 0; k < 3; ++k)
        for (int m = 0; m < 3; ++m) jw[r][k] += J[r][m] * c.rotation(m, k);
    for (int r = 0; r < 2; ++r)
      for (int k = 0; k < 3; ++k)
        for (int m = 0; m < 3; ++m) jws[r][k] += jw[r][m] * sigma(m, k);
    for (int r = 0; r < 2; ++r)
      for (int k = 0; k < 2; ++k)
        for (int m = 0; m < 3; ++m) out[r][k] += jws[r][m] * jw[k][m];
    EXPECT_NEAR(sp->cov[0], out[0][0] + kCovarianceDilation, 1e-10);
    EXPECT_NEAR(sp->cov[1], out[0][1], 1e-10);
    EXPECT_NEAR(sp->cov[2], out[1][1] + kCovarianceDilation, 1e-10);
  }
}

TEST(Render, EmptySceneIsBackground) {
  const Image img = render(Scene{}, small_camera(), {0.2, 0.4, 0.6});
  EXPECT_EQ(img, Image::filled(16, 16, {0.2, 0.4, 0.6}));
}

TEST(Render, SingleSaturatedSplat) {
  Gaussian g = blob({0, 0, 3}, 0.2, {1, 0, 0}, 0.5);
  g.opacity_logit = 30.0;
  const Image img = render(Scene({g}), small_camera(), {0, 0, 0});
  const Rgb px = img.pixel(8, 8);
  EXPECT_NEAR(px.x, 0.99, 1e-12);
  EXPECT_EQ(px.y, 0.0);
  EXPECT_EQ(px.z, 0.0);
}

TEST(Render, TwoTermBlend) {
  // Listed back-first to exercise the depth sort.
  const Scene s({blob({0, 0, 4}, 0.2, {0, 1, 0}, 0.5), blob({0, 0, 3}, 0.2, {1, 0, 0}, 0.5)});
  const Rgb px = render(s, small_camera(), {0, 0, 0}).pixel(8, 8);
  EXPECT_NEAR(px.x, 0.5, 1e-12);
  EXPECT_NEAR(px.y, 0.25, 1e-12);
  EXPECT_NEAR(px.z, 0.0, 1e-12);
}

TEST(Render, OutputInRangeAndTransmittanceMonotone) {
  const Scene s = gradient_scene(2);
  const RenderState st = render_forward(s, small_camera(), {1, 1, 1});
  for (double v : st.image.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  std::vector<double> last(st.image.pixel_count(), 1.0);
  for (std::size_t k = 0; k < st.splats.size(); ++k)
    for (std::size_t f = st.fragment_begin[k]; f < st.fragment_begin[k + 1]; ++f) {
      const Fragment& fr = st.fragments[f];
      EXPECT_LE(fr.t_before, last[fr.pixel]);
      EXPECT_GE(fr.t_before, 0.0);
      last[fr.pixel] = fr.t_before * (1.0 - fr.alpha);
    }
  for (std::size_t p = 0; p < last.size(); ++p) EXPECT_DOUBLE_EQ(last[p], st.final_transmittance[p]);
}

TEST(Render, DeterministicAndPermutationInvariant) {
  Scene s = gradient_scene(4);
  const Camera c = small_camera();
  const Image a = render(s, c, {1, 1, 1});
  EXPECT_EQ(render(s, c, {1, 1, 1}), a);
  std::mt19937_64 rng(1);
  std::shuffle(s.gaussians.begin(), s.gaussians.end(), rng);
  s.reset_stats();
  EXPECT_EQ(render(s, c, {1, 1, 1}), a);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const Scene s = gradient_scene(5);
  const Camera c = small_camera();
  const SceneGradients g = render_backward(s, c, {1, 1, 1}, Image(16, 16));
  for (const auto& p : g.params)
    for (double v : p) EXPECT_EQ(v, 0.0);
  for (double v : g.mean2d_norm) EXPECT_EQ(v, 0.0);
}

TEST(Backward, CulledGaussianGetsNothing) {
  Scene s = gradient_scene(5);
  s.gaussians.push_back(blob({0, 0, -3}, 0.3, {0.5, 0.5, 0.5}, 0.5));
  s.reset_stats();
  const SceneGradients g = render_backward(s, small_camera(), {1, 1, 1}, random_weights(16, 16, 1));
  EXPECT_FALSE(g.visible.back());
  for (double v : g.params.back()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, SingleSplatColorUnderL1) {
  const Camera c = small_camera();
  Scene s({blob({0.05, -0.03, 3}, 0.3, {0.3, 0.6, 0.45}, 0.6)});
  const Image target = Image::filled(16, 16, {0.9, 0.1, 0.5});
  const Rgb bg{1, 1, 1};
  const RenderState st = render_forward(s, c, bg);
  const LossResult loss = training_loss(st.image, target, 0.0);
  const SceneGradients g = render_backward(s, c, st, loss.grad);
  const double h = 1e-4;
  for (int k = 10; k < 13; ++k) {
    Scene p = s, m = s;
    p.gaussians[0].color[k - 10] += h;
    m.gaussians[0].color[k - 10] -= h;
    const double fd = (l1(render(p, c, bg), target) - l1(render(m, c, bg), target)) / (2 * h);
    EXPECT_NEAR(g.params[0][k], fd, 1e-4 * std::abs(fd)) << "color channel " << k - 10;
  }
}

// Central finite differences on every raw parameter of a 20-Gaussian scene.
TEST(Backward, FullParameterFiniteDifferences) {
  const Camera c = small_camera();
  const Rgb bg{1, 1, 1};
  const Scene s = gradient_scene(7);
  const Image w = random_weights(16, 16, 3);
  const SceneGradients g = render_backward(s, c, bg, w);

  const double h = 1e-6;
  std::size_t total = 0, ok = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (int k = 0; k < kParamsPerGaussian; ++k) {
      Scene p = s, m = s;
      auto ap = to_array(p.gaussians[i]), am = to_array(m.gaussians[i]);
      ap[k] += h;
      am[k] -= h;
      p.gaussians[i] = from_array(ap);
      m.gaussians[i] = from_array(am);
      const double fd = (weighted_sum(render(p, c, bg), w) - weighted_sum(render(m, c, bg), w)) / (2 * h);
      ++total;
      if (gradient_close(g.params[i][k], fd)) ++ok;
    }
  EXPECT_EQ(total, 20u * kParamsPerGaussian);
  EXPECT_GE(static_cast<double>(ok) / total, 0.99) << ok << " of " << total;
}
