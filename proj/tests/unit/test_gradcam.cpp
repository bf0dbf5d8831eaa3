#include <cmath>

#include "doctest.h"
#include "dsaqc/errors.hpp"
#include "dsaqc/gradcam.hpp"
#include "dsaqc/colormap.hpp"
#include "support/gradcam_fixture.hpp"
#include "support/temp_dir.hpp"

using namespace dsaqc;
using namespace gradcam_fixture;

namespace {

class Dense final : public GradCamModel {
 public:
  int class_count() const override { return 2; }
  bool has_conv_stage() const override { return false; }
  nn::Tensor feature_maps(const Image2D&) const override { return nn::Tensor(1, 1, 1, 1); }
  double logit(const nn::Tensor&, int) const override { return 0; }
  nn::Tensor logit_gradient(const nn::Tensor& f, int) const override { return f; }
};

}  // namespace

TEST_CASE("Grad-CAM on the hand-built model matches the analytic map") {
  const ConvPoolLinear m = fixture_model();
  const MinIPImage img = fixture_image();
  for (int target : {0, 1}) {
    const auto map = grad_cam(m, img, target, "fixture");
    const auto expect = hand_cam(m, img.image, target);
    REQUIRE(map.raw.size() == 16);
    for (int i = 0; i < 16; ++i) CHECK(std::fabs(map.raw.pixels[i] - expect[i]) < 1e-6);
    CHECK(map.weights[0] == doctest::Approx(m.head.weight.value[target * 2] / 16.0));
    const auto [lo, hi] = std::minmax_element(expect.begin(), expect.end());
    for (int i = 0; i < 16; ++i) CHECK(std::fabs(map.heatmap.pixels[i] - (expect[i] - *lo) / (*hi - *lo)) < 1e-6);
    CHECK(map.label_name == "fixture");
    CHECK(map.target_class == target);
  }
}

TEST_CASE("logit gradient matches finite differences") {
  const ConvPoolLinear m = fixture_model();
  const nn::Tensor f = m.feature_maps(fixture_image().image);
  for (int target : {0, 1}) {
    const nn::Tensor g = m.logit_gradient(f, target);
    for (std::size_t i = 0; i < f.data.size(); ++i) {
      nn::Tensor a = f, b = f;
      const float h = 1.0f / 64;
      a.data[i] += h;
      b.data[i] -= h;
      const double fd = (m.logit(a, target) - m.logit(b, target)) / (2.0 * h);
      CHECK(std::fabs(fd - g.data[i]) < 1e-4);
    }
  }
}

TEST_CASE("Grad-CAM input errors") {
  const MinIPImage img = fixture_image();
  CHECK_THROWS_AS(grad_cam(Dense(), img, 0), UnsupportedError);
  CHECK_THROWS_AS(grad_cam(fixture_model(), img, 2), ValidationError);
  CHECK_THROWS_AS(grad_cam(fixture_model(), img, -1), ValidationError);
}

TEST_CASE("zero and constant maps") {
  ConvPoolLinear m = fixture_model();
  m.head.weight.value = {0.f, 0.f, 1.f, 1.f};
  const auto zero = grad_cam(m, fixture_image(), 0);
  CHECK(zero.zero_map);
  for (double v : zero.heatmap.pixels) CHECK(v == 0.0);

  std::fill(m.conv.weight.value.begin(), m.conv.weight.value.end(), 0.f);
  m.conv.bias.value = {0.5f, 0.5f};
  const auto flat = grad_cam(m, fixture_image(), 1);
  CHECK_FALSE(flat.zero_map);
  for (double v : flat.heatmap.pixels) CHECK(v == 1.0);
}

TEST_CASE("overlay blending") {
  const MinIPImage img = fixture_image();
  ActivationMap map;
  map.heatmap = Image2D(4, 4, 0.0);
  auto px = overlay_pixels(map, img, 0.5);
  REQUIRE(px.size() == 48);
  for (int i = 0; i < 16; ++i) {
    const auto g = static_cast<std::uint8_t>(std::lround(img.image.pixels[i] * 255.0));
    CHECK(px[3 * i] == g);
    CHECK(px[3 * i + 1] == g);
    CHECK(px[3 * i + 2] == g);
  }
  map.heatmap = Image2D(4, 4, 1.0);
  px = overlay_pixels(map, img, 1.0);
  const Rgb8 top = viridis(1.0);
  CHECK(px[0] == top[0]);
  CHECK(px[1] == top[1]);
  CHECK(px[2] == top[2]);
  px = overlay_pixels(map, img, 0.5);
  CHECK(std::abs(px[0] - (0.5 * img.image.pixels[0] * 255 + 0.5 * top[0])) <= 1.0);

  map.heatmap = Image2D(3, 4);
  CHECK_THROWS_AS(overlay_pixels(map, img), ValidationError);

  test_support::TempDir tmp;
  const auto real = grad_cam(fixture_model(), img, 0);
  export_overlay(real, img, tmp.path / "o.png");
  CHECK(std::filesystem::file_size(tmp.path / "o.png") > 0);
  const auto a = grad_cam(fixture_model(), img, 0), b = grad_cam(fixture_model(), img, 0);
  CHECK(a.heatmap == b.heatmap);
}

TEST_CASE("viridis endpoints") {
  const Rgb8 lo = viridis(0.0), hi = viridis(1.0);
  CHECK(lo[0] == 68);
  CHECK(lo[1] == 1);
  CHECK(lo[2] == 84);
  CHECK(hi[0] == 253);
  CHECK(hi[1] == 231);
  CHECK(hi[2] == 37);
}
