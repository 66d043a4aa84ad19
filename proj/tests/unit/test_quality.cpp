#include <support/fixtures.hpp>

#include <gtest/gtest.h>

using namespace atlasmesh;

namespace {

// Independent oracle: analytic trilinear Jacobian columns at the 8 corner
// parameter points and the element center, normalized determinant.
double oracle_scaled_jacobian(const HexCorners& x) {
  static constexpr double sign[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                                        {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};
  auto jac = [&](double u, double v, double w) {
    std::array<Vec3, 3> cols{};
    for (int n = 0; n < 8; ++n) {
      const double su = sign[n][0], sv = sign[n][1], sw = sign[n][2];
      cols[0] += x[n] * (su * (1 + sv * v) * (1 + sw * w) / 8.0);
      cols[1] += x[n] * (sv * (1 + su * u) * (1 + sw * w) / 8.0);
      cols[2] += x[n] * (sw * (1 + su * u) * (1 + sv * v) / 8.0);
    }
    return cols;
  };
  double worst = 1.0;
  std::vector<std::array<double, 3>> pts;
  for (const auto& p : sign) pts.push_back({p[0], p[1], p[2]});
  pts.push_back({0, 0, 0});
  for (const auto& p : pts) {
    const auto c = jac(p[0], p[1], p[2]);
    const double d = det3(c[0], c[1], c[2]) / (norm(c[0]) * norm(c[1]) * norm(c[2]));
    worst = std::min(worst, d);
  }
  return worst;
}

HexCorners sheared_cube(double offset) {
  auto c = fixtures::unit_cube();
  for (int i = 4; i < 8; ++i) c[i].x += offset;
  return c;
}

}  // namespace

TEST(ScaledJacobian, UnitCubeIsOne) { EXPECT_DOUBLE_EQ(scaled_jacobian(fixtures::unit_cube()), 1.0); }

TEST(ScaledJacobian, FortyFiveDegreeShear) {
  // Corner frame at the bottom face: det = 1, |a||b||d| = sqrt(2).
  EXPECT_NEAR(scaled_jacobian(sheared_cube(1.0)), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(ScaledJacobian, CoincidentCornersGiveZero) {
  auto c = fixtures::unit_cube();
  c[6] = c[7];
  EXPECT_EQ(scaled_jacobian(c), 0.0);
}

TEST(ScaledJacobian, MirroredElementIsInverted) {
  auto c = fixtures::unit_cube();
  for (auto& p : c) p.x = -p.x;
  EXPECT_DOUBLE_EQ(scaled_jacobian(c), -1.0);
}

TEST(ScaledJacobian, MatchesTrilinearOracleOnRandomElements) {
  std::mt19937_64 rng(17);
  for (int n = 0; n < 2000; ++n) {
    const auto c = fixtures::jittered_cube(rng, 0.3);
    const double oracle = oracle_scaled_jacobian(c);
    EXPECT_NEAR(scaled_jacobian(c), std::clamp(oracle, -1.0, 1.0), 1e-12) << n;
  }
}

TEST(QualityInvariance, RigidMotionAndUniformScale) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> shift(-100.0, 100.0), scale(0.01, 50.0);
  for (int n = 0; n < 300; ++n) {
    const auto c = fixtures::jittered_cube(rng, 0.2);
    const auto rot = fixtures::random_rotation(rng);
    const Vec3 t{shift(rng), shift(rng), shift(rng)};
    const double s = scale(rng);
    HexCorners moved;
    for (int i = 0; i < 8; ++i) moved[i] = fixtures::rotate(rot, c[i]) * s + t;
    const auto a = element_quality(c), b = element_quality(moved);
    EXPECT_NEAR(a.scaled_jacobian, b.scaled_jacobian, 1e-9);
    EXPECT_NEAR(a.aspect_ratio, b.aspect_ratio, 1e-9);
    EXPECT_NEAR(a.skew, b.skew, 1e-9);
  }
}

TEST(QualityBounds, MetricsStayInRange) {
  std::mt19937_64 rng(29);
  for (int n = 0; n < 1000; ++n) {
    const auto q = element_quality(fixtures::jittered_cube(rng, 0.45));
    EXPECT_GE(q.scaled_jacobian, -1.0);
    EXPECT_LE(q.scaled_jacobian, 1.0);
    EXPECT_GE(q.aspect_ratio, 1.0);
    EXPECT_GE(q.skew, 0.0);
    EXPECT_LE(q.skew, 1.0);
  }
}

TEST(AspectRatio, BrickAndDegenerate) {
  auto brick = fixtures::unit_cube();
  for (auto& p : brick) p.x *= 2.0;
  EXPECT_DOUBLE_EQ(aspect_ratio(brick), 2.0);
  EXPECT_DOUBLE_EQ(aspect_ratio(fixtures::unit_cube()), 1.0);
  auto flat = fixtures::unit_cube();
  flat[5] = flat[1];
  EXPECT_TRUE(std::isinf(aspect_ratio(flat)));
}

TEST(Skew, CubeShearAndFlat) {
  EXPECT_DOUBLE_EQ(skew(fixtures::unit_cube()), 0.0);
  // Top centroid (1.5,0.5,1) minus bottom centroid (0.5,0.5,0) = (1,0,1); x axis (1,0,0).
  const Vec3 z_axis = normalized(Vec3{1, 0, 1});
  EXPECT_NEAR(skew(sheared_cube(1.0)), std::abs(dot(z_axis, Vec3{1, 0, 0})), 1e-12);
  // Half-unit offset gives axis (0.5,0,1).
  EXPECT_NEAR(skew(sheared_cube(0.5)), 0.5 / std::sqrt(1.25), 1e-12);
  auto flat = fixtures::unit_cube();
  for (int i = 4; i < 8; ++i) flat[i].z = 0.0;
  EXPECT_DOUBLE_EQ(skew(flat), 1.0);
}

TEST(QualityReport, PerfectCubes) {
  const std::vector<ElementQuality> q(10, element_quality(fixtures::unit_cube()));
  const auto r = quality_report(std::span<const ElementQuality>(q));
  EXPECT_EQ(r.element_count, 10u);
  EXPECT_EQ(r.scaled_jacobian.min, 1.0);
  EXPECT_EQ(r.scaled_jacobian.mean, 1.0);
  EXPECT_EQ(r.aspect_ratio.max, 1.0);
  EXPECT_EQ(r.skew.max, 0.0);
  EXPECT_EQ(r.percent_sj_above_half, 100.0);
  EXPECT_EQ(r.percent_ar_below_3, 100.0);
  EXPECT_EQ(r.percent_skew_below_half, 100.0);
  EXPECT_EQ(r.inverted, 0u);
  EXPECT_EQ(r.scaled_jacobian.histogram.counts.back(), 10u);
  EXPECT_EQ(r.aspect_ratio.histogram.counts.front(), 10u);
  EXPECT_EQ(r.skew.histogram.counts.front(), 10u);
}

TEST(QualityReport, MatchesHandCountsOnMixedSet) {
  auto brick = fixtures::unit_cube();
  for (auto& p : brick) p.x *= 4.0;
  auto mirrored = fixtures::unit_cube();
  for (auto& p : mirrored) p.x = -p.x;
  const std::vector<ElementQuality> q{element_quality(fixtures::unit_cube()), element_quality(sheared_cube(1.0)),
                                      element_quality(brick), element_quality(mirrored)};
  const auto r = quality_report(std::span<const ElementQuality>(q));
  EXPECT_DOUBLE_EQ(r.percent_sj_above_half, 75.0);
  EXPECT_DOUBLE_EQ(r.percent_ar_below_3, 75.0);
  EXPECT_DOUBLE_EQ(r.percent_skew_below_half, 75.0);
  EXPECT_EQ(r.inverted, 1u);
  EXPECT_EQ(r.aspect_ratio.histogram.overflow, 0u);
  EXPECT_EQ(r.scaled_jacobian.histogram.underflow, 1u);
  EXPECT_NEAR(r.scaled_jacobian.mean, (1.0 + 1.0 / std::sqrt(2.0) + 1.0 - 1.0) / 4.0, 1e-15);
  std::size_t binned = r.scaled_jacobian.histogram.underflow + r.scaled_jacobian.histogram.overflow;
  for (auto c : r.scaled_jacobian.histogram.counts) binned += c;
  EXPECT_EQ(binned, 4u);
}

TEST(QualityReport, EmptyInputThrowsAndJsonHasThresholds) {
  EXPECT_THROW(quality_report(std::span<const ElementQuality>()), ArgumentError);
  const std::vector<ElementQuality> q{element_quality(fixtures::unit_cube())};
  const auto j = to_json(quality_report(std::span<const ElementQuality>(q)));
  EXPECT_EQ(j.at("thresholds").at("percent_scaled_jacobian_gt_0.5"), 100.0);
  EXPECT_EQ(j.at("scaled_jacobian").at("histogram").at("counts").size(), 20u);
}

TEST(QualityReport, MeshOverloadAgreesWithPerElementMetrics) {
  auto m = fixtures::eight_element_mesh();
  m.nodes[13] += Vec3{0.2, -0.1, 0.15};  // center node
  const auto q = element_qualities(m);
  ASSERT_EQ(q.size(), 8u);
  for (std::size_t e = 0; e < 8; ++e) EXPECT_EQ(q[e].scaled_jacobian, scaled_jacobian(m.corners(e)));
  const auto r = quality_report(m);
  EXPECT_LT(r.scaled_jacobian.min, 1.0);
  EXPECT_EQ(r.element_count, 8u);
}

TEST(QualityCsv, OneRowPerElement) {
  const std::vector<ElementQuality> q(3, element_quality(fixtures::unit_cube()));
  const auto dir = fixtures::scratch_dir("quality_csv");
  write_quality_csv(q, dir / "q.csv");
  const auto text = fixtures::slurp(dir / "q.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_EQ(text.substr(0, text.find('\n')), "element,scaled_jacobian,aspect_ratio,skew");
}
