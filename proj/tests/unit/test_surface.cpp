#include <support/fixtures.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace atlasmesh;

namespace {

BinaryMask empty_mask(std::array<int, 3> dims, double spacing = 1.0) {
  BinaryMask m;
  m.geometry.dims = dims;
  m.geometry.spacing = {spacing, spacing, spacing};
  m.bits.assign(m.geometry.voxel_count(), 0);
  return m;
}

BinaryMask ball_mask(int n, double radius_mm, double spacing) {
  auto m = empty_mask({n, n, n}, spacing);
  const double c = (n - 1) / 2.0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (spacing * norm(Vec3{i - c, j - c, k - c}) <= radius_mm) m.bits[m.geometry.index(i, j, k)] = 1;
  return m;
}

std::size_t unique_edges(const TriSurface& s) {
  std::set<std::pair<int, int>> e;
  for (const auto& t : s.triangles)
    for (int a = 0; a < 3; ++a) e.insert(std::minmax(t[a], t[(a + 1) % 3]));
  return e.size();
}

// Every directed edge appears once and its reverse once: consistent orientation.
bool consistently_oriented(const TriSurface& s) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : s.triangles)
    for (int a = 0; a < 3; ++a) ++directed[{t[a], t[(a + 1) % 3]}];
  for (const auto& [e, n] : directed)
    if (n != 1 || !directed.contains({e.second, e.first})) return false;
  return true;
}

}  // namespace

TEST(ExtractSurface, SingleVoxelIsAClosedOctahedron) {
  auto m = empty_mask({3, 3, 3});
  m.bits[m.geometry.index(1, 1, 1)] = 1;
  const auto s = extract_surface(m);
  const auto r = surface_report(s);
  EXPECT_EQ(r.n_vertices, 6u);
  EXPECT_EQ(r.n_triangles, 8u);
  EXPECT_TRUE(r.closed);
  EXPECT_EQ(r.components, 1u);
  EXPECT_FALSE(s.touches_border);
  // Octahedron with half-diagonal 0.5: volume 4/3 * 0.5^3.
  EXPECT_NEAR(r.signed_volume, 4.0 / 3.0 * 0.125, 1e-12);
  EXPECT_NEAR(r.total_area, 8 * std::sqrt(3.0) / 4.0 * 0.5, 1e-12);
}

TEST(ExtractSurface, BlockHasGenusZeroAndOutwardOrientation) {
  auto m = empty_mask({14, 14, 14});
  for (int k = 2; k < 12; ++k)
    for (int j = 2; j < 12; ++j)
      for (int i = 2; i < 12; ++i) m.bits[m.geometry.index(i, j, k)] = 1;
  const auto s = extract_surface(m);
  const auto r = surface_report(s);
  EXPECT_TRUE(r.closed);
  EXPECT_EQ(r.components, 1u);
  const long euler = static_cast<long>(r.n_vertices) - static_cast<long>(unique_edges(s)) + static_cast<long>(r.n_triangles);
  EXPECT_EQ(euler, 2);
  EXPECT_TRUE(consistently_oriented(s));
  // Iso-surface lies half a voxel outside the voxel centers, minus chamfers.
  EXPECT_GT(r.signed_volume, 9.0 * 9.0 * 9.0);
  EXPECT_LT(r.signed_volume, 10.0 * 10.0 * 10.0);
  EXPECT_NEAR(r.bounds.lo.x, 1.5, 1e-12);
  EXPECT_NEAR(r.bounds.hi.x, 11.5, 1e-12);
}

TEST(ExtractSurface, SphereAreaAndVolumeApproachAnalytic) {
  const double R = 10.0;
  const auto s = extract_surface(ball_mask(41, R, 0.75));
  const auto r = surface_report(s);
  EXPECT_TRUE(r.closed);
  const double area = 4.0 * std::numbers::pi * R * R;
  const double vol = 4.0 / 3.0 * std::numbers::pi * R * R * R;
  EXPECT_NEAR(r.total_area / area, 1.0, 0.15);
  EXPECT_NEAR(r.signed_volume / vol, 1.0, 0.05);
  EXPECT_TRUE(consistently_oriented(s));
  for (const auto& v : s.vertices) EXPECT_NEAR(norm(v - Vec3{15, 15, 15}), R, 0.75);
}

TEST(ExtractSurface, DisjointBlobsAreSeparateComponents) {
  auto m = empty_mask({12, 6, 6});
  m.bits[m.geometry.index(2, 2, 2)] = 1;
  m.bits[m.geometry.index(3, 2, 2)] = 1;
  m.bits[m.geometry.index(8, 3, 3)] = 1;
  const auto r = surface_report(extract_surface(m));
  EXPECT_EQ(r.components, 2u);
  EXPECT_TRUE(r.closed);
}

TEST(ExtractSurface, BorderContactWarnsAndLeavesSurfaceOpen) {
  auto m = empty_mask({4, 4, 4});
  m.bits[m.geometry.index(0, 1, 1)] = 1;
  const auto s = extract_surface(m);
  EXPECT_TRUE(s.touches_border);
  EXPECT_FALSE(s.warnings.empty());
  EXPECT_FALSE(surface_report(s).closed);
}

TEST(ExtractSurface, EmptyMaskThrows) { EXPECT_THROW(extract_surface(empty_mask({4, 4, 4})), EmptySurfaceError); }

TEST(ExtractSurface, VerticesAreWeldedExactly) {
  const auto s = extract_surface(ball_mask(15, 5.0, 1.0));
  std::set<std::array<double, 3>> distinct;
  for (const auto& v : s.vertices) distinct.insert({v.x, v.y, v.z});
  EXPECT_EQ(distinct.size(), s.vertices.size());
}

TEST(ExtractSurface, TranslatesWithOrigin) {
  auto m = ball_mask(9, 3.0, 1.0);
  const auto a = extract_surface(m);
  m.geometry.origin = {10, -5, 2.5};
  const auto b = extract_surface(m);
  ASSERT_EQ(a.vertices.size(), b.vertices.size());
  for (std::size_t i = 0; i < a.vertices.size(); ++i) EXPECT_EQ(b.vertices[i], a.vertices[i] + Vec3({10, -5, 2.5}));
  EXPECT_EQ(a.triangles, b.triangles);
}

TEST(SurfaceFiles, StlSizeAndObjCounts) {
  const auto s = extract_surface(ball_mask(9, 3.0, 1.0));
  const auto dir = fixtures::scratch_dir("surface_files");
  write_stl(s, dir / "s.stl");
  EXPECT_EQ(std::filesystem::file_size(dir / "s.stl"), 84 + 50 * s.triangles.size());
  write_obj(s, dir / "s.obj");
  std::ifstream in(dir / "s.obj");
  std::size_t v = 0, f = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) == 0) ++v;
    if (line.rfind("f ", 0) == 0) ++f;
  }
  EXPECT_EQ(v, s.vertices.size());
  EXPECT_EQ(f, s.triangles.size());
}

TEST(SurfaceLocator, MatchesBruteForceClosestPoint) {
  const auto s = extract_surface(ball_mask(13, 4.0, 1.0));
  const SurfaceLocator loc(s, 2.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 12.0);
  std::size_t found = 0;
  for (int n = 0; n < 500; ++n) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : s.triangles)
      best = std::min(best, distance(p, closest_point_on_triangle(p, s.vertices[t[0]], s.vertices[t[1]], s.vertices[t[2]])));
    const auto hit = loc.closest(p);
    if (best <= 2.0 - 1e-9) {
      ASSERT_TRUE(hit.has_value());
      EXPECT_NEAR(hit->distance, best, 1e-12);
      ++found;
    } else if (best > 2.0 + 1e-9) {
      EXPECT_FALSE(hit.has_value());
    }
  }
  EXPECT_GT(found, 50u);
}

TEST(ClosestPointOnTriangle, RegionsOfTheUnitTriangle) {
  const Vec3 a{0, 0, 0}, b{1, 0, 0}, c{0, 1, 0};
  EXPECT_NEAR(distance(closest_point_on_triangle({0.2, 0.2, 3}, a, b, c), Vec3{0.2, 0.2, 0}), 0.0, 1e-15);
  EXPECT_EQ(closest_point_on_triangle({-1, -1, 0}, a, b, c), a);
  EXPECT_EQ(closest_point_on_triangle({2, -1, 0}, a, b, c), b);
  const Vec3 q = closest_point_on_triangle({1, 1, 0}, a, b, c);
  EXPECT_NEAR(q.x, 0.5, 1e-15);
  EXPECT_NEAR(q.y, 0.5, 1e-15);
}

TEST(SurfaceReportJson, CarriesAllKeys) {
  auto m = empty_mask({3, 3, 3});
  m.bits[m.geometry.index(1, 1, 1)] = 1;
  const auto j = to_json(surface_report(extract_surface(m)));
  for (const char* key : {"closed", "n_vertices", "n_triangles", "components", "total_area_mm2", "min_triangle_area_mm2",
                          "signed_volume_mm3", "bounds_mm"})
    EXPECT_TRUE(j.contains(key)) << key;
}
