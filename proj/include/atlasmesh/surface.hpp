#pragma once

// Marching-cubes extraction of binary masks, surface reports, STL/OBJ export
// and a bucketed closest-point locator used by the hex mesher.

#include <atlasmesh/volume.hpp>

#include <bit>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace atlasmesh {

using Triangle = std::array<std::int32_t, 3>;

struct TriSurface {
  std::vector<Vec3> vertices;  // mm
  std::vector<Triangle> triangles;  // counter-clockwise seen from outside

  /// Labels whose mask produced the surface; the mesher uses this to find the
  /// element region the surface bounds.
  std::optional<std::set<Label>> region_labels;

  bool touches_border{false};
  std::size_t ambiguous_faces{0};
  std::vector<std::string> warnings;
};

namespace mc {

// Corner offsets: 0 (0,0,0) 1 (1,0,0) 2 (1,1,0) 3 (0,1,0) 4 (0,0,1) 5 (1,0,1) 6 (1,1,1) 7 (0,1,1)
inline constexpr std::array<std::array<int, 3>, 8> corner_offset = {
    {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};

inline constexpr std::array<std::array<int, 2>, 12> edge_corners = {
    {{0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6}, {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

// Faces as corner cycles; edge k of a face joins corners k and k+1.
inline constexpr std::array<std::array<int, 4>, 6> face_corners = {
    {{0, 1, 2, 3}, {4, 5, 6, 7}, {0, 1, 5, 4}, {1, 2, 6, 5}, {3, 2, 6, 7}, {0, 3, 7, 4}}};

constexpr int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e)
    if ((edge_corners[e][0] == a && edge_corners[e][1] == b) || (edge_corners[e][0] == b && edge_corners[e][1] == a))
      return e;
  return -1;
}

inline Vec3 edge_midpoint(int e) {
  const auto& a = corner_offset[edge_corners[e][0]];
  const auto& b = corner_offset[edge_corners[e][1]];
  return {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])};
}

struct CaseTable {
  std::array<std::vector<std::array<int, 3>>, 256> triangles;  // edge ids
  std::array<int, 256> ambiguous_faces{};
};

// Builds the 256-case table. Each face contributes segments between crossed
// edges; on an ambiguous face (diagonal corners set) the set corners are
// separated. Because every face is resolved from its own four samples, the
// two cubes sharing a face always agree and the surface is watertight.
inline CaseTable build_table() {
  CaseTable table;
  for (int cfg = 0; cfg < 256; ++cfg) {
    auto inside = [cfg](int c) { return ((cfg >> c) & 1) != 0; };
    std::array<std::vector<int>, 12> adj;
    for (const auto& f : face_corners) {
      std::array<int, 4> fe{};
      int crossed = 0;
      for (int k = 0; k < 4; ++k) {
        fe[k] = edge_between(f[k], f[(k + 1) % 4]);
        crossed += inside(f[k]) != inside(f[(k + 1) % 4]) ? 1 : 0;
      }
      if (crossed == 2) {
        std::array<int, 2> ends{};
        int n = 0;
        for (int k = 0; k < 4; ++k)
          if (inside(f[k]) != inside(f[(k + 1) % 4])) ends[n++] = fe[k];
        adj[ends[0]].push_back(ends[1]);
        adj[ends[1]].push_back(ends[0]);
      } else if (crossed == 4) {
        ++table.ambiguous_faces[cfg];
        for (int k = 0; k < 4; ++k) {
          if (!inside(f[k])) continue;
          const int e_prev = fe[(k + 3) % 4];
          const int e_next = fe[k];
          adj[e_prev].push_back(e_next);
          adj[e_next].push_back(e_prev);
        }
      }
    }

    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (used[start] || adj[start].empty()) continue;
      std::vector<int> loop{start};
      used[start] = true;
      int prev = -1, cur = start;
      while (true) {
        const int next = adj[cur][0] == prev ? adj[cur][1] : adj[cur][0];
        if (next == start) break;
        loop.push_back(next);
        used[next] = true;
        prev = cur;
        cur = next;
      }

      // Orient: the loop normal must point from set corners toward unset ones.
      Vec3 newell{}, outward{};
      for (std::size_t i = 0; i < loop.size(); ++i) {
        const Vec3 p = edge_midpoint(loop[i]);
        const Vec3 q = edge_midpoint(loop[(i + 1) % loop.size()]);
        newell += cross(p, q);
        const int a = edge_corners[loop[i]][0], b = edge_corners[loop[i]][1];
        const int from = inside(a) ? a : b, to = inside(a) ? b : a;
        outward += Vec3{double(corner_offset[to][0] - corner_offset[from][0]),
                        double(corner_offset[to][1] - corner_offset[from][1]),
                        double(corner_offset[to][2] - corner_offset[from][2])};
      }
      if (dot(newell, outward) < 0.0) std::reverse(loop.begin(), loop.end());

      // Fan triangulation from the apex that maximizes the smallest triangle area.
      const std::size_t n = loop.size();
      std::size_t best_apex = 0;
      double best_min = -1.0;
      for (std::size_t apex = 0; apex < n; ++apex) {
        double smallest = std::numeric_limits<double>::infinity();
        for (std::size_t t = 1; t + 1 < n; ++t) {
          const Vec3 a = edge_midpoint(loop[apex]);
          const Vec3 b = edge_midpoint(loop[(apex + t) % n]);
          const Vec3 c = edge_midpoint(loop[(apex + t + 1) % n]);
          smallest = std::min(smallest, 0.5 * norm(cross(b - a, c - a)));
        }
        if (smallest > best_min + 1e-12) {
          best_min = smallest;
          best_apex = apex;
        }
      }
      for (std::size_t t = 1; t + 1 < n; ++t)
        table.triangles[cfg].push_back({loop[best_apex], loop[(best_apex + t) % n], loop[(best_apex + t + 1) % n]});
    }
  }
  return table;
}

inline const CaseTable& case_table() {
  static const CaseTable table = build_table();
  return table;
}

}  // namespace mc

/// Marching cubes over the voxel-center lattice at iso-level 0.5. Vertices land
/// on edge midpoints and are shared through their lattice edge, so welding is
/// exact. Triangles are emitted in cube order.
inline TriSurface extract_surface(const BinaryMask& m) {
  const auto& g = m.geometry;
  if (m.bits.size() != g.voxel_count()) throw ValidationError("mask size does not match geometry");
  if (m.count() == 0) throw EmptySurfaceError("mask is empty; nothing to extract");

  TriSurface s;
  const auto& table = mc::case_table();
  const auto [nx, ny, nz] = g.dims;

  for (int k = 0; k < nz && !s.touches_border; ++k)
    for (int j = 0; j < ny && !s.touches_border; ++j)
      for (int i = 0; i < nx; ++i) {
        if (i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1) {
          if (m.bits[g.index(i, j, k)]) {
            s.touches_border = true;
            break;
          }
        }
      }

  // Vertex id per lattice edge (voxel index, axis).
  std::vector<std::int32_t> edge_vertex(g.voxel_count() * 3, -1);
  auto vertex_on = [&](int i, int j, int k, int e) {
    const auto& a = mc::corner_offset[mc::edge_corners[e][0]];
    const auto& b = mc::corner_offset[mc::edge_corners[e][1]];
    const int axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
    const int ci = i + std::min(a[0], b[0]), cj = j + std::min(a[1], b[1]), ck = k + std::min(a[2], b[2]);
    const std::size_t key = g.index(ci, cj, ck) * 3 + axis;
    if (edge_vertex[key] < 0) {
      Vec3 p = g.center(ci, cj, ck);
      p[axis] += 0.5 * g.spacing[axis];
      edge_vertex[key] = static_cast<std::int32_t>(s.vertices.size());
      s.vertices.push_back(p);
    }
    return edge_vertex[key];
  };

  for (int k = 0; k + 1 < nz; ++k)
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i + 1 < nx; ++i) {
        int cfg = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = mc::corner_offset[c];
          if (m.bits[g.index(i + o[0], j + o[1], k + o[2])]) cfg |= 1 << c;
        }
        if (cfg == 0 || cfg == 255) continue;
        s.ambiguous_faces += static_cast<std::size_t>(table.ambiguous_faces[cfg]);
        for (const auto& tri : table.triangles[cfg])
          s.triangles.push_back({vertex_on(i, j, k, tri[0]), vertex_on(i, j, k, tri[1]), vertex_on(i, j, k, tri[2])});
      }

  if (s.touches_border) s.warnings.emplace_back("mask touches the volume border; surface is open there");
  if (s.ambiguous_faces > 0)
    s.warnings.emplace_back(std::to_string(s.ambiguous_faces) +
                            " ambiguous cube faces (checkerboard samples); set voxels were separated");
  return s;
}

// ---------------------------------------------------------------------------

struct BoundingBox {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void expand(const Vec3& p) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  bool empty() const { return lo.x > hi.x; }
};

struct SurfaceReport {
  bool closed{false};
  std::size_t n_vertices{0};
  std::size_t n_triangles{0};
  std::size_t components{0};
  double total_area{0.0};
  double min_triangle_area{0.0};
  double signed_volume{0.0};
  BoundingBox bounds;
};

inline double triangle_area(const TriSurface& s, const Triangle& t) {
  return 0.5 * norm(cross(s.vertices[t[1]] - s.vertices[t[0]], s.vertices[t[2]] - s.vertices[t[0]]));
}

namespace detail {

inline std::uint64_t edge_key(std::int32_t a, std::int32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

/// Closure (every edge on exactly two triangles), counts, area, bounds and
/// edge-connected component count.
inline SurfaceReport surface_report(const TriSurface& s) {
  SurfaceReport r;
  r.n_vertices = s.vertices.size();
  r.n_triangles = s.triangles.size();
  for (const auto& v : s.vertices) r.bounds.expand(v);

  CompensatedSum area, volume;
  double min_area = std::numeric_limits<double>::infinity();
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> edges;
  edges.reserve(s.triangles.size() * 2);
  for (std::size_t t = 0; t < s.triangles.size(); ++t) {
    const auto& tri = s.triangles[t];
    const double a = triangle_area(s, tri);
    area += a;
    min_area = std::min(min_area, a);
    volume += det3(s.vertices[tri[0]], s.vertices[tri[1]], s.vertices[tri[2]]) / 6.0;
    for (int e = 0; e < 3; ++e) edges[detail::edge_key(tri[e], tri[(e + 1) % 3])].push_back(t);
  }
  r.total_area = area.value();
  r.signed_volume = volume.value();
  r.min_triangle_area = s.triangles.empty() ? 0.0 : min_area;

  r.closed = !s.triangles.empty();
  detail::UnionFind uf(s.triangles.size());
  for (const auto& [key, tris] : edges) {
    if (tris.size() != 2) r.closed = false;
    for (std::size_t i = 1; i < tris.size(); ++i) uf.unite(tris[0], tris[i]);
  }
  for (std::size_t t = 0; t < s.triangles.size(); ++t)
    if (uf.find(t) == t) ++r.components;
  return r;
}

inline nlohmann::json to_json(const SurfaceReport& r) {
  nlohmann::json j = {{"closed", r.closed},
                      {"n_vertices", r.n_vertices},
                      {"n_triangles", r.n_triangles},
                      {"components", r.components},
                      {"total_area_mm2", r.total_area},
                      {"min_triangle_area_mm2", r.min_triangle_area},
                      {"signed_volume_mm3", r.signed_volume}};
  if (!r.bounds.empty())
    j["bounds_mm"] = {{"lo", {r.bounds.lo.x, r.bounds.lo.y, r.bounds.lo.z}}, {"hi", {r.bounds.hi.x, r.bounds.hi.y, r.bounds.hi.z}}};
  return j;
}

/// Binary STL (little-endian, float32).
inline void write_stl(const TriSurface& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  std::array<char, 80> header{};
  const std::string title = "atlasmesh marching cubes surface";
  std::copy(title.begin(), title.end(), header.begin());
  out.write(header.data(), header.size());
  auto put_u32 = [&](std::uint32_t v) {
    const char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF), char((v >> 24) & 0xFF)};
    out.write(b, 4);
  };
  auto put_f32 = [&](double d) { put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(d))); };
  put_u32(static_cast<std::uint32_t>(s.triangles.size()));
  for (const auto& t : s.triangles) {
    const Vec3 n = normalized(cross(s.vertices[t[1]] - s.vertices[t[0]], s.vertices[t[2]] - s.vertices[t[0]]));
    for (int a = 0; a < 3; ++a) put_f32(n[a]);
    for (int v = 0; v < 3; ++v)
      for (int a = 0; a < 3; ++a) put_f32(s.vertices[t[v]][a]);
    out.write("\0\0", 2);
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void write_obj(const TriSurface& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "# atlasmesh marching cubes surface\n";
  for (const auto& v : s.vertices) out << "v " << format_double(v.x) << ' ' << format_double(v.y) << ' ' << format_double(v.z) << '\n';
  for (const auto& t : s.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Closest-point queries

struct ClosestPoint {
  Vec3 point;
  double distance{0.0};
  std::size_t triangle{0};
};

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return a + ab * v + ac * w;
}

/// Uniform bucket grid over triangles answering "closest point within radius r".
class SurfaceLocator {
 public:
  SurfaceLocator(const TriSurface& s, double max_radius) : surface_(&s), radius_(max_radius) {
    if (!(max_radius > 0.0)) throw ArgumentError("locator radius must be > 0");
    for (const auto& v : s.vertices) box_.expand(v);
    if (s.triangles.empty()) return;
    cell_ = std::max(max_radius, 1e-9);
    for (int a = 0; a < 3; ++a) {
      box_.lo[a] -= radius_;
      box_.hi[a] += radius_;
      n_[a] = std::max(1, static_cast<int>(std::ceil((box_.hi[a] - box_.lo[a]) / cell_)));
    }
    for (std::size_t t = 0; t < s.triangles.size(); ++t) {
      BoundingBox tb;
      for (int v = 0; v < 3; ++v) tb.expand(s.vertices[s.triangles[t][v]]);
      const auto lo = cell_of(tb.lo - Vec3{radius_, radius_, radius_});
      const auto hi = cell_of(tb.hi + Vec3{radius_, radius_, radius_});
      for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
          for (int i = lo[0]; i <= hi[0]; ++i) buckets_[key(i, j, k)].push_back(static_cast<std::uint32_t>(t));
    }
  }

  /// Closest surface point within the locator radius, ties to the lower triangle index.
  std::optional<ClosestPoint> closest(const Vec3& p) const {
    if (surface_->triangles.empty()) return std::nullopt;
    for (int a = 0; a < 3; ++a)
      if (p[a] < box_.lo[a] || p[a] > box_.hi[a]) return std::nullopt;
    const auto c = cell_of(p);
    auto it = buckets_.find(key(c[0], c[1], c[2]));
    if (it == buckets_.end()) return std::nullopt;
    std::optional<ClosestPoint> best;
    double best_d2 = radius_ * radius_;
    for (std::uint32_t t : it->second) {
      const auto& tri = surface_->triangles[t];
      const Vec3 q = closest_point_on_triangle(p, surface_->vertices[tri[0]], surface_->vertices[tri[1]],
                                               surface_->vertices[tri[2]]);
      const double d2 = norm2(q - p);
      if (d2 < best_d2 || (d2 == best_d2 && (!best || t < best->triangle))) {
        best_d2 = d2;
        best = ClosestPoint{q, std::sqrt(d2), t};
      }
    }
    return best;
  }

  double radius() const { return radius_; }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp(static_cast<int>(std::floor((p[a] - box_.lo[a]) / cell_)), 0, n_[a] - 1);
    return c;
  }
  std::uint64_t key(int i, int j, int k) const {
    return static_cast<std::uint64_t>(i) + static_cast<std::uint64_t>(n_[0]) *
                                               (static_cast<std::uint64_t>(j) + static_cast<std::uint64_t>(n_[1]) * k);
  }

  const TriSurface* surface_;
  double radius_;
  double cell_{1.0};
  BoundingBox box_;
  std::array<int, 3> n_{1, 1, 1};
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets_;
};

}  // namespace atlasmesh
