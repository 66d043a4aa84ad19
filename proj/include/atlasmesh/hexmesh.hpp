#pragma once

// Overlay-grid hexahedral meshing: structured base grid from a label volume,
// projection of boundary nodes onto interface surfaces, pillow layers and
// quality-guarded smoothing.

#include <atlasmesh/quality.hpp>
#include <atlasmesh/surface.hpp>
#include <atlasmesh/volume.hpp>

#include <map>
#include <memory>
#include <queue>

namespace atlasmesh {

using Hex = std::array<NodeId, 8>;

namespace hex {

// Local faces with nodes ordered so the right-hand normal points out of the element.
inline constexpr std::array<std::array<int, 4>, 6> faces = {
    {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4}, {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}}};

}  // namespace hex

struct FaceRef {
  std::int32_t element{0};
  std::int8_t face{0};

  friend bool operator==(const FaceRef&, const FaceRef&) = default;
  friend auto operator<=>(const FaceRef&, const FaceRef&) = default;
};

struct ProjectionRecord {
  std::string set;
  double distance{0.0};  // from the node's pre-projection position
  Vec3 original;
};

struct MeshProvenance {
  int voxel_to_element_ratio{1};
  double base_spacing{0.0};
  std::map<std::string, std::size_t> projected_counts;
  std::vector<std::string> notes;
};

struct HexMesh {
  std::vector<Vec3> nodes;
  std::vector<Hex> elements;
  std::vector<Label> material_label;
  std::vector<Label> anatomical_label;
  std::map<std::string, std::vector<NodeId>> node_sets;  // sorted, unique
  std::map<std::string, std::vector<FaceRef>> side_sets;  // element on the enclosed side
  std::map<NodeId, ProjectionRecord> projections;
  MeshProvenance provenance;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t element_count() const { return elements.size(); }

  HexCorners corners(std::size_t e) const {
    HexCorners c;
    for (int i = 0; i < 8; ++i) c[i] = nodes[elements[e][i]];
    return c;
  }
  Vec3 centroid(std::size_t e) const {
    Vec3 c{};
    for (NodeId n : elements[e]) c += nodes[n];
    return c / 8.0;
  }
  std::array<NodeId, 4> face_nodes(const FaceRef& f) const {
    const auto& local = hex::faces[f.face];
    const auto& h = elements[f.element];
    return {h[local[0]], h[local[1]], h[local[2]], h[local[3]]};
  }
  /// Unit normal pointing out of `f.element`.
  Vec3 face_normal(const FaceRef& f) const {
    const auto n = face_nodes(f);
    return normalized(cross(nodes[n[2]] - nodes[n[0]], nodes[n[3]] - nodes[n[1]]));
  }

  void add_element(const Hex& h, Label material, Label anatomical = 0) {
    elements.push_back(h);
    material_label.push_back(material);
    anatomical_label.push_back(anatomical);
  }
};

inline std::vector<ElementQuality> element_qualities(const HexMesh& mesh) {
  std::vector<ElementQuality> q(mesh.element_count());
  parallel_for(q.size(), [&](std::size_t e) { q[e] = element_quality(mesh.corners(e)); });
  return q;
}

inline QualityReport quality_report(const HexMesh& mesh) {
  if (mesh.elements.empty()) throw ArgumentError("quality report of an empty mesh");
  const auto q = element_qualities(mesh);
  return quality_report(std::span<const ElementQuality>(q));
}

/// Element volume by 2x2x2 Gauss quadrature of det J.
inline double element_volume(const HexCorners& x) {
  const double g = 0.5 / std::sqrt(3.0);
  double vol = 0.0;
  for (int gp = 0; gp < 8; ++gp) {
    const double xi = 0.5 + ((gp & 1) ? g : -g), eta = 0.5 + ((gp & 2) ? g : -g), zeta = 0.5 + ((gp & 4) ? g : -g);
    const Vec3 dxi = (x[1] - x[0]) * ((1 - eta) * (1 - zeta)) + (x[2] - x[3]) * (eta * (1 - zeta)) +
                     (x[5] - x[4]) * ((1 - eta) * zeta) + (x[6] - x[7]) * (eta * zeta);
    const Vec3 deta = (x[3] - x[0]) * ((1 - xi) * (1 - zeta)) + (x[2] - x[1]) * (xi * (1 - zeta)) +
                      (x[7] - x[4]) * ((1 - xi) * zeta) + (x[6] - x[5]) * (xi * zeta);
    const Vec3 dzeta = (x[4] - x[0]) * ((1 - xi) * (1 - eta)) + (x[5] - x[1]) * (xi * (1 - eta)) +
                       (x[7] - x[3]) * ((1 - xi) * eta) + (x[6] - x[2]) * (xi * eta);
    vol += det3(dxi, deta, dzeta) / 8.0;
  }
  return vol;
}

inline double mesh_volume(const HexMesh& mesh) {
  CompensatedSum v;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) v += element_volume(mesh.corners(e));
  return v.value();
}

// ---------------------------------------------------------------------------
// Face topology

/// Face adjacency from sorted face keys. neighbor[e][f] is the matching
/// (element*6 + face) or -1 on the boundary.
struct FaceTopology {
  std::vector<std::array<std::int64_t, 6>> neighbor;
  std::size_t boundary_faces{0};
  std::size_t interior_faces{0};
  std::size_t overshared_faces{0};  // key seen more than twice

  bool conforming() const { return overshared_faces == 0; }
  bool is_boundary(const FaceRef& f) const { return neighbor[f.element][f.face] < 0; }
  std::optional<FaceRef> across(const FaceRef& f) const {
    const auto n = neighbor[f.element][f.face];
    if (n < 0) return std::nullopt;
    return FaceRef{static_cast<std::int32_t>(n / 6), static_cast<std::int8_t>(n % 6)};
  }
};

inline FaceTopology face_topology(const HexMesh& mesh) {
  struct Entry {
    std::array<NodeId, 4> key;
    std::int64_t id;
  };
  std::vector<Entry> entries(mesh.element_count() * 6);
  parallel_for(mesh.element_count(), [&](std::size_t e) {
    for (int f = 0; f < 6; ++f) {
      auto key = mesh.face_nodes({static_cast<std::int32_t>(e), static_cast<std::int8_t>(f)});
      std::sort(key.begin(), key.end());
      entries[e * 6 + f] = {key, static_cast<std::int64_t>(e * 6 + f)};
    }
  });
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.key != b.key ? a.key < b.key : a.id < b.id;
  });

  FaceTopology t;
  t.neighbor.assign(mesh.element_count(), {-1, -1, -1, -1, -1, -1});
  for (std::size_t a = 0; a < entries.size();) {
    std::size_t b = a;
    while (b < entries.size() && entries[b].key == entries[a].key) ++b;
    if (b - a == 1) {
      ++t.boundary_faces;
    } else if (b - a == 2) {
      ++t.interior_faces;
      t.neighbor[entries[a].id / 6][entries[a].id % 6] = entries[a + 1].id;
      t.neighbor[entries[a + 1].id / 6][entries[a + 1].id % 6] = entries[a].id;
    } else {
      ++t.overshared_faces;
    }
    a = b;
  }
  return t;
}

struct ConformityReport {
  bool conforming{false};
  std::size_t boundary_faces{0};
  std::size_t interior_faces{0};
  std::size_t overshared_faces{0};
};

/// Face-hash audit: every face key must occur once (boundary) or twice (interior).
inline ConformityReport audit_conformity(const HexMesh& mesh) {
  const auto t = face_topology(mesh);
  return {t.conforming(), t.boundary_faces, t.interior_faces, t.overshared_faces};
}

inline std::vector<FaceRef> boundary_faces(const HexMesh& mesh, const FaceTopology& topo) {
  std::vector<FaceRef> out;
  for (std::size_t e = 0; e < mesh.element_count(); ++e)
    for (int f = 0; f < 6; ++f)
      if (topo.neighbor[e][f] < 0) out.push_back({static_cast<std::int32_t>(e), static_cast<std::int8_t>(f)});
  return out;
}

inline std::vector<NodeId> boundary_nodes(const HexMesh& mesh) {
  const auto topo = face_topology(mesh);
  std::vector<NodeId> out;
  for (const auto& f : boundary_faces(mesh, topo))
    for (NodeId n : mesh.face_nodes(f)) out.push_back(n);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Node -> incident elements in compressed form.
struct NodeElements {
  std::vector<std::size_t> offsets;
  std::vector<std::int32_t> elements;

  std::span<const std::int32_t> of(NodeId n) const {
    return {elements.data() + offsets[n], offsets[n + 1] - offsets[n]};
  }
};

inline NodeElements node_elements(const HexMesh& mesh) {
  NodeElements ne;
  ne.offsets.assign(mesh.node_count() + 1, 0);
  for (const auto& h : mesh.elements)
    for (NodeId n : h) ++ne.offsets[n + 1];
  for (std::size_t i = 0; i < mesh.node_count(); ++i) ne.offsets[i + 1] += ne.offsets[i];
  ne.elements.resize(ne.offsets.back());
  std::vector<std::size_t> fill(ne.offsets.begin(), ne.offsets.end() - 1);
  for (std::size_t e = 0; e < mesh.element_count(); ++e)
    for (NodeId n : mesh.elements[e]) ne.elements[fill[n]++] = static_cast<std::int32_t>(e);
  return ne;
}

// ---------------------------------------------------------------------------
// Base grid

namespace detail {

inline std::array<int, 3> grid_factors(const VolumeGeometry& g, double spacing) {
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw ArgumentError("mesh spacing must be > 0");
  std::array<int, 3> f{};
  for (int a = 0; a < 3; ++a) {
    const double ratio = spacing / g.spacing[a];
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio)
      throw ArgumentError("mesh spacing " + format_double(spacing) + " mm is not a positive integer multiple of the voxel spacing " +
                          format_double(g.spacing[a]) + " mm (finer-than-voxel grids are unsupported)");
    f[a] = static_cast<int>(rounded);
  }
  return f;
}

}  // namespace detail

/// Structured grid of cubic cells of size `spacing` covering the volume. Each
/// cell takes the majority label of the voxels it covers; background cells are dropped.
inline HexMesh build_base_grid(const LabelVolume& volume, double spacing) {
  volume.geometry.validate();
  const auto factors = detail::grid_factors(volume.geometry, spacing);
  const LabelVolume coarse = downsample(volume, factors);
  const auto& g = coarse.geometry;
  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  const std::size_t lx = nx + 1, ly = ny + 1;
  auto lattice = [&](int i, int j, int k) { return i + lx * (j + ly * static_cast<std::size_t>(k)); };

  std::vector<std::int32_t> node_of(lx * ly * (nz + 1), -1);
  std::size_t cells = 0;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (coarse.at(i, j, k) == 0) continue;
        ++cells;
        for (int c = 0; c < 8; ++c) {
          const auto& o = mc::corner_offset[c];
          node_of[lattice(i + o[0], j + o[1], k + o[2])] = 0;
        }
      }
  if (cells == 0) throw EmptyMeshError("volume has no labeled voxels; nothing to mesh");

  HexMesh mesh;
  const Vec3 lower = g.lower_corner();
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        auto& id = node_of[lattice(i, j, k)];
        if (id < 0) continue;
        id = static_cast<std::int32_t>(mesh.nodes.size());
        mesh.nodes.push_back({lower.x + i * g.spacing.x, lower.y + j * g.spacing.y, lower.z + k * g.spacing.z});
      }

  mesh.elements.reserve(cells);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const Label l = coarse.at(i, j, k);
        if (l == 0) continue;
        Hex h{};
        for (int c = 0; c < 8; ++c) {
          const auto& o = mc::corner_offset[c];
          h[c] = node_of[lattice(i + o[0], j + o[1], k + o[2])];
        }
        mesh.add_element(h, l);
      }
  mesh.provenance.voxel_to_element_ratio = factors[0] * factors[1] * factors[2];
  mesh.provenance.base_spacing = spacing;
  return mesh;
}

// ---------------------------------------------------------------------------
// Projection

namespace detail {

inline double mesh_spacing(const HexMesh& mesh) {
  if (mesh.provenance.base_spacing > 0.0) return mesh.provenance.base_spacing;
  CompensatedSum len;
  std::size_t n = 0;
  for (const auto& h : mesh.elements)
    for (const auto& e : hex::edges) {
      len += distance(mesh.nodes[h[e[0]]], mesh.nodes[h[e[1]]]);
      ++n;
    }
  return n ? len.value() / static_cast<double>(n) : 1.0;
}

/// Faces bounding the region the surface encloses: region boundary faces when
/// the surface knows its labels, otherwise the exterior boundary of the mesh.
inline std::vector<FaceRef> surface_sheet(const HexMesh& mesh, const FaceTopology& topo, const TriSurface& surface) {
  if (!surface.region_labels) return boundary_faces(mesh, topo);
  const auto& labels = *surface.region_labels;
  std::vector<FaceRef> out;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    if (!labels.contains(mesh.material_label[e])) continue;
    for (int f = 0; f < 6; ++f) {
      const FaceRef ref{static_cast<std::int32_t>(e), static_cast<std::int8_t>(f)};
      const auto other = topo.across(ref);
      if (!other || !labels.contains(mesh.material_label[other->element])) out.push_back(ref);
    }
  }
  return out;
}

inline void erase_from_set(std::vector<NodeId>& set, NodeId n) {
  auto it = std::lower_bound(set.begin(), set.end(), n);
  if (it != set.end() && *it == n) set.erase(it);
}

}  // namespace detail

/// Moves every node of the region boundary whose closest surface point lies
/// within band * spacing onto that point. Interior nodes never move. A node
/// already claimed by another surface switches only if this surface is closer
/// to its original position.
inline HexMesh project_boundary_nodes(HexMesh mesh, const TriSurface& surface, double band, const std::string& set_name) {
  if (!(band > 0.0 && band <= 0.5)) throw ArgumentError("projection band must lie in (0, 0.5] cells");
  if (surface.triangles.empty()) throw ArgumentError("cannot project onto an empty surface");
  if (set_name.empty()) throw ArgumentError("node set name must not be empty");

  const double spacing = detail::mesh_spacing(mesh);
  const auto topo = face_topology(mesh);
  const auto sheet = detail::surface_sheet(mesh, topo, surface);

  std::vector<NodeId> candidates;
  for (const auto& f : sheet)
    for (NodeId n : mesh.face_nodes(f)) candidates.push_back(n);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  const SurfaceLocator locator(surface, band * spacing);
  std::vector<std::optional<ClosestPoint>> hits(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t i) {
    const NodeId n = candidates[i];
    auto rec = mesh.projections.find(n);
    if (rec != mesh.projections.end() && rec->second.set == set_name) return;
    hits[i] = locator.closest(rec != mesh.projections.end() ? rec->second.original : mesh.nodes[n]);
  });

  // Distinct nodes can share a closest point near convex surface features; a
  // move that would bring a node within a quarter cell of an edge neighbor is skipped.
  const auto incident = node_elements(mesh);
  const double min_edge = 0.25 * spacing;
  auto collapses = [&](NodeId n, const Vec3& target) {
    for (auto e : incident.of(n)) {
      const auto& h = mesh.elements[e];
      for (const auto& ed : hex::edges) {
        const NodeId other = h[ed[0]] == n ? h[ed[1]] : (h[ed[1]] == n ? h[ed[0]] : -1);
        if (other >= 0 && distance(mesh.nodes[other], target) < min_edge) return true;
      }
    }
    return false;
  };

  auto& set = mesh.node_sets[set_name];
  std::size_t moved = 0, skipped = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!hits[i]) continue;
    const NodeId n = candidates[i];
    if (collapses(n, hits[i]->point)) {
      ++skipped;
      continue;
    }
    auto rec = mesh.projections.find(n);
    if (rec != mesh.projections.end()) {
      if (!(hits[i]->distance < rec->second.distance)) continue;
      detail::erase_from_set(mesh.node_sets[rec->second.set], n);
      rec->second.set = set_name;
      rec->second.distance = hits[i]->distance;
    } else {
      mesh.projections.emplace(n, ProjectionRecord{set_name, hits[i]->distance, mesh.nodes[n]});
    }
    mesh.nodes[n] = hits[i]->point;
    set.push_back(n);
    ++moved;
  }
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  mesh.side_sets[set_name] = sheet;
  mesh.provenance.projected_counts[set_name] = moved;
  if (moved == 0) mesh.provenance.notes.push_back("projection onto '" + set_name + "' moved no nodes");
  if (skipped > 0)
    mesh.provenance.notes.push_back("projection onto '" + set_name + "' skipped " + std::to_string(skipped) +
                                    " nodes that would collapse an edge");
  return mesh;
}

// ---------------------------------------------------------------------------
// Pillowing

namespace detail {

/// Pillows the side of `sheet` that its face references point into; returns
/// the sheet faces of the new hexes (face 1, on the old side of the sheet).
inline std::vector<FaceRef> pillow_one_side(HexMesh& mesh, const FaceTopology& topo, const std::vector<FaceRef>& sheet,
                                            const std::string& set_name) {
  // Sheet nodes and the face-id lookup used to stop the flood fill.
  std::vector<NodeId> sheet_nodes;
  for (const auto& f : sheet)
    for (NodeId n : mesh.face_nodes(f)) sheet_nodes.push_back(n);
  std::sort(sheet_nodes.begin(), sheet_nodes.end());
  sheet_nodes.erase(std::unique(sheet_nodes.begin(), sheet_nodes.end()), sheet_nodes.end());
  auto on_sheet = [&](NodeId n) { return std::binary_search(sheet_nodes.begin(), sheet_nodes.end(), n); };

  std::vector<std::uint8_t> sheet_face(mesh.element_count() * 6, 0);
  std::vector<std::uint8_t> side(mesh.element_count(), 0);  // 1 inward, 2 outward
  for (const auto& f : sheet) {
    sheet_face[f.element * 6 + f.face] = 1;
    if (auto o = topo.across(f)) {
      sheet_face[o->element * 6 + o->face] = 1;
      side[o->element] |= 2;
    }
  }
  for (const auto& f : sheet) {
    if (side[f.element] & 2)
      throw TopologyError("sheet '" + set_name + "' has element " + std::to_string(f.element) + " on both sides");
    side[f.element] = 1;
  }

  // Grow the enclosed side through non-sheet faces, limited to elements touching the sheet.
  std::vector<std::int32_t> inward;
  std::vector<std::uint8_t> visited(mesh.element_count(), 0);
  std::queue<std::int32_t> queue;
  for (const auto& f : sheet)
    if (!visited[f.element]) {
      visited[f.element] = 1;
      queue.push(f.element);
    }
  while (!queue.empty()) {
    const auto e = queue.front();
    queue.pop();
    inward.push_back(e);
    for (int f = 0; f < 6; ++f) {
      if (sheet_face[e * 6 + f]) continue;
      const auto o = topo.across({e, static_cast<std::int8_t>(f)});
      if (!o || visited[o->element]) continue;
      const auto& h = mesh.elements[o->element];
      if (std::none_of(h.begin(), h.end(), on_sheet)) continue;
      if (side[o->element] & 2)
        throw TopologyError("sheet '" + set_name + "' does not separate the mesh (leak into element " +
                            std::to_string(o->element) + ")");
      visited[o->element] = 1;
      queue.push(o->element);
    }
  }
  std::sort(inward.begin(), inward.end());

  // Averaged inward normals.
  std::vector<Vec3> normal(sheet_nodes.size());
  auto slot = [&](NodeId n) {
    return static_cast<std::size_t>(std::lower_bound(sheet_nodes.begin(), sheet_nodes.end(), n) - sheet_nodes.begin());
  };
  for (const auto& f : sheet) {
    const Vec3 inward_normal = -mesh.face_normal(f);
    for (NodeId n : mesh.face_nodes(f)) normal[slot(n)] += inward_normal;
  }

  // Inward depth of the nearest off-sheet edge neighbor in the split layer.
  std::vector<std::vector<NodeId>> off_sheet(sheet_nodes.size());
  for (auto e : inward) {
    const auto& h = mesh.elements[e];
    for (const auto& ed : hex::edges) {
      const NodeId a = h[ed[0]], b = h[ed[1]];
      if (on_sheet(a) && !on_sheet(b)) off_sheet[slot(a)].push_back(b);
      if (on_sheet(b) && !on_sheet(a)) off_sheet[slot(b)].push_back(a);
    }
  }

  // A duplicate is offset from whichever of the projected and pre-projection
  // positions lies further inward, so the new layer never starts out folded.
  // The offset is half a cell, capped at half the depth of the split layer.
  const double offset = 0.5 * detail::mesh_spacing(mesh);
  std::vector<NodeId> twin(sheet_nodes.size());
  for (std::size_t i = 0; i < sheet_nodes.size(); ++i) {
    const NodeId n = sheet_nodes[i];
    const Vec3 dir = normalized(normal[i]);
    Vec3 base = mesh.nodes[n];
    if (auto rec = mesh.projections.find(n); rec != mesh.projections.end() && dot(base - rec->second.original, dir) < 0.0)
      base = rec->second.original;
    double step = offset;
    for (NodeId m : off_sheet[i]) {
      const double depth = dot(mesh.nodes[m] - base, dir);
      if (depth > 0.0) step = std::min(step, 0.5 * depth);
    }
    twin[i] = static_cast<NodeId>(mesh.nodes.size());
    mesh.nodes.push_back(base + dir * step);
  }
  for (auto e : inward)
    for (NodeId& n : mesh.elements[e])
      if (on_sheet(n)) n = twin[slot(n)];

  std::vector<FaceRef> new_sheet;
  new_sheet.reserve(sheet.size());
  for (const auto& f : sheet) {
    const auto& local = hex::faces[f.face];
    const auto& h = mesh.elements[f.element];
    Hex p{};
    for (int k = 0; k < 4; ++k) {
      const NodeId shrunk = h[local[k]];
      p[k] = shrunk;
      p[k + 4] = sheet_nodes[static_cast<std::size_t>(std::find(twin.begin(), twin.end(), shrunk) - twin.begin())];
    }
    new_sheet.push_back({static_cast<std::int32_t>(mesh.element_count()), 1});
    mesh.add_element(p, mesh.material_label[f.element], mesh.anatomical_label[f.element]);
  }

  return new_sheet;
}

}  // namespace detail


/// Inserts one sheet of hexes along the named sheet. Each sheet node is
/// duplicated, the duplicate is pushed 0.5 * spacing along the averaged inward
/// normal, elements on the enclosed side switch to the duplicates and a new hex
/// joins every sheet face to its shrunken copy. Labels come from the split
/// element. With `both_sides`, an interior sheet is pillowed on the outer side as
/// well. The side set afterwards names the outer faces of the inner pillow hexes.
inline HexMesh insert_pillow_layer(HexMesh mesh, const std::string& set_name, bool both_sides = false) {
  const auto topo = face_topology(mesh);

  std::vector<FaceRef> sheet;
  if (auto it = mesh.side_sets.find(set_name); it != mesh.side_sets.end() && !it->second.empty()) {
    sheet = it->second;
  } else {
    auto ns = mesh.node_sets.find(set_name);
    if (ns == mesh.node_sets.end() || ns->second.empty())
      throw TopologyError("node set '" + set_name + "' is missing or empty; nothing to pillow");
    const auto& nodes = ns->second;
    for (const auto& f : boundary_faces(mesh, topo)) {
      const auto fn = mesh.face_nodes(f);
      if (std::all_of(fn.begin(), fn.end(), [&](NodeId n) { return std::binary_search(nodes.begin(), nodes.end(), n); }))
        sheet.push_back(f);
    }
    if (sheet.empty())
      throw TopologyError("node set '" + set_name + "' does not cover any whole boundary face (isolated nodes)");
  }
  for (const auto& f : sheet)
    if (f.element < 0 || static_cast<std::size_t>(f.element) >= mesh.element_count() || f.face < 0 || f.face > 5)
      throw TopologyError("side set '" + set_name + "' references a face outside the mesh");

  auto inner = detail::pillow_one_side(mesh, topo, sheet, set_name);
  if (both_sides) {
    const auto topo2 = face_topology(mesh);
    std::vector<FaceRef> outer;
    for (const auto& f : inner)
      if (auto o = topo2.across(f)) outer.push_back(*o);
    if (!outer.empty()) detail::pillow_one_side(mesh, topo2, outer, set_name);
  }
  mesh.side_sets[set_name] = std::move(inner);
  return mesh;
}

// ---------------------------------------------------------------------------
// Smoothing

struct SmoothingStats {
  std::size_t iterations_run{0};
  std::size_t moves_accepted{0};
  double min_sj_before{0.0};
  double min_sj_after{0.0};
};

/// Quality-guarded Jacobi Laplacian smoothing of nodes within two element
/// layers of projected nodes. Each eligible node proposes the centroid of its
/// edge neighbors; projected nodes are re-projected onto their surface (or held
/// if no surface is supplied for their set); unprojected exterior boundary
/// nodes are held. A move is rejected if an incident element falls below
/// min(max(min_accept_sj, current mesh minimum), its previous value), so the
/// mesh minimum scaled Jacobian never decreases.
inline HexMesh smooth_mesh(HexMesh mesh, int iterations, double min_accept_sj,
                           const std::map<std::string, const TriSurface*>& surfaces = {},
                           SmoothingStats* stats = nullptr) {
  if (iterations < 0) throw ArgumentError("smoothing iterations must be >= 0");
  if (!(min_accept_sj > 0.0 && min_accept_sj < 1.0)) throw ArgumentError("min_accept_sj must lie in (0, 1)");
  SmoothingStats local_stats;
  SmoothingStats& st = stats ? *stats : local_stats;
  st = {};
  if (iterations == 0 || mesh.projections.empty() || mesh.elements.empty()) return mesh;

  const std::size_t nn = mesh.node_count();
  const auto incident = node_elements(mesh);
  const double spacing = detail::mesh_spacing(mesh);

  // Eligibility: two element layers around projected nodes.
  std::vector<std::uint8_t> eligible(nn, 0);
  std::vector<NodeId> frontier;
  for (const auto& [n, rec] : mesh.projections) {
    eligible[n] = 1;
    frontier.push_back(n);
  }
  for (int layer = 0; layer < 2; ++layer) {
    std::vector<NodeId> next;
    for (NodeId n : frontier)
      for (auto e : incident.of(n))
        for (NodeId m : mesh.elements[e])
          if (!eligible[m]) {
            eligible[m] = 1;
            next.push_back(m);
          }
    frontier = std::move(next);
  }

  // Surface each node slides on: its projection set, else the first listed
  // sheet it lies on. Exterior boundary nodes without a surface are held.
  std::vector<std::unique_ptr<SurfaceLocator>> locators;
  std::map<std::string, std::size_t> locator_of;
  for (const auto& [name, surf] : surfaces)
    if (surf && !surf->triangles.empty()) {
      locator_of[name] = locators.size();
      locators.push_back(std::make_unique<SurfaceLocator>(*surf, spacing));
    }
  std::vector<std::int32_t> slide(nn, -1);
  for (auto it = locator_of.rbegin(); it != locator_of.rend(); ++it)
    if (auto ss = mesh.side_sets.find(it->first); ss != mesh.side_sets.end())
      for (const auto& f : ss->second)
        for (NodeId n : mesh.face_nodes(f)) slide[n] = static_cast<std::int32_t>(it->second);
  for (const auto& [n, rec] : mesh.projections) {
    auto it = locator_of.find(rec.set);
    slide[n] = it != locator_of.end() ? static_cast<std::int32_t>(it->second) : -1;
    if (it == locator_of.end()) eligible[n] = 0;
  }
  for (NodeId n : boundary_nodes(mesh))
    if (slide[n] < 0) eligible[n] = 0;

  std::vector<NodeId> movable;
  for (std::size_t n = 0; n < nn; ++n)
    if (eligible[n] && incident.offsets[n + 1] > incident.offsets[n]) movable.push_back(static_cast<NodeId>(n));

  // Edge neighbors of movable nodes.
  std::vector<std::vector<NodeId>> neighbors(movable.size());
  parallel_for(movable.size(), [&](std::size_t i) {
    const NodeId n = movable[i];
    auto& out = neighbors[i];
    for (auto e : incident.of(n)) {
      const auto& h = mesh.elements[e];
      for (const auto& ed : hex::edges) {
        if (h[ed[0]] == n) out.push_back(h[ed[1]]);
        if (h[ed[1]] == n) out.push_back(h[ed[0]]);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  });

  std::vector<double> sj(mesh.element_count());
  parallel_for(sj.size(), [&](std::size_t e) { sj[e] = scaled_jacobian(mesh.corners(e)); });
  double global_min = *std::min_element(sj.begin(), sj.end());
  st.min_sj_before = global_min;

  std::vector<Vec3> proposal(movable.size());
  std::vector<std::uint8_t> has_proposal(movable.size(), 0);
  std::vector<std::int32_t> mark(mesh.element_count(), -1);
  std::vector<double> new_sj(mesh.element_count());

  for (int it = 0; it < iterations; ++it) {
    parallel_for(movable.size(), [&](std::size_t i) {
      const NodeId n = movable[i];
      Vec3 c{};
      for (NodeId m : neighbors[i]) c += mesh.nodes[m];
      c = c / static_cast<double>(neighbors[i].size());
      has_proposal[i] = 0;
      if (slide[n] >= 0) {
        const auto hit = locators[slide[n]]->closest(c);
        if (!hit) return;
        c = hit->point;
      }
      if (norm(c - mesh.nodes[n]) <= 1e-12 * spacing) return;
      proposal[i] = c;
      has_proposal[i] = 1;
    });

    std::vector<std::size_t> moved;  // indices into movable
    std::vector<Vec3> previous;
    for (std::size_t i = 0; i < movable.size(); ++i)
      if (has_proposal[i]) {
        moved.push_back(i);
        previous.push_back(mesh.nodes[movable[i]]);
        mesh.nodes[movable[i]] = proposal[i];
      }
    if (moved.empty()) break;

    std::vector<std::int32_t> affected;
    for (std::size_t i : moved)
      for (auto e : incident.of(movable[i]))
        if (mark[e] != it) {
          mark[e] = it;
          affected.push_back(e);
        }
    std::sort(affected.begin(), affected.end());

    std::vector<std::uint8_t> reverted(moved.size(), 0);
    std::vector<std::size_t> slot_of(nn, SIZE_MAX);
    for (std::size_t k = 0; k < moved.size(); ++k) slot_of[movable[moved[k]]] = k;
    const double bound = std::max(min_accept_sj, global_min);

    std::vector<std::int32_t> check = affected;
    while (!check.empty()) {
      parallel_for(check.size(), [&](std::size_t i) { new_sj[check[i]] = scaled_jacobian(mesh.corners(check[i])); });
      std::vector<std::int32_t> recheck;
      for (auto e : check) {
        if (!(new_sj[e] < std::min(bound, sj[e]))) continue;
        for (NodeId n : mesh.elements[e]) {
          const std::size_t k = slot_of[n];
          if (k == SIZE_MAX || reverted[k]) continue;
          reverted[k] = 1;
          mesh.nodes[n] = previous[k];
          for (auto e2 : incident.of(n)) recheck.push_back(e2);
        }
      }
      std::sort(recheck.begin(), recheck.end());
      recheck.erase(std::unique(recheck.begin(), recheck.end()), recheck.end());
      check = std::move(recheck);
    }

    std::size_t accepted = 0;
    for (std::size_t k = 0; k < moved.size(); ++k) accepted += reverted[k] ? 0 : 1;
    for (auto e : affected) sj[e] = new_sj[e];
    global_min = *std::min_element(sj.begin(), sj.end());
    st.moves_accepted += accepted;
    st.iterations_run = static_cast<std::size_t>(it) + 1;
    if (accepted == 0) break;
  }

  // Sequential repair of elements still below the threshold: hill-climb each
  // of their nodes on the minimum scaled Jacobian of its incident elements.
  std::vector<std::size_t> movable_slot(nn, SIZE_MAX);
  for (std::size_t i = 0; i < movable.size(); ++i) movable_slot[movable[i]] = i;
  for (int sweep = 0; sweep < 5 * iterations; ++sweep) {
    std::vector<NodeId> targets;
    for (std::size_t e = 0; e < sj.size(); ++e)
      if (sj[e] < min_accept_sj)
        for (NodeId n : mesh.elements[e])
          if (movable_slot[n] != SIZE_MAX) targets.push_back(n);
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

    std::size_t improved = 0;
    for (NodeId n : targets) {
      const auto elems = incident.of(n);
      std::vector<double> trial(elems.size());
      auto score = [&]() {
        double m = std::numeric_limits<double>::max();
        for (std::size_t k = 0; k < elems.size(); ++k) {
          trial[k] = scaled_jacobian(mesh.corners(static_cast<std::size_t>(elems[k])));
          if (trial[k] < std::min(min_accept_sj, sj[elems[k]])) return -std::numeric_limits<double>::max();
          m = std::min(m, trial[k]);
        }
        return m;
      };
      const Vec3 start = mesh.nodes[n];
      double best = score();
      Vec3 best_pos = start;

      const std::size_t slot = movable_slot[n];
      Vec3 c{};
      for (NodeId m : neighbors[slot]) c += mesh.nodes[m];
      c = c / static_cast<double>(neighbors[slot].size());
      std::vector<Vec3> candidates = {c, start + (c - start) * 0.5, start + (c - start) * 0.25};
      for (double step : {0.4, 0.2, 0.1, 0.05, 0.02})
        for (int a = 0; a < 3; ++a)
          for (double sign : {1.0, -1.0}) {
            Vec3 d{};
            d[a] = sign * step * spacing;
            candidates.push_back(start + d);
          }
      for (Vec3 q : candidates) {
        if (slide[n] >= 0) {
          const auto hit = locators[slide[n]]->closest(q);
          if (!hit) continue;
          q = hit->point;
        }
        mesh.nodes[n] = q;
        const double v = score();
        if (v > best + 1e-12) {
          best = v;
          best_pos = q;
        }
      }
      mesh.nodes[n] = best_pos;
      if (best_pos != start) {
        ++improved;
        for (auto e : elems) sj[e] = scaled_jacobian(mesh.corners(static_cast<std::size_t>(e)));
      }
    }
    st.moves_accepted += improved;
    if (improved == 0) break;
  }
  global_min = *std::min_element(sj.begin(), sj.end());
  st.min_sj_after = global_min;
  return mesh;
}

// ---------------------------------------------------------------------------
// Pipeline

struct SurfaceSpec {
  TriSurface surface;
  std::string node_set;
};

struct MeshParams {
  double spacing{1.0};
  double projection_band{0.5};
  bool pillow{true};
  int smoothing_iterations{10};
  double min_accept_sj{0.2};
  std::vector<SurfaceSpec> surfaces;

  void validate() const {
    if (!(spacing > 0.0)) throw ArgumentError("mesh spacing must be > 0");
    if (!(projection_band > 0.0 && projection_band <= 0.5)) throw ArgumentError("projection band must lie in (0, 0.5]");
    if (smoothing_iterations < 0) throw ArgumentError("smoothing iterations must be >= 0");
    if (!(min_accept_sj > 0.0 && min_accept_sj < 1.0)) throw ArgumentError("min_accept_sj must lie in (0, 1)");
    std::set<std::string> names;
    for (const auto& s : surfaces)
      if (s.node_set.empty() || !names.insert(s.node_set).second)
        throw ArgumentError("surface node-set names must be unique and non-empty");
  }
};

/// Standard conforming interfaces of a material map: outer scalp, scalp-skull
/// and skull-CSF, each extracted from the mask of all labels on its inner side.
inline std::vector<SurfaceSpec> material_interface_surfaces(const LabelVolume& material_map) {
  const std::array<std::pair<const char*, Label>, 3> interfaces = {
      {{"outer_scalp", material::scalp}, {"scalp_skull", material::skull}, {"skull_csf", material::csf}}};
  std::vector<SurfaceSpec> out;
  for (const auto& [name, lowest] : interfaces) {
    std::set<Label> ids;
    for (Label l : material_map.nonzero_labels())
      if (l >= lowest) ids.insert(l);
    if (ids.empty()) continue;
    const auto mask = mask_of(material_map, ids);
    if (mask.count() == 0) continue;
    SurfaceSpec spec{extract_surface(mask), name};
    spec.surface.region_labels = ids;
    out.push_back(std::move(spec));
  }
  return out;
}

/// build_base_grid -> (project, pillow) per surface -> smooth, then audits
/// conformity, inversion and labels.
inline HexMesh generate_mesh(const LabelVolume& volume, const MeshParams& params, SmoothingStats* stats = nullptr) {
  params.validate();
  HexMesh mesh = build_base_grid(volume, params.spacing);
  std::map<std::string, const TriSurface*> surfaces;
  for (const auto& s : params.surfaces) {
    mesh = project_boundary_nodes(std::move(mesh), s.surface, params.projection_band, s.node_set);
    if (params.pillow && !mesh.side_sets[s.node_set].empty()) mesh = insert_pillow_layer(std::move(mesh), s.node_set, true);
    surfaces[s.node_set] = &s.surface;
  }
  mesh = smooth_mesh(std::move(mesh), params.smoothing_iterations, params.min_accept_sj, surfaces, stats);

  const auto conformity = audit_conformity(mesh);
  if (!conformity.conforming)
    throw GenerationError({}, "mesh is not conforming: " + std::to_string(conformity.overshared_faces) +
                                  " faces shared by more than two elements");
  std::vector<std::size_t> bad;
  for (std::size_t e = 0; e < mesh.element_count(); ++e)
    if (scaled_jacobian(mesh.corners(e)) <= 0.0) bad.push_back(e);
  if (!bad.empty()) {
    std::string list;
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 20); ++i) list += (i ? "," : "") + std::to_string(bad[i]);
    throw GenerationError(bad, std::to_string(bad.size()) + " inverted or degenerate elements after generation: " + list +
                                   (bad.size() > 20 ? ",..." : ""));
  }
  for (std::size_t e = 0; e < mesh.element_count(); ++e)
    if (mesh.material_label[e] == 0) throw GenerationError({e}, "element without material label");
  return mesh;
}

}  // namespace atlasmesh
