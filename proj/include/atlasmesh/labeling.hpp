#pragma once

// Voxel-label transfer onto mesh elements through an octree over labeled
// voxel centers, and per-label statistics of element or nodal fields.

#include <atlasmesh/hexmesh.hpp>
#include <atlasmesh/volume.hpp>

namespace atlasmesh {

/// Octree over the centers of all nonzero voxels. Answers nearest-center
/// queries with ties resolved to the lower voxel linear index.
class CellLocator {
 public:
  struct Octant {
    Vec3 lo, hi;
    std::int32_t first_child{-1};  // eight consecutive octants, or -1 for a leaf
    std::uint32_t begin{0}, end{0};
    std::uint8_t depth{0};
  };
  struct Hit {
    std::size_t voxel{0};
    double distance2{0.0};
  };

  CellLocator() = default;

  CellLocator(const LabelVolume& v, std::size_t max_leaf = 64, int max_depth = 12)
      : geometry_(v.geometry), max_leaf_(max_leaf), max_depth_(max_depth) {
    if (max_leaf == 0 || max_depth < 0) throw ArgumentError("octree leaf size must be >= 1 and depth >= 0");
    for (std::size_t i = 0; i < v.labels.size(); ++i)
      if (v.labels[i] != 0) voxels_.push_back(static_cast<std::uint32_t>(i));
    if (voxels_.empty()) throw ArgumentError("cannot build a locator over a volume without labeled voxels");
    centers_.reserve(voxels_.size());
    for (auto idx : voxels_) centers_.push_back(geometry_.center(idx));

    Vec3 lo = centers_[0], hi = centers_[0];
    for (const auto& c : centers_)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], c[a]);
        hi[a] = std::max(hi[a], c[a]);
      }
    const Vec3 mid = (lo + hi) * 0.5;
    const double half = 0.5 * std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z}) + 1e-9;
    octants_.push_back({mid - Vec3{half, half, half}, mid + Vec3{half, half, half}, -1, 0,
                        static_cast<std::uint32_t>(voxels_.size()), 0});
    split(0);
  }

  const VolumeGeometry& geometry() const { return geometry_; }
  const std::vector<Octant>& octants() const { return octants_; }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(octants_.begin(), octants_.end(), [](const Octant& o) { return o.first_child < 0; }));
  }
  std::size_t voxel_count() const { return voxels_.size(); }
  std::size_t max_leaf() const { return max_leaf_; }
  int max_depth() const { return max_depth_; }

  /// Nearest labeled voxel center to p; points outside the volume get the nearest boundary voxel.
  Hit nearest(const Vec3& p) const {
    Hit best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
    visit(0, p, best);
    return best;
  }

 private:
  static double box_distance2(const Octant& o, const Vec3& p) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double d = p[a] < o.lo[a] ? o.lo[a] - p[a] : (p[a] > o.hi[a] ? p[a] - o.hi[a] : 0.0);
      d2 += d * d;
    }
    return d2;
  }

  void split(std::size_t root) {
    std::vector<std::size_t> stack{root};
    while (!stack.empty()) {
      const std::size_t id = stack.back();
      stack.pop_back();
      const Octant node = octants_[id];
      if (node.end - node.begin <= max_leaf_ || node.depth >= max_depth_) continue;
      const Vec3 mid = (node.lo + node.hi) * 0.5;
      auto octant_of = [&](std::uint32_t k) {
        const Vec3& c = centers_[k];
        return (c.x >= mid.x ? 1 : 0) | (c.y >= mid.y ? 2 : 0) | (c.z >= mid.z ? 4 : 0);
      };
      // Counting sort of the range by octant; keeps linear order inside each child.
      std::array<std::uint32_t, 9> start{};
      for (std::uint32_t k = node.begin; k < node.end; ++k) ++start[octant_of(k) + 1];
      for (int o = 0; o < 8; ++o) start[o + 1] += start[o];
      std::vector<std::uint32_t> vox(node.end - node.begin);
      std::vector<Vec3> cen(node.end - node.begin);
      auto fill = start;
      for (std::uint32_t k = node.begin; k < node.end; ++k) {
        const auto slot = fill[octant_of(k)]++;
        vox[slot] = voxels_[k];
        cen[slot] = centers_[k];
      }
      std::copy(vox.begin(), vox.end(), voxels_.begin() + node.begin);
      std::copy(cen.begin(), cen.end(), centers_.begin() + node.begin);

      const auto first = static_cast<std::int32_t>(octants_.size());
      octants_[id].first_child = first;
      for (int o = 0; o < 8; ++o) {
        Octant child;
        for (int a = 0; a < 3; ++a) {
          const bool upper = (o >> a) & 1;
          child.lo[a] = upper ? mid[a] : node.lo[a];
          child.hi[a] = upper ? node.hi[a] : mid[a];
        }
        child.begin = node.begin + start[o];
        child.end = node.begin + start[o + 1];
        child.depth = static_cast<std::uint8_t>(node.depth + 1);
        octants_.push_back(child);
      }
      for (int o = 7; o >= 0; --o) stack.push_back(static_cast<std::size_t>(first + o));
    }
  }

  void visit(std::size_t id, const Vec3& p, Hit& best) const {
    const Octant& o = octants_[id];
    if (o.begin == o.end) return;
    if (o.first_child < 0) {
      for (std::uint32_t k = o.begin; k < o.end; ++k) {
        const Vec3 d = p - centers_[k];
        const double d2 = d.x * d.x + d.y * d.y + d.z * d.z;
        if (d2 < best.distance2 || (d2 == best.distance2 && voxels_[k] < best.voxel)) best = {voxels_[k], d2};
      }
      return;
    }
    std::array<std::pair<double, int>, 8> order;
    for (int c = 0; c < 8; ++c) order[c] = {box_distance2(octants_[o.first_child + c], p), c};
    std::sort(order.begin(), order.end());
    for (const auto& [d2, c] : order) {
      if (d2 > best.distance2) break;  // equal distance may still hold a lower index
      visit(static_cast<std::size_t>(o.first_child + c), p, best);
    }
  }

  VolumeGeometry geometry_;
  std::size_t max_leaf_{64};
  int max_depth_{12};
  std::vector<std::uint32_t> voxels_;
  std::vector<Vec3> centers_;
  std::vector<Octant> octants_;
};

inline CellLocator build_locator(const LabelVolume& v, std::size_t max_leaf = 64, int max_depth = 12) {
  return CellLocator(v, max_leaf, max_depth);
}

/// Assigns each element the label of the labeled voxel whose center is
/// nearest to the element centroid. `field` is "anatomical" or "material".
inline HexMesh transfer_labels(HexMesh mesh, const LabelVolume& atlas, const CellLocator& locator, const std::string& field) {
  if (field != "anatomical" && field != "material")
    throw ArgumentError("label field must be 'anatomical' or 'material', got '" + field + "'");
  if (!(locator.geometry() == atlas.geometry)) throw ArgumentError("locator was built from a different volume geometry");
  auto& target = field == "anatomical" ? mesh.anatomical_label : mesh.material_label;
  target.resize(mesh.element_count());
  parallel_for(mesh.element_count(), [&](std::size_t e) { target[e] = atlas.labels[locator.nearest(mesh.centroid(e)).voxel]; });
  return mesh;
}

// ---------------------------------------------------------------------------

struct RegionStats {
  Label label{0};
  std::size_t count{0};
  std::optional<double> min, max, mean;  // empty when count == 0
};

enum class FieldLocation { automatic, element, node };

/// Min, max and mean of `field` per requested label. Element fields fold over
/// elements carrying the label; nodal fields over nodes incident to at least
/// one such element, each node once. With a label table, a group id also
/// matches all its descendants.
inline std::vector<RegionStats> region_stats(const HexMesh& mesh, std::span<const double> field, const std::vector<Label>& label_ids,
                                             const std::string& label_field, const LabelTable* table = nullptr,
                                             FieldLocation location = FieldLocation::automatic) {
  if (label_field != "anatomical" && label_field != "material")
    throw ArgumentError("label field must be 'anatomical' or 'material', got '" + label_field + "'");
  const auto& labels = label_field == "anatomical" ? mesh.anatomical_label : mesh.material_label;
  if (location == FieldLocation::automatic) {
    const bool as_element = field.size() == mesh.element_count();
    const bool as_node = field.size() == mesh.node_count();
    if (as_element && as_node) throw ArgumentError("field length matches both element and node counts; give its location");
    if (!as_element && !as_node) throw ValidationError("field length matches neither the element nor the node count");
    location = as_element ? FieldLocation::element : FieldLocation::node;
  }
  const std::size_t expected = location == FieldLocation::element ? mesh.element_count() : mesh.node_count();
  if (field.size() != expected) throw ValidationError("field length does not match its location");

  auto matches = [&](Label l, Label query) { return l == query || (table && label_descends_from(*table, l, query)); };

  std::vector<RegionStats> out;
  std::vector<std::uint8_t> seen;
  for (Label query : label_ids) {
    RegionStats s;
    s.label = query;
    CompensatedSum sum;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    auto take = [&](double v) {
      ++s.count;
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    };
    if (location == FieldLocation::element) {
      for (std::size_t e = 0; e < mesh.element_count(); ++e)
        if (matches(labels[e], query)) take(field[e]);
    } else {
      seen.assign(mesh.node_count(), 0);
      for (std::size_t e = 0; e < mesh.element_count(); ++e)
        if (matches(labels[e], query))
          for (NodeId n : mesh.elements[e]) seen[n] = 1;
      for (std::size_t n = 0; n < seen.size(); ++n)
        if (seen[n]) take(field[n]);
    }
    if (s.count > 0) {
      s.min = lo;
      s.max = hi;
      s.mean = std::clamp(sum.value() / static_cast<double>(s.count), lo, hi);
    }
    out.push_back(s);
  }
  return out;
}

inline nlohmann::json to_json(const RegionStats& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"label", s.label}, {"count", s.count}, {"min", opt(s.min)}, {"max", opt(s.max)}, {"mean", opt(s.mean)}};
}

}  // namespace atlasmesh
