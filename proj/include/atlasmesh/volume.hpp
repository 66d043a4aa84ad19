#pragma once

// Labeled voxel volumes: label tables, boolean label edits, Euclidean mask
// dilation, material-map synthesis and block downsampling.

#include <atlasmesh/core.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace atlasmesh {

/// Voxel lattice geometry. `origin` is the world position (mm) of the center
/// of voxel (0,0,0); voxel (i,j,k) sits at origin + (i*sx, j*sy, k*sz).
struct VolumeGeometry {
  std::array<int, 3> dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{};

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
  }
  std::array<int, 3> ijk(std::size_t idx) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
  }
  Vec3 center(int i, int j, int k) const {
    return {origin.x + i * spacing.x, origin.y + j * spacing.y, origin.z + k * spacing.z};
  }
  Vec3 center(std::size_t idx) const {
    const auto c = ijk(idx);
    return center(c[0], c[1], c[2]);
  }
  /// Lower corner of the voxel box (mm).
  Vec3 lower_corner() const { return origin - spacing * 0.5; }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1) throw ValidationError("volume dims must be >= 1");
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) throw ValidationError("volume spacing must be > 0");
      if (!std::isfinite(origin[a])) throw ValidationError("volume origin must be finite");
    }
  }

  friend bool operator==(const VolumeGeometry&, const VolumeGeometry&) = default;
};

struct LabelInfo {
  std::string name;
  std::optional<Label> parent;

  friend bool operator==(const LabelInfo&, const LabelInfo&) = default;
};

using LabelTable = std::map<Label, LabelInfo>;

inline std::string default_label_name(Label id) { return "label_" + std::to_string(id); }

/// Throws ValidationError if parent links reference unknown ids or form a cycle.
inline void validate_label_forest(const LabelTable& table) {
  for (const auto& [id, info] : table) {
    if (id == 0) throw ValidationError("label 0 is reserved for background");
    if (info.parent && !table.contains(*info.parent))
      throw ValidationError("label " + std::to_string(id) + " has unknown parent " + std::to_string(*info.parent));
  }
  for (const auto& [id, info] : table) {
    std::set<Label> seen{id};
    auto parent = info.parent;
    while (parent) {
      if (!seen.insert(*parent).second)
        throw ValidationError("label table parent links form a cycle through " + std::to_string(id));
      parent = table.at(*parent).parent;
    }
  }
}

/// True if `id` equals `ancestor` or descends from it in the label forest.
inline bool label_descends_from(const LabelTable& table, Label id, Label ancestor) {
  std::optional<Label> cur = id;
  for (std::size_t guard = 0; cur && guard <= table.size(); ++guard) {
    if (*cur == ancestor) return true;
    auto it = table.find(*cur);
    if (it == table.end()) return false;
    cur = it->second.parent;
  }
  return false;
}

struct LabelVolume {
  VolumeGeometry geometry;
  std::vector<Label> labels;  // x-fastest
  LabelTable label_table;
  /// Background voxels appended per axis by downsample() to reach a multiple of the factor.
  std::array<int, 3> padding{0, 0, 0};

  Label at(int i, int j, int k) const { return labels[geometry.index(i, j, k)]; }

  std::set<Label> nonzero_labels() const {
    std::set<Label> out;
    for (Label l : labels)
      if (l != 0) out.insert(l);
    return out;
  }

  void validate() const {
    geometry.validate();
    if (labels.size() != geometry.voxel_count()) throw ValidationError("label array size does not match dims");
    for (Label l : nonzero_labels())
      if (!label_table.contains(l)) throw ValidationError("voxel label " + std::to_string(l) + " missing from label table");
    validate_label_forest(label_table);
  }
};

struct BinaryMask {
  VolumeGeometry geometry;
  std::vector<std::uint8_t> bits;

  bool test(std::size_t idx) const { return bits[idx] != 0; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
  }
};

/// Mask of voxels whose label is in `ids`.
inline BinaryMask mask_of(const LabelVolume& v, const std::set<Label>& ids) {
  BinaryMask m{v.geometry, std::vector<std::uint8_t>(v.labels.size(), 0)};
  for (std::size_t i = 0; i < v.labels.size(); ++i) m.bits[i] = ids.contains(v.labels[i]) ? 1 : 0;
  return m;
}

inline BinaryMask nonzero_mask(const LabelVolume& v) {
  BinaryMask m{v.geometry, std::vector<std::uint8_t>(v.labels.size(), 0)};
  for (std::size_t i = 0; i < v.labels.size(); ++i) m.bits[i] = v.labels[i] != 0 ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------
// Edit scripts

struct MergeStep {
  std::vector<Label> sources;
  Label target{0};
  std::optional<std::string> name;  // required when target is new
};

struct RemoveStep {
  std::vector<Label> ids;
};

struct GroupStep {
  std::vector<Label> ids;
  Label group_id{0};
  std::string name;
};

using EditStep = std::variant<MergeStep, RemoveStep, GroupStep>;
using EditScript = std::vector<EditStep>;

namespace detail {

inline void reparent_children(LabelTable& table, Label removed, std::optional<Label> new_parent) {
  for (auto& [id, info] : table)
    if (info.parent == removed) info.parent = new_parent;
}

inline void require_known(const LabelTable& table, std::size_t step, const std::vector<Label>& ids) {
  if (ids.empty()) throw ScriptError(step, "empty id list");
  for (Label id : ids)
    if (!table.contains(id)) throw ScriptError(step, "unknown label id " + std::to_string(id));
}

}  // namespace detail

/// Applies MERGE / REMOVE / GROUP steps in order. Voxels are only relabeled,
/// never created or destroyed; geometry is untouched.
inline LabelVolume apply_edits(LabelVolume v, const EditScript& script) {
  for (std::size_t s = 0; s < script.size(); ++s) {
    auto& table = v.label_table;
    std::visit(
        [&](const auto& step) {
          using T = std::decay_t<decltype(step)>;
          if constexpr (std::is_same_v<T, MergeStep>) {
            detail::require_known(table, s, step.sources);
            if (step.target == 0) throw ScriptError(s, "merge target 0 is background; use REMOVE");
            if (!table.contains(step.target)) {
              if (!step.name) throw ScriptError(s, "new merge target " + std::to_string(step.target) + " needs a name");
              table[step.target] = LabelInfo{*step.name, std::nullopt};
            } else if (step.name) {
              table[step.target].name = *step.name;
            }
            const std::set<Label> src(step.sources.begin(), step.sources.end());
            for (Label& l : v.labels)
              if (src.contains(l)) l = step.target;
            for (Label id : src) {
              if (id == step.target) continue;
              table.erase(id);
              detail::reparent_children(table, id, step.target);
            }
            // A source may have been an ancestor of the target; drop any self link.
            if (table[step.target].parent == step.target) table[step.target].parent.reset();
          } else if constexpr (std::is_same_v<T, RemoveStep>) {
            detail::require_known(table, s, step.ids);
            const std::set<Label> ids(step.ids.begin(), step.ids.end());
            for (Label& l : v.labels)
              if (ids.contains(l)) l = 0;
            for (Label id : ids) {
              auto parent = table.at(id).parent;
              while (parent && ids.contains(*parent)) parent = table.at(*parent).parent;
              detail::reparent_children(table, id, parent);
            }
            for (Label id : ids) table.erase(id);
          } else {
            detail::require_known(table, s, step.ids);
            if (step.group_id == 0) throw ScriptError(s, "group id 0 is background");
            if (table.contains(step.group_id))
              throw ScriptError(s, "group id " + std::to_string(step.group_id) + " already exists");
            // The group inherits the members' parent when they all share one.
            std::optional<Label> common = table.at(step.ids.front()).parent;
            for (Label id : step.ids)
              if (table.at(id).parent != common) common.reset();
            table[step.group_id] = LabelInfo{step.name, common};
            for (Label id : step.ids) table[id].parent = step.group_id;
          }
        },
        script[s]);
  }
  validate_label_forest(v.label_table);
  return v;
}

// ---------------------------------------------------------------------------
// Dilation

namespace detail {

// One pass of the separable squared Euclidean distance transform (lower
// envelope of parabolas) over a line of `n` samples spaced `h` apart.
inline void edt_line(std::vector<double>& f, std::vector<double>& out, std::vector<int>& v, std::vector<double>& z,
                     int n, double h) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    const double fq = f[q] + (q * h) * (q * h);
    while (k >= 0) {
      const int p = v[k];
      const double s = (fq - (f[p] + (p * h) * (p * h))) / (2.0 * h * (q - p));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    if (k == 0) {
      z[k] = -inf;
    } else {
      const int p = v[k - 1];
      z[k] = (fq - (f[p] + (p * h) * (p * h))) / (2.0 * h * (q - p));
    }
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q] = inf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (j < k && z[j + 1] < q * h) ++j;
    const double d = (q - v[j]) * h;
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace detail

/// Squared Euclidean distance (mm^2) from each voxel center to the nearest set voxel center.
inline std::vector<double> squared_distance_transform(const BinaryMask& m) {
  const auto& g = m.geometry;
  const std::array<int, 3> n = g.dims;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(m.bits.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = m.bits[i] ? 0.0 : inf;

  const int longest = std::max({n[0], n[1], n[2]});
  std::vector<double> f(longest), out(longest), z(longest + 1);
  std::vector<int> v(longest);
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (int u = 0; u < n[a1]; ++u) {
      for (int w = 0; w < n[a2]; ++w) {
        std::array<int, 3> c{};
        c[a1] = u;
        c[a2] = w;
        for (int q = 0; q < n[axis]; ++q) {
          c[axis] = q;
          f[q] = d[g.index(c[0], c[1], c[2])];
        }
        detail::edt_line(f, out, v, z, n[axis], g.spacing[axis]);
        for (int q = 0; q < n[axis]; ++q) {
          c[axis] = q;
          d[g.index(c[0], c[1], c[2])] = out[q];
        }
      }
    }
  }
  return d;
}

/// A voxel is set iff its center lies within `distance` mm (inclusive) of a set voxel center.
inline BinaryMask dilate_mask(const BinaryMask& m, double distance) {
  if (!(distance >= 0.0) || !std::isfinite(distance)) throw ArgumentError("dilation distance must be >= 0");
  if (distance == 0.0) return m;
  const auto d2 = squared_distance_transform(m);
  const double limit = distance * distance * (1.0 + 1e-12);
  BinaryMask out{m.geometry, std::vector<std::uint8_t>(m.bits.size(), 0)};
  for (std::size_t i = 0; i < d2.size(); ++i) out.bits[i] = d2[i] <= limit ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Material label map

namespace material {
inline constexpr Label scalp = 1;
inline constexpr Label skull = 2;
inline constexpr Label csf = 3;
inline constexpr Label grey_matter = 4;
inline constexpr Label white_matter = 5;
inline constexpr Label ventricle = 6;

inline LabelTable table() {
  return {{scalp, {"scalp", std::nullopt}},
          {skull, {"skull", std::nullopt}},
          {csf, {"csf", std::nullopt}},
          {grey_matter, {"grey_matter", std::nullopt}},
          {white_matter, {"white_matter", std::nullopt}},
          {ventricle, {"ventricle", std::nullopt}}};
}
}  // namespace material

struct MaterialRules {
  /// Atlas label -> material id (grey matter, white matter or ventricle).
  std::map<Label, Label> atlas_to_material;
  double shell_thickness_mm{4.0};
};

/// Builds the six-material label map. Rules only apply inside the brain mask;
/// the skull and scalp shells are Euclidean offsets of the mask.
inline LabelVolume build_material_map(const LabelVolume& atlas, const BinaryMask& brain_mask, const MaterialRules& rules) {
  if (atlas.geometry != brain_mask.geometry || brain_mask.bits.size() != atlas.labels.size())
    throw GeometryError("atlas and brain mask geometries differ");
  if (!(rules.shell_thickness_mm > 0.0)) throw RuleError("shell thickness must be > 0");
  for (const auto& [atlas_id, mat] : rules.atlas_to_material) {
    if (!atlas.label_table.contains(atlas_id))
      throw RuleError("rule references unknown atlas label " + std::to_string(atlas_id));
    if (mat != material::grey_matter && mat != material::white_matter && mat != material::ventricle)
      throw RuleError("rule for atlas label " + std::to_string(atlas_id) + " maps to " + std::to_string(mat) +
                      "; rules may only produce grey matter (4), white matter (5) or ventricle (6)");
  }

  const double t = rules.shell_thickness_mm;
  const auto d2 = squared_distance_transform(brain_mask);
  const double inner = t * t * (1.0 + 1e-12);
  const double outer = 4.0 * t * t * (1.0 + 1e-12);

  LabelVolume out;
  out.geometry = atlas.geometry;
  out.labels.assign(atlas.labels.size(), 0);
  out.label_table = material::table();
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (brain_mask.bits[i]) {
      auto it = rules.atlas_to_material.find(atlas.labels[i]);
      out.labels[i] = it != rules.atlas_to_material.end() ? it->second : material::csf;
    } else if (d2[i] <= inner) {
      out.labels[i] = material::skull;
    } else if (d2[i] <= outer) {
      out.labels[i] = material::scalp;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Downsampling

/// Majority-vote block downsampling with per-axis factors. Background counts
/// as a label; ties go to the lowest label id. Dims that are not a multiple
/// of the factor are padded with background and recorded in `padding`.
inline LabelVolume downsample(const LabelVolume& v, const std::array<int, 3>& factor) {
  for (int f : factor)
    if (f < 1) throw ArgumentError("downsample factor must be >= 1");
  if (factor == std::array<int, 3>{1, 1, 1}) return v;

  const auto& g = v.geometry;
  LabelVolume out;
  out.label_table = v.label_table;
  for (int a = 0; a < 3; ++a) {
    out.geometry.dims[a] = (g.dims[a] + factor[a] - 1) / factor[a];
    out.geometry.spacing[a] = g.spacing[a] * factor[a];
    out.geometry.origin[a] = g.origin[a] + 0.5 * (factor[a] - 1) * g.spacing[a];
    out.padding[a] = out.geometry.dims[a] * factor[a] - g.dims[a];
  }
  out.labels.assign(out.geometry.voxel_count(), 0);

  const auto& og = out.geometry;
  std::vector<Label> block;
  block.reserve(static_cast<std::size_t>(factor[0]) * factor[1] * factor[2]);
  for (int K = 0; K < og.dims[2]; ++K)
    for (int J = 0; J < og.dims[1]; ++J)
      for (int I = 0; I < og.dims[0]; ++I) {
        block.clear();
        for (int k = K * factor[2]; k < (K + 1) * factor[2]; ++k)
          for (int j = J * factor[1]; j < (J + 1) * factor[1]; ++j)
            for (int i = I * factor[0]; i < (I + 1) * factor[0]; ++i) {
              const bool inside = i < g.dims[0] && j < g.dims[1] && k < g.dims[2];
              block.push_back(inside ? v.at(i, j, k) : 0);
            }
        std::sort(block.begin(), block.end());
        Label best = block.front();
        std::size_t best_count = 0;
        for (std::size_t a = 0; a < block.size();) {
          std::size_t b = a;
          while (b < block.size() && block[b] == block[a]) ++b;
          if (b - a > best_count) {  // strict: earlier (lower) label keeps ties
            best_count = b - a;
            best = block[a];
          }
          a = b;
        }
        out.labels[og.index(I, J, K)] = best;
      }
  return out;
}

inline LabelVolume downsample(const LabelVolume& v, int factor) { return downsample(v, {factor, factor, factor}); }

}  // namespace atlasmesh
