#pragma once

// Synthetic concentric-shell volumes used as stand-ins for anatomy.

#include <atlasmesh/volume.hpp>

namespace atlasmesh {

/// Cubic grid centered on the origin with an odd voxel count, so that one
/// voxel center sits exactly at (0,0,0), covering `radius + margin_mm`.
inline VolumeGeometry centered_geometry(double radius, double spacing, double margin_mm = 6.0) {
  if (!(radius > 0.0) || !(spacing > 0.0)) throw ArgumentError("phantom radius and spacing must be > 0");
  const int half = static_cast<int>(std::ceil((radius + margin_mm) / spacing - 1e-9));
  VolumeGeometry g;
  g.dims = {2 * half + 1, 2 * half + 1, 2 * half + 1};
  g.spacing = {spacing, spacing, spacing};
  g.origin = {-half * spacing, -half * spacing, -half * spacing};
  return g;
}

/// Concentric spheres, outermost first: a voxel whose center lies at radius r
/// gets label k+1 for the largest k with r <= radii[k]; beyond radii[0] it is background.
inline LabelVolume shell_phantom(const std::vector<double>& radii, double spacing) {
  if (radii.empty()) throw ArgumentError("phantom needs at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i)
    if (!(radii[i] > 0.0) || (i > 0 && !(radii[i] < radii[i - 1])))
      throw ArgumentError("phantom radii must be positive and strictly decreasing");
  LabelVolume v;
  v.geometry = centered_geometry(radii.front(), spacing);
  v.labels.assign(v.geometry.voxel_count(), 0);
  const auto& d = v.geometry.dims;
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        const double r = norm(v.geometry.center(i, j, k));
        Label l = 0;
        for (std::size_t s = 0; s < radii.size() && r <= radii[s]; ++s) l = static_cast<Label>(s + 1);
        v.labels[v.geometry.index(i, j, k)] = l;
      }
  const auto names = material::table();
  for (Label l : v.nonzero_labels()) {
    auto it = names.find(l);
    v.label_table[l] = {it != names.end() ? it->second.name : default_label_name(l), std::nullopt};
  }
  return v;
}

/// The 5-shell head phantom: scalp, skull, CSF, grey and white matter.
inline LabelVolume head_phantom(double spacing = 1.0) { return shell_phantom({50.0, 46.0, 42.0, 38.0, 25.0}, spacing); }

}  // namespace atlasmesh
