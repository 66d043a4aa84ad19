#pragma once

#include <atlasmesh/atlasmesh.hpp>

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace fixtures {

using namespace atlasmesh;

/// Unit cube, corners in the standard order.
inline HexCorners unit_cube() {
  return {Vec3{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
}

inline HexMesh one_element_mesh(Label material = 4, double edge = 1.0) {
  HexMesh m;
  for (const auto& c : unit_cube()) m.nodes.push_back(c * edge);
  m.add_element({0, 1, 2, 3, 4, 5, 6, 7}, material, 0);
  return m;
}

/// 2x2x2 unit cubes on [0,2]^3, lattice nodes x-fastest; materials 1..8 by element unless `material` is given.
inline HexMesh eight_element_mesh(std::optional<Label> material = std::nullopt) {
  HexMesh m;
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) m.nodes.push_back({double(i), double(j), double(k)});
  auto id = [](int i, int j, int k) { return NodeId(i + 3 * j + 9 * k); };
  Label next = 1;
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i, ++next)
        m.add_element({id(i, j, k), id(i + 1, j, k), id(i + 1, j + 1, k), id(i, j + 1, k), id(i, j, k + 1), id(i + 1, j, k + 1),
                       id(i + 1, j + 1, k + 1), id(i, j + 1, k + 1)},
                      material.value_or(next), 0);
  return m;
}

/// Unit cube with every corner jittered by up to `amount` per axis; valid for amount < ~0.2.
inline HexCorners jittered_cube(std::mt19937_64& rng, double amount) {
  std::uniform_real_distribution<double> u(-amount, amount);
  auto c = unit_cube();
  for (auto& p : c) p += Vec3{u(rng), u(rng), u(rng)};
  return c;
}

/// Random proper rotation via a normalized quaternion.
inline std::array<Vec3, 3> random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double w = n(rng), x = n(rng), y = n(rng), z = n(rng);
  const double s = std::sqrt(w * w + x * x + y * y + z * z);
  w /= s, x /= s, y /= s, z /= s;
  return {Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
          Vec3{2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
          Vec3{2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

inline Vec3 rotate(const std::array<Vec3, 3>& r, const Vec3& p) { return {dot(r[0], p), dot(r[1], p), dot(r[2], p)}; }

/// Volume with unit spacing, origin 0 and every voxel set to `label`.
inline LabelVolume constant_volume(std::array<int, 3> dims, Label label) {
  LabelVolume v;
  v.geometry.dims = dims;
  v.geometry.spacing = {1, 1, 1};
  v.labels.assign(v.geometry.voxel_count(), label);
  if (label != 0) v.label_table[label] = {default_label_name(label), std::nullopt};
  return v;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("atlasmesh_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fixtures
