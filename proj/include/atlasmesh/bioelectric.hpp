#pragma once

// EEG forward problem on hexahedral meshes: trilinear finite elements for
// -div(sigma grad u) = f with zero-flux boundaries, partial-integration dipole
// sources, a grounded reference node and Jacobi-preconditioned CG.

#include <atlasmesh/hexmesh.hpp>
#include <atlasmesh/materials.hpp>

#include <numbers>

namespace atlasmesh {

struct CsrMatrix {
  std::size_t n{0};
  std::vector<std::size_t> row_ptr;
  std::vector<std::int32_t> col;  // sorted within each row
  std::vector<double> val;

  std::size_t nnz() const { return col.size(); }

  /// Position of (i, j) in `val`, or npos.
  std::size_t find(std::size_t i, std::size_t j) const {
    const auto b = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
    const auto e = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
    const auto it = std::lower_bound(b, e, static_cast<std::int32_t>(j));
    return it != e && *it == static_cast<std::int32_t>(j) ? static_cast<std::size_t>(it - col.begin()) : npos;
  }
  double at(std::size_t i, std::size_t j) const {
    const auto k = find(i, j);
    return k == npos ? 0.0 : val[k];
  }
  void multiply(std::span<const double> x, std::span<double> y) const {
    parallel_for(n, [&](std::size_t i) {
      double s = 0.0;
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
      y[i] = s;
    });
  }

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
};

struct FemSystem {
  CsrMatrix matrix;  // S (siemens); unknowns in volts, loads in amperes
};

struct Dipole {
  Vec3 position;  // mm
  Vec3 moment;    // A*mm
};

struct NodalField {
  std::vector<double> values;  // V
  NodeId reference{0};
  std::size_t iterations{0};
  double relative_residual{0.0};
};

namespace fem {

inline constexpr double mm_to_m = 1e-3;

/// Reference-cube corner signs in the element's corner order.
inline constexpr std::array<std::array<double, 3>, 8> corner_sign = {{{-1, -1, -1},
                                                                       {1, -1, -1},
                                                                       {1, 1, -1},
                                                                       {-1, 1, -1},
                                                                       {-1, -1, 1},
                                                                       {1, -1, 1},
                                                                       {1, 1, 1},
                                                                       {-1, 1, 1}}};

inline std::array<double, 8> shape(const Vec3& xi) {
  std::array<double, 8> N{};
  for (int a = 0; a < 8; ++a) {
    const auto& s = corner_sign[a];
    N[a] = 0.125 * (1 + s[0] * xi.x) * (1 + s[1] * xi.y) * (1 + s[2] * xi.z);
  }
  return N;
}

/// Shape-function derivatives with respect to reference coordinates.
inline std::array<Vec3, 8> shape_gradients(const Vec3& xi) {
  std::array<Vec3, 8> d{};
  for (int a = 0; a < 8; ++a) {
    const auto& s = corner_sign[a];
    d[a] = {0.125 * s[0] * (1 + s[1] * xi.y) * (1 + s[2] * xi.z), 0.125 * s[1] * (1 + s[0] * xi.x) * (1 + s[2] * xi.z),
            0.125 * s[2] * (1 + s[0] * xi.x) * (1 + s[1] * xi.y)};
  }
  return d;
}

struct Jacobian {
  std::array<Vec3, 3> rows;  // J[i][j] = dx_j / dxi_i
  double det{0.0};
};

inline Jacobian jacobian(const HexCorners& x, const std::array<Vec3, 8>& dN) {
  Jacobian J{};
  for (int a = 0; a < 8; ++a)
    for (int i = 0; i < 3; ++i) J.rows[i] += x[a] * dN[a][i];
  J.det = det3(J.rows[0], J.rows[1], J.rows[2]);
  return J;
}

/// Physical gradients from reference gradients: grad = J^{-1} dN.
inline std::array<Vec3, 8> physical_gradients(const Jacobian& J, const std::array<Vec3, 8>& dN) {
  const auto& r = J.rows;
  // Inverse via cofactors: inv = adj / det, adj columns are cross products of rows.
  const Vec3 c0 = cross(r[1], r[2]), c1 = cross(r[2], r[0]), c2 = cross(r[0], r[1]);
  std::array<Vec3, 8> g{};
  for (int a = 0; a < 8; ++a) g[a] = (c0 * dN[a].x + c1 * dN[a].y + c2 * dN[a].z) / J.det;
  return g;
}

/// Reference coordinates of p in a hex by Newton iteration; nullopt if it fails to converge.
inline std::optional<Vec3> inverse_map(const HexCorners& x, const Vec3& p) {
  Vec3 xi{};
  for (int it = 0; it < 50; ++it) {
    const auto N = shape(xi);
    Vec3 f = -p;
    for (int a = 0; a < 8; ++a) f += x[a] * N[a];
    const auto J = jacobian(x, shape_gradients(xi));
    if (!(std::abs(J.det) > 0.0)) return std::nullopt;
    // Solve J^T dxi = f, where J^T maps reference to physical increments.
    const Vec3 c0 = cross(J.rows[1], J.rows[2]), c1 = cross(J.rows[2], J.rows[0]), c2 = cross(J.rows[0], J.rows[1]);
    const Vec3 dxi{dot(c0, f) / J.det, dot(c1, f) / J.det, dot(c2, f) / J.det};
    xi -= dxi;
    if (norm(dxi) < 1e-14) return xi;
  }
  return std::nullopt;
}

/// 8x8 conductivity-weighted Laplacian of one hex (coordinates in m) by 2x2x2 Gauss quadrature.
inline std::optional<std::array<double, 64>> element_stiffness(const HexCorners& x_m, double sigma) {
  const double g = 1.0 / std::sqrt(3.0);
  std::array<double, 64> k{};
  for (int q = 0; q < 8; ++q) {
    const Vec3 xi{(q & 1) ? g : -g, (q & 2) ? g : -g, (q & 4) ? g : -g};
    const auto dN = shape_gradients(xi);
    const auto J = jacobian(x_m, dN);
    if (!(J.det > 0.0)) return std::nullopt;
    const auto grad = physical_gradients(J, dN);
    const double w = sigma * J.det;
    for (int a = 0; a < 8; ++a)
      for (int b = a; b < 8; ++b) k[a * 8 + b] += w * dot(grad[a], grad[b]);
  }
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < a; ++b) k[a * 8 + b] = k[b * 8 + a];
  return k;
}

inline HexCorners corners_m(const HexMesh& mesh, std::size_t e) {
  auto c = mesh.corners(e);
  for (auto& v : c) v = v * mm_to_m;
  return c;
}

/// Block-partitioned compensated dot product; identical for any thread count.
inline double dot(std::span<const double> a, std::span<const double> b) {
  constexpr std::size_t block = 4096;
  const std::size_t blocks = (a.size() + block - 1) / block;
  std::vector<double> partial(blocks);
  parallel_for(blocks, [&](std::size_t k) {
    CompensatedSum s;
    for (std::size_t i = k * block; i < std::min(a.size(), (k + 1) * block); ++i) s += a[i] * b[i];
    partial[k] = s.value();
  });
  CompensatedSum s;
  for (double v : partial) s += v;
  return s.value();
}

}  // namespace fem

/// Assembles the global stiffness matrix. Element matrices are computed in
/// parallel batches and added in element order, so the result does not depend
/// on the thread count.
inline FemSystem assemble_system(const HexMesh& mesh, const MaterialTable& table) {
  const auto bound = bind_materials(mesh, table);
  std::vector<double> sigma(mesh.element_count());
  std::set<Label> missing;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    if (!bound[e]->conductivity)
      missing.insert(mesh.material_label[e]);
    else
      sigma[e] = *bound[e]->conductivity;
  }
  if (!missing.empty()) {
    std::string list;
    for (Label l : missing) list += (list.empty() ? "" : ", ") + std::to_string(l);
    throw BindingError({missing.begin(), missing.end()}, "no conductivity for material id(s) " + list);
  }

  // Sparsity: each node couples to every node of its incident elements.
  const auto incident = node_elements(mesh);
  CsrMatrix A;
  A.n = mesh.node_count();
  A.row_ptr.assign(A.n + 1, 0);
  {
    std::vector<std::size_t> counts(A.n);
    parallel_for(A.n, [&](std::size_t i) {
      thread_local std::vector<std::int32_t> buf;
      buf.clear();
      for (auto e : incident.of(static_cast<NodeId>(i)))
        for (NodeId v : mesh.elements[e]) buf.push_back(v);
      std::sort(buf.begin(), buf.end());
      counts[i] = static_cast<std::size_t>(std::unique(buf.begin(), buf.end()) - buf.begin());
    });
    for (std::size_t i = 0; i < A.n; ++i) A.row_ptr[i + 1] = A.row_ptr[i] + counts[i];
  }
  A.col.resize(A.row_ptr.back());
  A.val.assign(A.row_ptr.back(), 0.0);
  parallel_for(A.n, [&](std::size_t i) {
    thread_local std::vector<std::int32_t> buf;
    buf.clear();
    for (auto e : incident.of(static_cast<NodeId>(i)))
      for (NodeId v : mesh.elements[e]) buf.push_back(v);
    std::sort(buf.begin(), buf.end());
    buf.erase(std::unique(buf.begin(), buf.end()), buf.end());
    std::copy(buf.begin(), buf.end(), A.col.begin() + static_cast<std::ptrdiff_t>(A.row_ptr[i]));
  });

  constexpr std::size_t batch = 1 << 15;
  std::vector<std::optional<std::array<double, 64>>> local(std::min(batch, mesh.element_count()));
  for (std::size_t first = 0; first < mesh.element_count(); first += batch) {
    const std::size_t count = std::min(batch, mesh.element_count() - first);
    parallel_for(count, [&](std::size_t k) { local[k] = fem::element_stiffness(fem::corners_m(mesh, first + k), sigma[first + k]); });
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t e = first + k;
      if (!local[k]) throw AssemblyError(e, "nonpositive Jacobian determinant at a quadrature point");
      const auto& h = mesh.elements[e];
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) A.val[A.find(h[a], h[b])] += (*local[k])[a * 8 + b];
    }
  }
  return {std::move(A)};
}

struct ElementLocation {
  std::size_t element{0};
  Vec3 xi;               // reference coordinates in [-1, 1]^3
  bool on_face{false};   // the point lies on a face shared with another element
};

/// The lowest-index element containing p (mm).
inline ElementLocation locate_point(const HexMesh& mesh, const Vec3& p) {
  constexpr double tol = 1e-9;
  std::optional<ElementLocation> found;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto x = mesh.corners(e);
    Vec3 lo = x[0], hi = x[0];
    for (const auto& c : x)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], c[a]);
        hi[a] = std::max(hi[a], c[a]);
      }
    bool inside_box = true;
    for (int a = 0; a < 3; ++a) inside_box = inside_box && p[a] >= lo[a] - 1e-9 && p[a] <= hi[a] + 1e-9;
    if (!inside_box) continue;
    const auto xi = fem::inverse_map(x, p);
    if (!xi || std::abs(xi->x) > 1 + tol || std::abs(xi->y) > 1 + tol || std::abs(xi->z) > 1 + tol) continue;
    if (!found) {
      found = ElementLocation{e, *xi, false};
      const bool boundary = std::abs(xi->x) >= 1 - tol || std::abs(xi->y) >= 1 - tol || std::abs(xi->z) >= 1 - tol;
      if (!boundary) return *found;
    } else {
      found->on_face = true;
      return *found;
    }
  }
  if (!found)
    throw LocationError("point (" + format_double(p.x, 6) + ", " + format_double(p.y, 6) + ", " + format_double(p.z, 6) +
                        ") mm lies outside the mesh");
  return *found;
}

struct DipoleLoad {
  std::vector<double> rhs;  // A
  ElementLocation location;
};

/// Partial-integration source: f_i = p . grad(phi_i)(x_d) on the containing element's nodes.
inline DipoleLoad dipole_load(const HexMesh& mesh, const Dipole& d) {
  if (norm(d.moment) == 0.0) throw ArgumentError("dipole moment must be nonzero");
  DipoleLoad out;
  out.location = locate_point(mesh, d.position);
  out.rhs.assign(mesh.node_count(), 0.0);
  const auto x = fem::corners_m(mesh, out.location.element);
  const auto dN = fem::shape_gradients(out.location.xi);
  const auto grad = fem::physical_gradients(fem::jacobian(x, dN), dN);
  const Vec3 p = d.moment * fem::mm_to_m;
  const auto& h = mesh.elements[out.location.element];
  for (int a = 0; a < 8; ++a) out.rhs[h[a]] += dot(p, grad[a]);
  return out;
}

/// Solves A u = b with u(reference) = 0 by eliminating the reference row and
/// column, using Jacobi-preconditioned conjugate gradients to a relative
/// residual of `tol`.
inline NodalField solve(const FemSystem& system, std::span<const double> rhs, NodeId reference, double tol = 1e-9) {
  const auto& A = system.matrix;
  const std::size_t n = A.n;
  if (rhs.size() != n) throw ArgumentError("right-hand side length does not match the system");
  if (reference < 0 || static_cast<std::size_t>(reference) >= n) throw ArgumentError("reference node out of range");
  if (!(tol > 0.0)) throw ArgumentError("solver tolerance must be > 0");
  const auto ref = static_cast<std::size_t>(reference);

  NodalField field;
  field.reference = reference;
  field.values.assign(n, 0.0);

  std::vector<double> b(rhs.begin(), rhs.end());
  b[ref] = 0.0;
  const double bnorm = std::sqrt(fem::dot(b, b));
  if (bnorm == 0.0) return field;

  std::vector<double> inv_diag(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = A.at(i, i);
    if (i != ref) {
      if (!(d > 0.0)) throw SolverError(1.0, "nonpositive diagonal entry at node " + std::to_string(i));
      inv_diag[i] = 1.0 / d;
    }
  }
  auto apply = [&](std::vector<double>& x, std::vector<double>& y) {
    x[ref] = 0.0;
    A.multiply(x, y);
    y[ref] = 0.0;
  };

  auto& x = field.values;
  std::vector<double> r = b, z(n), p(n), q(n);
  parallel_for(n, [&](std::size_t i) { z[i] = inv_diag[i] * r[i]; });
  p = z;
  double rz = fem::dot(r, z);
  double rnorm = bnorm;
  const std::size_t max_iter = 10 * n;
  std::size_t it = 0;
  while (rnorm > tol * bnorm) {
    if (it >= max_iter)
      throw SolverError(rnorm / bnorm, "conjugate gradients did not converge in " + std::to_string(max_iter) +
                                           " iterations (relative residual " + format_double(rnorm / bnorm, 6) + ")");
    apply(p, q);
    const double pq = fem::dot(p, q);
    if (!(pq > 0.0)) throw SolverError(rnorm / bnorm, "system is not positive definite on the reduced space");
    const double alpha = rz / pq;
    parallel_for(n, [&](std::size_t i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
      z[i] = inv_diag[i] * r[i];
    });
    const double rz_next = fem::dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    parallel_for(n, [&](std::size_t i) { p[i] = z[i] + beta * p[i]; });
    rnorm = std::sqrt(fem::dot(r, r));
    ++it;
  }
  // Report the true residual of the reduced system.
  std::vector<double> ax(n);
  apply(x, ax);
  parallel_for(n, [&](std::size_t i) { ax[i] -= b[i]; });
  field.relative_residual = std::sqrt(fem::dot(ax, ax)) / bnorm;
  field.iterations = it;
  x[ref] = 0.0;
  return field;
}

// ---------------------------------------------------------------------------
// Electrodes

struct Electrode {
  std::string name;
  Vec3 requested;  // mm
  NodeId node{0};
  double snap_distance{0.0};  // mm
};

using ElectrodeSet = std::vector<Electrode>;

/// Snaps each position to the nearest node of the "outer_scalp" node set, or of
/// the exterior boundary when that set is absent. Ties go to the lower node id.
inline ElectrodeSet project_electrodes(const HexMesh& mesh, const std::vector<std::pair<std::string, Vec3>>& positions) {
  if (positions.empty()) throw ArgumentError("no electrode positions given");
  std::map<std::string, int> seen;
  for (const auto& [name, p] : positions) ++seen[name];
  std::string dups;
  for (const auto& [name, c] : seen)
    if (c > 1) dups += (dups.empty() ? "" : ", ") + name;
  if (!dups.empty()) throw ArgumentError("duplicate electrode names: " + dups);

  std::vector<NodeId> candidates;
  if (auto it = mesh.node_sets.find("outer_scalp"); it != mesh.node_sets.end() && !it->second.empty())
    candidates = it->second;
  else
    candidates = boundary_nodes(mesh);
  if (candidates.empty()) throw ArgumentError("mesh has no outer boundary nodes");

  ElectrodeSet out;
  for (const auto& [name, p] : positions) {
    Electrode e{name, p, candidates.front(), std::numeric_limits<double>::infinity()};
    for (NodeId n : candidates) {
      const double d = distance(mesh.nodes[n], p);
      if (d < e.snap_distance) {
        e.snap_distance = d;
        e.node = n;
      }
    }
    out.push_back(e);
  }
  return out;
}

struct ElectrodeReading {
  std::string name;
  double raw{0.0};      // V, relative to the reference node
  double average{0.0};  // V, relative to the mean over the set
};

inline std::vector<ElectrodeReading> electrode_potentials(const NodalField& field, const ElectrodeSet& electrodes) {
  std::vector<ElectrodeReading> out;
  CompensatedSum sum;
  for (const auto& e : electrodes) {
    out.push_back({e.name, field.values.at(static_cast<std::size_t>(e.node)), 0.0});
    sum += out.back().raw;
  }
  const double mean = electrodes.empty() ? 0.0 : sum.value() / static_cast<double>(electrodes.size());
  for (auto& r : out) r.average = r.raw - mean;
  return out;
}

/// Snapped node of electrode "Cz" if present, else the exterior boundary node farthest from the dipole.
inline NodeId choose_reference(const HexMesh& mesh, const ElectrodeSet& electrodes, const Dipole& d) {
  for (const auto& e : electrodes)
    if (e.name == "Cz") return e.node;
  NodeId best = 0;
  double far = -1.0;
  for (NodeId n : boundary_nodes(mesh)) {
    const double dist = distance(mesh.nodes[n], d.position);
    if (dist > far) {
      far = dist;
      best = n;
    }
  }
  return best;
}

/// Reads `name,x_mm,y_mm,z_mm` lines; blank lines and lines starting with '#' are skipped,
/// as is a header line starting with "name".
inline std::vector<std::pair<std::string, Vec3>> read_electrode_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read electrode file '" + path.string() + "'");
  std::vector<std::pair<std::string, Vec3>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || (line_no == 1 && line.rfind("name", 0) == 0)) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) cells.push_back(line.substr(start, pos - start));
    cells.push_back(line.substr(start));
    if (cells.size() != 4) throw ParseError(line_no, "expected name,x_mm,y_mm,z_mm");
    try {
      out.push_back({cells[0], {parse_double(cells[1]), parse_double(cells[2]), parse_double(cells[3])}});
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

inline void write_potentials_csv(const std::vector<ElectrodeReading>& readings, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "name,raw_uV,avg_ref_uV\n";
  for (const auto& r : readings) out << r.name << ',' << format_double(r.raw * 1e6) << ',' << format_double(r.average * 1e6) << '\n';
}

// ---------------------------------------------------------------------------
// Homogeneous-sphere reference solution

/// Potential on the surface of a homogeneous sphere of radius R (m) and
/// conductivity sigma (S/m) due to a current dipole at r0 (m) with moment p (A m),
/// from the Legendre expansion
///   V = 1/(4 pi sigma) sum_n (2n+1)/n b^{n-1}/R^{n+1} [n P_n(c) p.u0 + P_n'(c)(p.u - c p.u0)],
/// with b = |r0|, u0 = r0/b, u = r/|r|, c = u.u0. 100 terms are summed; the
/// bound on the remainder must stay below 1e-10 of the summed term magnitudes.
inline std::vector<double> analytic_sphere_dipole(double R, double sigma, const Vec3& r0, const Vec3& p, std::span<const Vec3> points) {
  if (!(R > 0.0) || !(sigma > 0.0)) throw ArgumentError("sphere radius and conductivity must be > 0");
  const double b = norm(r0);
  if (!(b < R)) throw ArgumentError("dipole must lie strictly inside the sphere");
  const double scale = 1.0 / (4.0 * std::numbers::pi * sigma);
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& point : points) {
    const Vec3 u = normalized(point);
    if (b == 0.0) {
      out.push_back(scale * 3.0 * dot(p, u) / (R * R));
      continue;
    }
    const Vec3 u0 = r0 / b;
    const double c = std::clamp(dot(u, u0), -1.0, 1.0);
    const double pu0 = dot(p, u0), pu = dot(p, u);
    double P_prev = 1.0, P = c;           // P_{n-1}, P_n
    double dP_prev = 0.0, dP = 1.0;       // P'_{n-1}, P'_n
    double rho_pow = 1.0 / (R * R);       // b^{n-1} / R^{n+1}
    CompensatedSum sum;
    double magnitude = 0.0;
    const int max_terms = 100;
    for (int n = 1; n <= max_terms; ++n) {
      const double term = (2.0 * n + 1.0) / n * rho_pow * (n * P * pu0 + dP * (pu - c * pu0));
      sum += term;
      magnitude += std::abs(term);
      const double P_next = ((2.0 * n + 1.0) * c * P - n * P_prev) / (n + 1.0);
      const double dP_next = dP_prev + (2.0 * n + 1.0) * P;
      P_prev = P;
      P = P_next;
      dP_prev = dP;
      dP = dP_next;
      rho_pow *= b / R;
    }
    // |P_n| <= 1 and |P_n'| <= n(n+1)/2 bound term n by (2n+1) rho^{n-1} (|p.u0| + (n+1)|p|) / R^2.
    const double rho = b / R, N = max_terms, growth = rho * (1.0 + 3.0 / N);
    const double tail = growth < 1.0 ? (2 * N + 3) * std::pow(rho, N) * (std::abs(pu0) + (N + 2) * norm(p)) / (R * R) / (1.0 - growth)
                                     : std::numeric_limits<double>::infinity();
    if (tail > 1e-10 * magnitude) throw ArgumentError("dipole too close to the sphere surface for a 100-term expansion");
    out.push_back(scale * sum.value());
  }
  return out;
}

/// Relative difference measure and magnitude ratio of `numeric` against
/// `reference`, after removing each vector's mean.
struct ErrorMeasures {
  double rdm{0.0};
  double mag{0.0};
};

inline ErrorMeasures compare_potentials(std::span<const double> numeric, std::span<const double> reference) {
  if (numeric.size() != reference.size() || numeric.empty()) throw ArgumentError("potential vectors must be nonempty and equal in length");
  auto centered = [](std::span<const double> v) {
    CompensatedSum s;
    for (double x : v) s += x;
    const double mean = s.value() / static_cast<double>(v.size());
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x -= mean;
    return out;
  };
  const auto a = centered(numeric), r = centered(reference);
  const double na = std::sqrt(fem::dot(a, a)), nr = std::sqrt(fem::dot(r, r));
  if (!(na > 0.0) || !(nr > 0.0)) throw ArgumentError("potential vectors must not be constant");
  CompensatedSum d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] / na - r[i] / nr;
    d += diff * diff;
  }
  return {std::sqrt(d.value()), na / nr};
}

}  // namespace atlasmesh
