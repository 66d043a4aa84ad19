#pragma once

// Mesh serializers: VTK legacy ASCII (read and write), MFEM v1.0 and LS-DYNA
// keyword. Output is byte-stable: C-locale number formatting only.

#include <atlasmesh/hexmesh.hpp>
#include <atlasmesh/materials.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace atlasmesh {

struct ExportBundle {
  HexMesh mesh;
  std::map<std::string, std::vector<std::int64_t>> element_ints;
  std::map<std::string, std::vector<double>> element_reals;
  std::map<std::string, std::vector<double>> nodal;
};

inline constexpr std::string_view vtk_material_array = "MaterialLabel";
inline constexpr std::string_view vtk_anatomical_array = "AnatomicalLabel";
inline constexpr std::string_view vtk_node_set_prefix = "NodeSet_";

/// Throws ValidationError on length mismatches or names that cannot be written.
inline void validate_bundle(const ExportBundle& b) {
  const auto& m = b.mesh;
  if (m.material_label.size() != m.element_count() || m.anatomical_label.size() != m.element_count())
    throw ValidationError("label arrays do not match the element count");
  for (const auto& h : m.elements)
    for (NodeId n : h)
      if (n < 0 || static_cast<std::size_t>(n) >= m.node_count()) throw ValidationError("element references a missing node");
  std::set<std::string> names;
  auto check_name = [&](const std::string& name) {
    if (name.empty() || std::any_of(name.begin(), name.end(), [](unsigned char c) { return std::isspace(c) || !std::isprint(c); }))
      throw ValidationError("field name '" + name + "' must be nonempty printable text without whitespace");
    if (name == vtk_material_array || name == vtk_anatomical_array || name.starts_with(vtk_node_set_prefix))
      throw ValidationError("field name '" + name + "' is reserved");
    if (!names.insert(name).second) throw ValidationError("duplicate field name '" + name + "'");
  };
  for (const auto& [name, v] : b.element_ints) {
    check_name(name);
    if (v.size() != m.element_count()) throw ValidationError("element field '" + name + "' length does not match the element count");
  }
  for (const auto& [name, v] : b.element_reals) {
    check_name(name);
    if (v.size() != m.element_count()) throw ValidationError("element field '" + name + "' length does not match the element count");
  }
  for (const auto& [name, v] : b.nodal) {
    check_name(name);
    if (v.size() != m.node_count()) throw ValidationError("nodal field '" + name + "' length does not match the node count");
  }
  for (const auto& [name, set] : m.node_sets) {
    if (name.empty() || std::any_of(name.begin(), name.end(), [](unsigned char c) { return std::isspace(c) || !std::isprint(c); }))
      throw ValidationError("node set name '" + name + "' must be nonempty printable text without whitespace");
    for (NodeId n : set)
      if (n < 0 || static_cast<std::size_t>(n) >= m.node_count()) throw ValidationError("node set '" + name + "' references a missing node");
  }
}

/// Equality of everything the VTK format carries: nodes, connectivity, both
/// label arrays, node sets and user fields.
inline bool same_structure(const ExportBundle& a, const ExportBundle& b) {
  return a.mesh.nodes == b.mesh.nodes && a.mesh.elements == b.mesh.elements && a.mesh.material_label == b.mesh.material_label &&
         a.mesh.anatomical_label == b.mesh.anatomical_label && a.mesh.node_sets == b.mesh.node_sets &&
         a.element_ints == b.element_ints && a.element_reals == b.element_reals && a.nodal == b.nodal;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) throw IoError(path.string() + ": write failed");
}

inline void append_int(std::string& s, std::int64_t v) {
  std::array<char, 24> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  s.append(buf.data(), end);
}

/// Right-aligned integer in a fixed-width column.
inline void append_fixed(std::string& s, std::int64_t v, std::size_t width) {
  std::string t;
  append_int(t, v);
  if (t.size() > width) throw IdOverflowError("value " + t + " does not fit a " + std::to_string(width) + "-character field");
  s.append(width - t.size(), ' ');
  s += t;
}

/// Right-aligned scientific number with `digits` after the point.
inline void append_sci(std::string& s, double v, int digits, std::size_t width) {
  std::array<char, 48> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::scientific, digits);
  if (ec != std::errc{} || static_cast<std::size_t>(end - buf.data()) > width)
    throw ValidationError("value " + format_double(v) + " does not fit a " + std::to_string(width) + "-character field");
  s.append(width - static_cast<std::size_t>(end - buf.data()), ' ');
  s.append(buf.data(), end);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// VTK legacy

inline std::string vtk_text(const ExportBundle& b) {
  validate_bundle(b);
  const auto& m = b.mesh;
  std::string s;
  s.reserve(m.node_count() * 64 + m.element_count() * 64);
  s += "# vtk DataFile Version 3.0\natlasmesh hexahedral mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  s += "POINTS " + std::to_string(m.node_count()) + " double\n";
  for (const auto& p : m.nodes) s += format_double(p.x) + ' ' + format_double(p.y) + ' ' + format_double(p.z) + '\n';
  s += "CELLS " + std::to_string(m.element_count()) + ' ' + std::to_string(m.element_count() * 9) + '\n';
  for (const auto& h : m.elements) {
    s += '8';
    for (NodeId n : h) {
      s += ' ';
      detail::append_int(s, n);
    }
    s += '\n';
  }
  s += "CELL_TYPES " + std::to_string(m.element_count()) + '\n';
  for (std::size_t e = 0; e < m.element_count(); ++e) s += "12\n";

  auto int_array = [&](std::string_view name, auto const& values) {
    s += "SCALARS ";
    s += name;
    s += " int 1\nLOOKUP_TABLE default\n";
    for (auto v : values) {
      detail::append_int(s, static_cast<std::int64_t>(v));
      s += '\n';
    }
  };
  auto real_array = [&](std::string_view name, const std::vector<double>& values) {
    s += "SCALARS ";
    s += name;
    s += " double 1\nLOOKUP_TABLE default\n";
    for (double v : values) s += format_double(v) + '\n';
  };

  s += "CELL_DATA " + std::to_string(m.element_count()) + '\n';
  int_array(vtk_material_array, m.material_label);
  int_array(vtk_anatomical_array, m.anatomical_label);
  for (const auto& [name, v] : b.element_ints) int_array(name, v);
  for (const auto& [name, v] : b.element_reals) real_array(name, v);

  if (!m.node_sets.empty() || !b.nodal.empty()) {
    s += "POINT_DATA " + std::to_string(m.node_count()) + '\n';
    for (const auto& [name, set] : m.node_sets) {
      std::vector<std::uint8_t> mask(m.node_count(), 0);
      for (NodeId n : set) mask[n] = 1;
      int_array(std::string(vtk_node_set_prefix) + name, mask);
    }
    for (const auto& [name, v] : b.nodal) real_array(name, v);
  }
  return s;
}

inline void export_vtk(const ExportBundle& b, const std::filesystem::path& path) { detail::write_file(path, vtk_text(b)); }

namespace detail {

/// Whitespace tokenizer that remembers the line of each token.
class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : text_(text) {}

  std::size_t line() const { return line_; }
  bool at_end() {
    skip();
    return pos_ >= text_.size();
  }
  std::string_view next(std::string_view expecting) {
    skip();
    if (pos_ >= text_.size()) throw ParseError(line_, "unexpected end of file, expected " + std::string(expecting));
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }
  /// Rest of the current line, trimmed.
  std::string_view rest_of_line() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
    auto out = text_.substr(start, pos_ - start);
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.remove_suffix(1);
    return out;
  }
  void expect(std::string_view word) {
    const auto t = next(word);
    if (t != word) throw ParseError(line_, "expected '" + std::string(word) + "', found '" + std::string(t) + "'");
  }
  template <class Int>
  Int integer(std::string_view what) {
    const auto t = next(what);
    try {
      return parse_int<Int>(t);
    } catch (const ArgumentError&) {
      throw ParseError(line_, "expected " + std::string(what) + ", found '" + std::string(t) + "'");
    }
  }
  double real(std::string_view what) {
    const auto t = next(what);
    try {
      return parse_double(t);
    } catch (const ArgumentError&) {
      throw ParseError(line_, "expected " + std::string(what) + ", found '" + std::string(t) + "'");
    }
  }

 private:
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_{0};
  std::size_t line_{1};
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError(path.string() + ": read failed");
  return ss.str();
}

}  // namespace detail

/// Parses VTK legacy ASCII unstructured grids made only of hexahedra.
inline ExportBundle parse_vtk(std::string_view text) {
  detail::TokenReader r(text);
  {
    const auto first = r.rest_of_line();
    if (!first.starts_with("# vtk DataFile")) throw ParseError(1, "missing '# vtk DataFile' header");
  }
  r.next("title line");
  r.rest_of_line();
  r.expect("ASCII");
  r.expect("DATASET");
  r.expect("UNSTRUCTURED_GRID");

  ExportBundle b;
  auto& m = b.mesh;
  bool have_points = false, have_cells = false, have_types = false;
  enum class Section { none, cell, point } section = Section::none;

  while (!r.at_end()) {
    const auto kw = r.next("section keyword");
    if (kw == "POINTS") {
      const auto n = r.integer<std::size_t>("point count");
      const auto type = r.next("point type");
      if (type != "double" && type != "float") throw ParseError(r.line(), "unsupported point type '" + std::string(type) + "'");
      m.nodes.resize(n);
      for (auto& p : m.nodes) p = {r.real("x"), r.real("y"), r.real("z")};
      have_points = true;
    } else if (kw == "CELLS") {
      const auto n = r.integer<std::size_t>("cell count");
      const auto size = r.integer<std::size_t>("cell list size");
      std::size_t consumed = 0;
      std::vector<std::vector<std::int64_t>> cells(n);
      for (auto& c : cells) {
        const auto k = r.integer<std::size_t>("cell node count");
        c.resize(k);
        for (auto& v : c) v = r.integer<std::int64_t>("node index");
        consumed += k + 1;
      }
      if (consumed != size) throw ParseError(r.line(), "CELLS list size does not match its contents");
      m.elements.assign(n, Hex{});
      for (std::size_t e = 0; e < n; ++e) {
        if (cells[e].size() != 8) continue;  // reported with the cell types
        for (int i = 0; i < 8; ++i) {
          if (cells[e][i] < 0 || static_cast<std::size_t>(cells[e][i]) >= m.nodes.size())
            throw ParseError(r.line(), "cell " + std::to_string(e) + " references a missing point");
          m.elements[e][i] = static_cast<NodeId>(cells[e][i]);
        }
      }
      have_cells = true;
      const auto types_kw = r.next("CELL_TYPES");
      if (types_kw != "CELL_TYPES") throw ParseError(r.line(), "expected CELL_TYPES after CELLS");
      const auto nt = r.integer<std::size_t>("cell type count");
      if (nt != n) throw ParseError(r.line(), "CELL_TYPES count does not match CELLS");
      for (std::size_t e = 0; e < n; ++e) {
        const int t = r.integer<int>("cell type");
        if (t != 12) throw UnsupportedCellError(e, t);
        if (cells[e].size() != 8) throw ParseError(r.line(), "hexahedron " + std::to_string(e) + " does not list 8 points");
      }
      have_types = true;
    } else if (kw == "CELL_DATA" || kw == "POINT_DATA") {
      const auto n = r.integer<std::size_t>("data count");
      const bool cell = kw == "CELL_DATA";
      if (n != (cell ? m.elements.size() : m.nodes.size()))
        throw ParseError(r.line(), std::string(kw) + " count does not match the " + (cell ? "cell" : "point") + " count");
      section = cell ? Section::cell : Section::point;
    } else if (kw == "SCALARS") {
      if (section == Section::none) throw ParseError(r.line(), "SCALARS outside CELL_DATA or POINT_DATA");
      const std::string name(r.next("array name"));
      const std::string type(r.next("array type"));
      const auto after = r.rest_of_line();
      if (!after.empty() && after != "1") throw ParseError(r.line(), "only single-component arrays are supported");
      r.expect("LOOKUP_TABLE");
      r.next("lookup table name");
      const bool is_int = type == "int" || type == "long" || type == "short" || type == "char" || type == "unsigned_char" ||
                          type == "unsigned_int" || type == "unsigned_short" || type == "unsigned_long";
      if (!is_int && type != "double" && type != "float") throw ParseError(r.line(), "unsupported array type '" + type + "'");
      const std::size_t count = section == Section::cell ? m.elements.size() : m.nodes.size();
      if (section == Section::cell) {
        if (is_int) {
          std::vector<std::int64_t> v(count);
          for (auto& x : v) x = r.integer<std::int64_t>("integer value");
          if (name == vtk_material_array || name == vtk_anatomical_array) {
            auto& target = name == vtk_material_array ? m.material_label : m.anatomical_label;
            target.assign(v.begin(), v.end());
          } else {
            b.element_ints[name] = std::move(v);
          }
        } else {
          std::vector<double> v(count);
          for (auto& x : v) x = r.real("real value");
          b.element_reals[name] = std::move(v);
        }
      } else {
        std::vector<double> v(count);
        if (is_int) {
          for (auto& x : v) x = static_cast<double>(r.integer<std::int64_t>("integer value"));
        } else {
          for (auto& x : v) x = r.real("real value");
        }
        if (is_int && name.starts_with(vtk_node_set_prefix)) {
          auto& set = m.node_sets[name.substr(vtk_node_set_prefix.size())];
          for (std::size_t i = 0; i < count; ++i)
            if (v[i] != 0.0) set.push_back(static_cast<NodeId>(i));
        } else {
          b.nodal[name] = std::move(v);
        }
      }
    } else {
      throw ParseError(r.line(), "unsupported section '" + std::string(kw) + "'");
    }
  }
  if (!have_points || !have_cells || !have_types) throw ParseError(r.line(), "file ends before POINTS, CELLS and CELL_TYPES are complete");
  m.material_label.resize(m.elements.size(), 0);
  m.anatomical_label.resize(m.elements.size(), 0);
  return b;
}

inline ExportBundle import_vtk(const std::filesystem::path& path) {
  const auto text = detail::read_file(path);
  try {
    return parse_vtk(text);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
  }
}

// ---------------------------------------------------------------------------
// MFEM

/// MFEM mesh v1.0: attribute = material label, hexahedra (geometry 5), all
/// exterior faces as boundary squares (geometry 3) with attribute 1.
inline std::string mfem_text(const ExportBundle& b) {
  validate_bundle(b);
  const auto& m = b.mesh;
  for (Label l : m.material_label)
    if (l < 1) throw ValidationError("MFEM attributes must be >= 1; found material label " + std::to_string(l));
  const auto topo = face_topology(m);
  const auto boundary = boundary_faces(m, topo);

  std::string s = "MFEM mesh v1.0\n\ndimension\n3\n\nelements\n" + std::to_string(m.element_count()) + '\n';
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    detail::append_int(s, m.material_label[e]);
    s += " 5";
    for (NodeId n : m.elements[e]) {
      s += ' ';
      detail::append_int(s, n);
    }
    s += '\n';
  }
  s += "\nboundary\n" + std::to_string(boundary.size()) + '\n';
  for (const auto& f : boundary) {
    s += "1 3";
    for (NodeId n : m.face_nodes(f)) {
      s += ' ';
      detail::append_int(s, n);
    }
    s += '\n';
  }
  s += "\nvertices\n" + std::to_string(m.node_count()) + "\n3\n";
  for (const auto& p : m.nodes) s += format_double(p.x) + ' ' + format_double(p.y) + ' ' + format_double(p.z) + '\n';
  return s;
}

inline void export_mfem(const ExportBundle& b, const std::filesystem::path& path) { detail::write_file(path, mfem_text(b)); }

// ---------------------------------------------------------------------------
// LS-DYNA

inline constexpr std::size_t lsdyna_max_id = 99'999'999;

inline void check_lsdyna_ids(std::size_t nodes, std::size_t elements) {
  if (nodes > lsdyna_max_id) throw IdOverflowError(std::to_string(nodes) + " nodes exceed the 8-digit LS-DYNA id limit");
  if (elements > lsdyna_max_id) throw IdOverflowError(std::to_string(elements) + " elements exceed the 8-digit LS-DYNA id limit");
}

/// Keyword deck in mm. Node ids and element ids are 1-based; part id =
/// material label. With a table, parts are titled by material name and
/// linear-elastic records become *MAT_ELASTIC cards in tonne/mm/s/MPa.
inline std::string lsdyna_text(const ExportBundle& b, const MaterialTable* table = nullptr) {
  validate_bundle(b);
  const auto& m = b.mesh;
  check_lsdyna_ids(m.node_count(), m.element_count());
  const std::set<Label> parts(m.material_label.begin(), m.material_label.end());
  for (Label l : parts)
    if (l < 1 || static_cast<std::size_t>(l) > lsdyna_max_id) throw IdOverflowError("material label " + std::to_string(l) + " is not a valid part id");

  std::string s = "*KEYWORD\n*TITLE\natlasmesh hexahedral mesh\n";
  s += "*NODE\n$#   nid               x               y               z\n";
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    detail::append_fixed(s, static_cast<std::int64_t>(i + 1), 8);
    detail::append_sci(s, m.nodes[i].x, 9, 16);
    detail::append_sci(s, m.nodes[i].y, 9, 16);
    detail::append_sci(s, m.nodes[i].z, 9, 16);
    s += '\n';
  }
  s += "*ELEMENT_SOLID\n$#   eid     pid      n1      n2      n3      n4      n5      n6      n7      n8\n";
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    detail::append_fixed(s, static_cast<std::int64_t>(e + 1), 8);
    detail::append_fixed(s, m.material_label[e], 8);
    for (NodeId n : m.elements[e]) detail::append_fixed(s, static_cast<std::int64_t>(n) + 1, 8);
    s += '\n';
  }
  s += "*SECTION_SOLID\n$#   secid    elform\n";
  detail::append_fixed(s, 1, 10);
  detail::append_fixed(s, 1, 10);
  s += '\n';
  for (Label l : parts) {
    const MaterialRecord* rec = nullptr;
    if (table)
      if (auto it = table->find(l); it != table->end()) rec = &it->second;
    s += "*PART\n";
    s += rec && !rec->name.empty() ? rec->name : "material_" + std::to_string(l);
    s += "\n$#     pid     secid       mid\n";
    detail::append_fixed(s, l, 10);
    detail::append_fixed(s, 1, 10);
    detail::append_fixed(s, l, 10);
    s += '\n';
    if (rec && rec->elastic) {
      s += "*MAT_ELASTIC\n$#     mid        ro         e        pr\n";
      detail::append_fixed(s, l, 10);
      detail::append_sci(s, rec->elastic->density * 1e-12, 3, 10);
      detail::append_sci(s, rec->elastic->youngs_modulus * 1e-6, 3, 10);
      detail::append_sci(s, rec->elastic->poisson_ratio, 3, 10);
      s += '\n';
    }
  }
  s += "*END\n";
  return s;
}

inline void export_lsdyna(const ExportBundle& b, const std::filesystem::path& path, const MaterialTable* table = nullptr) {
  detail::write_file(path, lsdyna_text(b, table));
}

}  // namespace atlasmesh
