#pragma once

// NRRD (attached header, raw encoding) reader/writer for label volumes, plus
// the JSON label-table sidecar `<stem>.labels.json`.

#include <atlasmesh/volume.hpp>

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace atlasmesh {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

struct NrrdScalar {
  std::size_t size;
  bool is_signed;
  bool is_integer;
};

inline NrrdScalar nrrd_scalar(const std::string& type) {
  static const std::map<std::string, NrrdScalar> kinds = {
      {"signed char", {1, true, true}},     {"int8", {1, true, true}},          {"int8_t", {1, true, true}},
      {"uchar", {1, false, true}},          {"unsigned char", {1, false, true}}, {"uint8", {1, false, true}},
      {"uint8_t", {1, false, true}},        {"short", {2, true, true}},         {"short int", {2, true, true}},
      {"signed short", {2, true, true}},    {"signed short int", {2, true, true}}, {"int16", {2, true, true}},
      {"int16_t", {2, true, true}},         {"ushort", {2, false, true}},       {"unsigned short", {2, false, true}},
      {"unsigned short int", {2, false, true}}, {"uint16", {2, false, true}},   {"uint16_t", {2, false, true}},
      {"int", {4, true, true}},             {"signed int", {4, true, true}},    {"int32", {4, true, true}},
      {"int32_t", {4, true, true}},         {"uint", {4, false, true}},         {"unsigned int", {4, false, true}},
      {"uint32", {4, false, true}},         {"uint32_t", {4, false, true}},     {"float", {4, true, false}},
      {"double", {8, true, false}},         {"longlong", {8, true, true}},      {"int64", {8, true, true}},
      {"ulonglong", {8, false, true}},      {"uint64", {8, false, true}},
  };
  auto it = kinds.find(type);
  if (it == kinds.end()) throw FormatError("type", "unknown NRRD type '" + type + "'");
  return it->second;
}

// "(a,b,c)" -> three numbers
inline Vec3 parse_vector(const std::string& field, std::string_view text) {
  std::string s = trim(text);
  if (s.size() < 2 || s.front() != '(' || s.back() != ')') throw FormatError(field, "expected '(x,y,z)', got '" + s + "'");
  s = s.substr(1, s.size() - 2);
  Vec3 v;
  std::size_t start = 0;
  for (int a = 0; a < 3; ++a) {
    const auto comma = s.find(',', start);
    if ((a < 2) != (comma != std::string::npos)) throw FormatError(field, "expected three components");
    const std::string tok = trim(s.substr(start, a < 2 ? comma - start : std::string::npos));
    try {
      v[a] = parse_double(tok);
    } catch (const ArgumentError&) {
      throw FormatError(field, "bad number '" + tok + "'");
    }
    start = comma + 1;
  }
  return v;
}

inline std::vector<std::string> split_vectors(const std::string& field, std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    if (text[i] == '(') {
      const auto close = text.find(')', i);
      if (close == std::string_view::npos) throw FormatError(field, "unterminated vector");
      out.emplace_back(text.substr(i, close - i + 1));
      i = close + 1;
    } else {
      const auto end = text.find_first_of(" \t", i);
      out.emplace_back(text.substr(i, end == std::string_view::npos ? std::string_view::npos : end - i));
      i = end == std::string_view::npos ? text.size() : end;
    }
  }
  return out;
}

inline std::string vector_text(const Vec3& v) {
  return "(" + format_double(v.x) + "," + format_double(v.y) + "," + format_double(v.z) + ")";
}

}  // namespace detail

/// Sidecar path for a volume: `brain.nrrd` -> `brain.labels.json`.
inline std::filesystem::path label_table_path(const std::filesystem::path& volume_path) {
  auto p = volume_path;
  p.replace_extension(".labels.json");
  return p;
}

inline LabelTable label_table_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("label table", "expected an array of {id, name, parent}");
  LabelTable table;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("id") || !e["id"].is_number_integer())
      throw FormatError("label table", "entry without integer 'id'");
    const Label id = e["id"].get<Label>();
    LabelInfo info;
    info.name = e.contains("name") && e["name"].is_string() ? e["name"].get<std::string>() : default_label_name(id);
    if (e.contains("parent") && !e["parent"].is_null()) {
      if (!e["parent"].is_number_integer()) throw FormatError("label table", "parent of " + std::to_string(id) + " not an integer");
      info.parent = e["parent"].get<Label>();
    }
    if (!table.emplace(id, info).second) throw FormatError("label table", "duplicate id " + std::to_string(id));
  }
  return table;
}

inline nlohmann::json label_table_to_json(const LabelTable& table) {
  auto arr = nlohmann::json::array();
  for (const auto& [id, info] : table) {
    nlohmann::json e{{"id", id}, {"name", info.name}};
    e["parent"] = info.parent ? nlohmann::json(*info.parent) : nlohmann::json(nullptr);
    arr.push_back(std::move(e));
  }
  return arr;
}

/// Reads a 3D integer NRRD and its optional label-table sidecar. Labels absent
/// from the sidecar are named "label_<id>".
inline LabelVolume read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open volume '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line) || line.rfind("NRRD", 0) != 0) throw FormatError("magic", "missing NRRD magic line");

  std::map<std::string, std::string> fields;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) break;
    if (line.front() == '#') continue;
    if (line.find(":=") != std::string::npos) continue;  // key/value pairs carry no geometry
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw FormatError(detail::trim(line), "header line without ': '");
    fields[detail::trim(line.substr(0, colon))] = detail::trim(line.substr(colon + 2));
  }

  auto require = [&](const std::string& key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw FormatError(key, "required field missing");
    return it->second;
  };

  const auto scalar = detail::nrrd_scalar(require("type"));
  if (!scalar.is_integer) throw TypeError("NRRD voxel type '" + fields["type"] + "' is not an integer type");

  int dimension = 0;
  try {
    dimension = parse_int<int>(require("dimension"));
  } catch (const ArgumentError&) {
    throw FormatError("dimension", "not an integer");
  }
  if (dimension != 3) throw FormatError("dimension", "only 3D volumes are supported");

  const auto sizes = detail::split_ws(require("sizes"));
  if (sizes.size() != 3)
    throw FormatError("sizes", "dimension is 3 but " + std::to_string(sizes.size()) + " sizes given");
  LabelVolume v;
  for (int a = 0; a < 3; ++a) {
    try {
      v.geometry.dims[a] = parse_int<int>(sizes[a]);
    } catch (const ArgumentError&) {
      throw FormatError("sizes", "bad size '" + sizes[a] + "'");
    }
    if (v.geometry.dims[a] < 1) throw FormatError("sizes", "sizes must be >= 1");
  }

  if (auto it = fields.find("space directions"); it != fields.end()) {
    const auto dirs = detail::split_vectors("space directions", it->second);
    if (dirs.size() != 3) throw FormatError("space directions", "expected three direction vectors");
    for (int a = 0; a < 3; ++a) {
      const Vec3 d = detail::parse_vector("space directions", dirs[a]);
      for (int b = 0; b < 3; ++b)
        if (b != a && d[b] != 0.0) throw FormatError("space directions", "only diagonal directions are supported");
      if (!(d[a] > 0.0)) throw FormatError("space directions", "spacing must be positive");
      v.geometry.spacing[a] = d[a];
    }
  } else if (auto sp = fields.find("spacings"); sp != fields.end()) {
    const auto toks = detail::split_ws(sp->second);
    if (toks.size() != 3) throw FormatError("spacings", "expected three spacings");
    for (int a = 0; a < 3; ++a) {
      try {
        v.geometry.spacing[a] = parse_double(toks[a]);
      } catch (const ArgumentError&) {
        throw FormatError("spacings", "bad spacing '" + toks[a] + "'");
      }
      if (!(v.geometry.spacing[a] > 0.0)) throw FormatError("spacings", "spacing must be positive");
    }
  }
  if (auto it = fields.find("space origin"); it != fields.end())
    v.geometry.origin = detail::parse_vector("space origin", it->second);

  const std::string encoding = require("encoding");
  if (encoding != "raw") throw FormatError("encoding", "only raw encoding is supported, got '" + encoding + "'");
  bool big_endian = false;
  if (scalar.size > 1) {
    const std::string endian = require("endian");
    if (endian == "big")
      big_endian = true;
    else if (endian != "little")
      throw FormatError("endian", "expected 'little' or 'big'");
  }
  if (fields.contains("data file")) throw FormatError("data file", "detached data is not supported");

  const std::size_t count = v.geometry.voxel_count();
  std::vector<unsigned char> raw(count * scalar.size);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw FormatError("data", "expected " + std::to_string(raw.size()) + " bytes of voxel data, found " +
                                  std::to_string(in.gcount()));

  v.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = raw.data() + i * scalar.size;
    std::uint64_t u = 0;
    for (std::size_t b = 0; b < scalar.size; ++b) {
      const std::size_t src = big_endian ? scalar.size - 1 - b : b;
      u |= static_cast<std::uint64_t>(p[src]) << (8 * b);
    }
    std::int64_t value = 0;
    if (scalar.is_signed && scalar.size < 8 && (u >> (8 * scalar.size - 1)) & 1u)
      value = static_cast<std::int64_t>(u | (~std::uint64_t{0} << (8 * scalar.size)));
    else
      value = static_cast<std::int64_t>(u);
    if (value < 0 || value > std::numeric_limits<Label>::max())
      throw FormatError("data", "voxel " + std::to_string(i) + " has label " + std::to_string(value) +
                                    " outside the supported range");
    v.labels[i] = static_cast<Label>(value);
  }

  const auto sidecar = label_table_path(path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream js(sidecar);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(js);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("label table", e.what());
    }
    v.label_table = label_table_from_json(j);
  }
  for (Label l : v.nonzero_labels())
    if (!v.label_table.contains(l)) v.label_table[l] = LabelInfo{default_label_name(l), std::nullopt};
  v.validate();
  return v;
}

/// Writes uint16 little-endian raw NRRD plus the label-table sidecar.
inline void write_volume(const LabelVolume& v, const std::filesystem::path& path) {
  v.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write volume '" + path.string() + "'");
  const auto& g = v.geometry;
  out << "NRRD0004\n"
      << "# label volume written by atlasmesh\n"
      << "type: uint16\n"
      << "dimension: 3\n"
      << "space: left-posterior-superior\n"
      << "sizes: " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << '\n'
      << "space directions: " << detail::vector_text({g.spacing.x, 0, 0}) << ' ' << detail::vector_text({0, g.spacing.y, 0})
      << ' ' << detail::vector_text({0, 0, g.spacing.z}) << '\n'
      << "kinds: domain domain domain\n"
      << "endian: little\n"
      << "encoding: raw\n"
      << "space origin: " << detail::vector_text(g.origin) << "\n\n";
  std::vector<unsigned char> raw(v.labels.size() * 2);
  for (std::size_t i = 0; i < v.labels.size(); ++i) {
    const Label l = v.labels[i];
    if (l < 0 || l > 0xFFFF) throw ValidationError("label " + std::to_string(l) + " does not fit uint16");
    raw[2 * i] = static_cast<unsigned char>(l & 0xFF);
    raw[2 * i + 1] = static_cast<unsigned char>((l >> 8) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");

  std::ofstream side(label_table_path(path));
  if (!side) throw IoError("cannot write label table for '" + path.string() + "'");
  side << label_table_to_json(v.label_table).dump(2) << '\n';
}

inline BinaryMask read_mask(const std::filesystem::path& path) { return nonzero_mask(read_volume(path)); }

// ---------------------------------------------------------------------------
// Edit script JSON: [{"op":"merge","sources":[3,4],"target":3,"name":"x"},
//                    {"op":"remove","ids":[7]},
//                    {"op":"group","ids":[1,2],"id":100,"name":"cerebrum"}]

inline EditScript edit_script_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("edit script", "expected an array of steps");
  EditScript script;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& s = j[i];
    if (!s.is_object() || !s.contains("op") || !s["op"].is_string()) throw ScriptError(i, "step without 'op'");
    const auto op = s["op"].get<std::string>();
    auto ids = [&](const char* key) {
      if (!s.contains(key) || !s[key].is_array()) throw ScriptError(i, std::string("missing '") + key + "' array");
      return s[key].get<std::vector<Label>>();
    };
    auto integer = [&](const char* key) {
      if (!s.contains(key) || !s[key].is_number_integer()) throw ScriptError(i, std::string("missing integer '") + key + "'");
      return s[key].get<Label>();
    };
    if (op == "merge") {
      MergeStep m{ids("sources"), integer("target"), std::nullopt};
      if (s.contains("name")) m.name = s["name"].get<std::string>();
      script.emplace_back(std::move(m));
    } else if (op == "remove") {
      script.emplace_back(RemoveStep{ids("ids")});
    } else if (op == "group") {
      if (!s.contains("name") || !s["name"].is_string()) throw ScriptError(i, "group needs a 'name'");
      script.emplace_back(GroupStep{ids("ids"), integer("id"), s["name"].get<std::string>()});
    } else {
      throw ScriptError(i, "unknown op '" + op + "'");
    }
  }
  return script;
}

}  // namespace atlasmesh
