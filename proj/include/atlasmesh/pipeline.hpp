#pragma once

// Config-driven end-to-end run: volume -> material map -> mesh -> labels ->
// EEG solve -> exports. The config is JSON with every key checked; relative
// paths resolve against the config file's directory.

#include <atlasmesh/bioelectric.hpp>
#include <atlasmesh/io.hpp>
#include <atlasmesh/labeling.hpp>
#include <atlasmesh/nrrd.hpp>
#include <atlasmesh/phantom.hpp>

namespace atlasmesh {

struct PhantomSpec {
  std::vector<double> radii;
  double spacing{1.0};
};

struct PipelineConfig {
  std::filesystem::path base_dir;

  // volume
  std::optional<std::filesystem::path> volume_input;
  std::optional<PhantomSpec> phantom;
  std::optional<std::filesystem::path> edits;

  // material_map
  std::optional<std::filesystem::path> brain_mask;
  MaterialRules rules;

  // mesh
  MeshParams mesh;
  std::vector<std::string> surface_names;

  // labeling; without an atlas path the meshed volume is used
  bool labeling{false};
  std::optional<std::filesystem::path> label_atlas;
  std::string label_field{"anatomical"};

  // materials
  std::optional<std::filesystem::path> materials_table;

  // eeg
  struct Eeg {
    Dipole dipole;
    std::filesystem::path electrodes;
    double tolerance{1e-9};
    std::string reference{"auto"};  // electrode name or "auto"
  };
  std::optional<Eeg> eeg;

  // export
  std::vector<std::string> formats{"vtk", "mfem", "lsdyna"};
  std::filesystem::path output_dir{"."};
};

namespace detail {

inline const nlohmann::json& object_at(const nlohmann::json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_object()) throw ValidationError(where + "." + key + " must be an object");
  return v;
}

inline std::string string_at(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) throw ValidationError(where + "." + key + " must be a string");
  return j[key].get<std::string>();
}

inline bool bool_at(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_boolean()) throw ValidationError(where + "." + key + " must be true or false");
  return j[key].get<bool>();
}

inline int int_at(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_integer()) throw ValidationError(where + "." + key + " must be an integer");
  return j[key].get<int>();
}

inline Vec3 vec3_at(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3 || !std::all_of(j[key].begin(), j[key].end(), [](const auto& x) { return x.is_number(); }))
    throw ValidationError(where + "." + key + " must be an array of 3 numbers");
  return {j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>()};
}

inline std::vector<Label> ids_at(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j[key].is_array() || !std::all_of(j[key].begin(), j[key].end(), [](const auto& x) { return x.is_number_integer(); }))
    throw ValidationError(where + "." + key + " must be an array of integers");
  return j[key].get<std::vector<Label>>();
}

inline std::vector<std::string> strings_at(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j[key].is_array() || !std::all_of(j[key].begin(), j[key].end(), [](const auto& x) { return x.is_string(); }))
    throw ValidationError(where + "." + key + " must be an array of strings");
  return j[key].get<std::vector<std::string>>();
}

}  // namespace detail

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  using namespace detail;
  if (!j.is_object()) throw ValidationError("config must be an object");
  reject_unknown_keys(j, {"volume", "material_map", "mesh", "labeling", "materials", "eeg", "export"}, "config");
  PipelineConfig c;
  c.base_dir = base_dir;
  auto path = [&](const std::string& p) { return (base_dir / p).lexically_normal(); };

  if (!j.contains("volume")) throw ValidationError("config.volume is required");
  {
    const auto& v = object_at(j, "volume", "config");
    reject_unknown_keys(v, {"input", "phantom", "edits"}, "volume");
    if (v.contains("input") == v.contains("phantom")) throw ValidationError("volume needs exactly one of 'input' or 'phantom'");
    if (v.contains("input")) c.volume_input = path(string_at(v, "input", "volume"));
    if (v.contains("phantom")) {
      const auto& p = object_at(v, "phantom", "volume");
      reject_unknown_keys(p, {"radii", "spacing_mm"}, "volume.phantom");
      if (!p.contains("radii") || !p["radii"].is_array() || !std::all_of(p["radii"].begin(), p["radii"].end(), [](const auto& x) { return x.is_number(); }))
        throw ValidationError("volume.phantom.radii must be an array of numbers");
      c.phantom = PhantomSpec{p["radii"].get<std::vector<double>>(), number_at(p, "spacing_mm", "volume.phantom")};
    }
    if (v.contains("edits")) c.edits = path(string_at(v, "edits", "volume"));
  }
  if (j.contains("material_map")) {
    const auto& m = object_at(j, "material_map", "config");
    reject_unknown_keys(m, {"brain_mask", "thickness_mm", "rules"}, "material_map");
    c.brain_mask = path(string_at(m, "brain_mask", "material_map"));
    if (m.contains("thickness_mm")) c.rules.shell_thickness_mm = number_at(m, "thickness_mm", "material_map");
    if (m.contains("rules")) {
      const auto& r = object_at(m, "rules", "material_map");
      reject_unknown_keys(r, {"grey_matter", "white_matter", "ventricle"}, "material_map.rules");
      const std::array<std::pair<const char*, Label>, 3> kinds = {
          {{"grey_matter", material::grey_matter}, {"white_matter", material::white_matter}, {"ventricle", material::ventricle}}};
      for (const auto& [key, mat] : kinds)
        if (r.contains(key))
          for (Label id : ids_at(r, key, "material_map.rules")) c.rules.atlas_to_material[id] = mat;
    }
  }
  if (!j.contains("mesh")) throw ValidationError("config.mesh is required");
  {
    const auto& m = object_at(j, "mesh", "config");
    reject_unknown_keys(m, {"spacing_mm", "surfaces", "projection_band", "pillow", "smoothing_iterations", "min_accept_sj"}, "mesh");
    c.mesh.spacing = number_at(m, "spacing_mm", "mesh");
    if (m.contains("surfaces")) c.surface_names = strings_at(m, "surfaces", "mesh");
    if (m.contains("projection_band")) c.mesh.projection_band = number_at(m, "projection_band", "mesh");
    if (m.contains("pillow")) c.mesh.pillow = bool_at(m, "pillow", "mesh");
    if (m.contains("smoothing_iterations")) c.mesh.smoothing_iterations = int_at(m, "smoothing_iterations", "mesh");
    if (m.contains("min_accept_sj")) c.mesh.min_accept_sj = number_at(m, "min_accept_sj", "mesh");
    c.mesh.validate();
    for (const auto& s : c.surface_names)
      if (s != "outer_scalp" && s != "scalp_skull" && s != "skull_csf")
        throw ValidationError("mesh.surfaces: unknown surface '" + s + "' (outer_scalp, scalp_skull, skull_csf)");
  }
  if (j.contains("labeling")) {
    const auto& l = object_at(j, "labeling", "config");
    reject_unknown_keys(l, {"atlas", "field"}, "labeling");
    c.labeling = true;
    if (l.contains("atlas")) c.label_atlas = path(string_at(l, "atlas", "labeling"));
    if (l.contains("field")) c.label_field = string_at(l, "field", "labeling");
    if (c.label_field != "anatomical" && c.label_field != "material") throw ValidationError("labeling.field must be 'anatomical' or 'material'");
  }
  if (j.contains("materials")) {
    const auto& m = object_at(j, "materials", "config");
    reject_unknown_keys(m, {"table"}, "materials");
    c.materials_table = path(string_at(m, "table", "materials"));
  }
  if (j.contains("eeg")) {
    const auto& e = object_at(j, "eeg", "config");
    reject_unknown_keys(e, {"dipole", "electrodes", "tolerance", "reference"}, "eeg");
    PipelineConfig::Eeg eeg;
    const auto& d = object_at(e, "dipole", "eeg");
    reject_unknown_keys(d, {"position_mm", "moment_a_mm"}, "eeg.dipole");
    eeg.dipole = {vec3_at(d, "position_mm", "eeg.dipole"), vec3_at(d, "moment_a_mm", "eeg.dipole")};
    if (norm(eeg.dipole.moment) == 0.0) throw ValidationError("eeg.dipole.moment_a_mm must be nonzero");
    eeg.electrodes = path(string_at(e, "electrodes", "eeg"));
    if (e.contains("tolerance")) eeg.tolerance = number_at(e, "tolerance", "eeg");
    if (!(eeg.tolerance > 0.0)) throw ValidationError("eeg.tolerance must be > 0");
    if (e.contains("reference")) eeg.reference = string_at(e, "reference", "eeg");
    c.eeg = eeg;
  }
  if (j.contains("export")) {
    const auto& x = object_at(j, "export", "config");
    reject_unknown_keys(x, {"formats", "output_dir"}, "export");
    if (x.contains("formats")) c.formats = strings_at(x, "formats", "export");
    for (const auto& f : c.formats)
      if (f != "vtk" && f != "mfem" && f != "lsdyna") throw ValidationError("export.formats: unknown format '" + f + "' (vtk, mfem, lsdyna)");
    if (x.contains("output_dir")) c.output_dir = string_at(x, "output_dir", "export");
  }
  c.output_dir = (base_dir / c.output_dir).lexically_normal();
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string(), e.what());
  }
  return pipeline_config_from_json(j, path.parent_path());
}

/// The volume a config describes, after edits and material mapping.
inline LabelVolume pipeline_volume(const PipelineConfig& c) {
  LabelVolume v = c.phantom ? shell_phantom(c.phantom->radii, c.phantom->spacing) : read_volume(*c.volume_input);
  if (c.edits) {
    std::ifstream in(*c.edits);
    if (!in) throw IoError("cannot read edit script '" + c.edits->string() + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(c.edits->string(), e.what());
    }
    v = apply_edits(std::move(v), edit_script_from_json(j));
  }
  if (c.brain_mask) v = build_material_map(v, read_mask(*c.brain_mask), c.rules);
  return v;
}

/// Runs every configured stage and writes mesh.vtk, mesh.mesh, mesh.k,
/// quality.json and (with an eeg section) potentials.csv into the output
/// directory. Returns a summary.
inline nlohmann::json run_pipeline(const PipelineConfig& c) {
  nlohmann::json summary;
  const LabelVolume volume = pipeline_volume(c);
  summary["volume"] = {{"dims", volume.geometry.dims}, {"spacing_mm", {volume.geometry.spacing.x, volume.geometry.spacing.y, volume.geometry.spacing.z}},
                       {"labels", volume.nonzero_labels()}};

  MeshParams params = c.mesh;
  if (!c.surface_names.empty()) {
    const auto available = material_interface_surfaces(volume);
    for (const auto& name : c.surface_names) {
      auto it = std::find_if(available.begin(), available.end(), [&](const SurfaceSpec& s) { return s.node_set == name; });
      if (it == available.end()) throw ValidationError("surface '" + name + "' does not exist in this volume");
      params.surfaces.push_back(*it);
    }
  }
  SmoothingStats stats;
  HexMesh mesh = generate_mesh(volume, params, &stats);
  if (c.labeling) {
    const LabelVolume atlas = c.label_atlas ? read_volume(*c.label_atlas) : volume;
    const auto locator = build_locator(atlas);
    mesh = transfer_labels(std::move(mesh), atlas, locator, c.label_field);
  }
  const auto report = quality_report(mesh);
  summary["mesh"] = {{"elements", mesh.element_count()},
                     {"nodes", mesh.node_count()},
                     {"voxel_to_element_ratio", mesh.provenance.voxel_to_element_ratio},
                     {"projected", mesh.provenance.projected_counts},
                     {"smoothing", {{"moves_accepted", stats.moves_accepted}, {"min_sj_before", stats.min_sj_before}, {"min_sj_after", stats.min_sj_after}}}};
  summary["quality"] = to_json(report);

  const MaterialTable table = c.materials_table ? load_material_table(*c.materials_table) : default_material_table();
  ExportBundle bundle{mesh, {}, {}, {}};

  std::filesystem::create_directories(c.output_dir);
  std::vector<std::string> written;
  if (c.eeg) {
    const auto system = assemble_system(mesh, table);
    const auto load = dipole_load(mesh, c.eeg->dipole);
    const auto electrodes = project_electrodes(mesh, read_electrode_csv(c.eeg->electrodes));
    NodeId reference = 0;
    if (c.eeg->reference == "auto") {
      reference = choose_reference(mesh, electrodes, c.eeg->dipole);
    } else {
      auto it = std::find_if(electrodes.begin(), electrodes.end(), [&](const Electrode& e) { return e.name == c.eeg->reference; });
      if (it == electrodes.end()) throw ValidationError("reference electrode '" + c.eeg->reference + "' is not in the electrode file");
      reference = it->node;
    }
    const auto field = solve(system, load.rhs, reference, c.eeg->tolerance);
    const auto readings = electrode_potentials(field, electrodes);
    write_potentials_csv(readings, c.output_dir / "potentials.csv");
    written.push_back("potentials.csv");
    std::vector<double> uv(field.values.size());
    std::transform(field.values.begin(), field.values.end(), uv.begin(), [](double v) { return v * 1e6; });

    nlohmann::json regions = nlohmann::json::array();
    const auto labels = mesh.material_label;
    const std::set<Label> ids(labels.begin(), labels.end());
    for (const auto& s : region_stats(mesh, uv, {ids.begin(), ids.end()}, "material", nullptr, FieldLocation::node)) regions.push_back(to_json(s));
    summary["eeg"] = {{"reference_node", reference},
                      {"iterations", field.iterations},
                      {"relative_residual", field.relative_residual},
                      {"electrodes", electrodes.size()},
                      {"dipole_element", load.location.element},
                      {"potential_uV_by_material", regions}};
    bundle.nodal["potential_uV"] = std::move(uv);
  }

  for (const auto& f : c.formats) {
    if (f == "vtk") {
      export_vtk(bundle, c.output_dir / "mesh.vtk");
      written.push_back("mesh.vtk");
    } else if (f == "mfem") {
      export_mfem(bundle, c.output_dir / "mesh.mesh");
      written.push_back("mesh.mesh");
    } else {
      export_lsdyna(bundle, c.output_dir / "mesh.k", &table);
      written.push_back("mesh.k");
    }
  }
  detail::write_file(c.output_dir / "quality.json", to_json(report).dump(2) + "\n");
  written.push_back("quality.json");
  std::sort(written.begin(), written.end());
  summary["outputs"] = written;
  summary["output_dir"] = c.output_dir.string();
  return summary;
}

}  // namespace atlasmesh
