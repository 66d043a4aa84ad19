// atlasmesh command-line driver. Exit codes: 0 success, 1 invalid input,
// 2 runtime failure.

#include <atlasmesh/atlasmesh.hpp>

#include <CLI11.hpp>

#include <functional>
#include <iostream>

using namespace atlasmesh;
using json = nlohmann::json;

namespace {

Vec3 to_vec3(const std::vector<double>& v, const std::string& what) {
  if (v.size() != 3) throw ArgumentError(what + " needs exactly 3 comma-separated values");
  return {v[0], v[1], v[2]};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string(), e.what());
  }
}

MaterialTable table_or_default(const std::string& path) { return path.empty() ? default_material_table() : load_material_table(path); }

void print_text(const json& j, const std::string& indent = "") {
  for (const auto& [key, value] : j.items()) {
    if (value.is_object()) {
      std::cout << indent << key << ":\n";
      print_text(value, indent + "  ");
    } else {
      std::cout << indent << key << ": " << value.dump() << '\n';
    }
  }
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const BindingError*>(&e)) return "binding";
  if (dynamic_cast<const LocationError*>(&e)) return "location";
  if (dynamic_cast<const InputError*>(&e)) return "validation";
  if (dynamic_cast<const GenerationError*>(&e)) return "generation";
  if (dynamic_cast<const AssemblyError*>(&e)) return "assembly";
  if (dynamic_cast<const SolverError*>(&e)) return "solver";
  if (dynamic_cast<const TopologyError*>(&e)) return "topology";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  return "runtime";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Labeled voxel volumes to conforming hexahedral meshes, with quality audits and EEG/Ogden kernels"};
  app.require_subcommand(1);
  bool as_json = false;
  std::string command;
  std::function<json()> action;

  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_flag("--json", as_json, "Print a machine-readable JSON summary on stdout");
    return sub;
  };

  // edit
  std::string in_path, out_path, aux_path, aux2_path;
  {
    auto* s = add("edit", "Apply a merge/remove/group edit script to a label volume");
    s->add_option("-i,--input", in_path, "Input NRRD volume")->required();
    s->add_option("-s,--script", aux_path, "Edit script (JSON array of steps)")->required();
    s->add_option("-o,--output", out_path, "Output NRRD volume")->required();
    s->callback([&] {
      command = "edit";
      action = [&] {
        auto v = read_volume(in_path);
        const auto before = v.labels.size();
        v = apply_edits(std::move(v), edit_script_from_json(read_json_file(aux_path)));
        write_volume(v, out_path);
        return json{{"output", out_path}, {"voxels", before}, {"labels", v.nonzero_labels()}, {"label_table_entries", v.label_table.size()}};
      };
    });
  }

  // material-map
  double thickness = 4.0;
  {
    auto* s = add("material-map", "Build the six-material label map from an atlas and a brain mask");
    s->add_option("-a,--atlas", in_path, "Atlas NRRD volume")->required();
    s->add_option("-m,--mask", aux_path, "Brain mask NRRD (nonzero = brain)")->required();
    s->add_option("-r,--rules", aux2_path, "Rules JSON {\"grey_matter\":[ids],\"white_matter\":[ids],\"ventricle\":[ids]}");
    s->add_option("-t,--thickness", thickness, "Skull and scalp shell thickness in mm")->capture_default_str();
    s->add_option("-o,--output", out_path, "Output NRRD volume")->required();
    s->callback([&] {
      command = "material-map";
      action = [&] {
        MaterialRules rules;
        rules.shell_thickness_mm = thickness;
        if (!aux2_path.empty()) {
          const auto j = read_json_file(aux2_path);
          detail::reject_unknown_keys(j, {"grey_matter", "white_matter", "ventricle"}, "rules");
          const std::array<std::pair<const char*, Label>, 3> kinds = {
              {{"grey_matter", material::grey_matter}, {"white_matter", material::white_matter}, {"ventricle", material::ventricle}}};
          for (const auto& [key, mat] : kinds)
            if (j.contains(key))
              for (Label id : detail::ids_at(j, key, "rules")) rules.atlas_to_material[id] = mat;
        }
        const auto out = build_material_map(read_volume(in_path), read_mask(aux_path), rules);
        write_volume(out, out_path);
        std::map<std::string, std::size_t> counts;
        const auto names = material::table();
        for (Label l : out.labels)
          if (l != 0) ++counts[names.at(l).name];
        return json{{"output", out_path}, {"voxels_per_material", counts}};
      };
    });
  }

  // surface
  std::vector<Label> label_ids;
  {
    auto* s = add("surface", "Extract a marching-cubes surface from a label volume");
    s->add_option("-i,--input", in_path, "Input NRRD volume")->required();
    s->add_option("-l,--labels", label_ids, "Labels forming the mask (default: all nonzero)")->delimiter(',');
    s->add_option("-o,--output", out_path, "Output surface (.stl or .obj)");
    s->callback([&] {
      command = "surface";
      action = [&] {
        const auto v = read_volume(in_path);
        const auto mask = label_ids.empty() ? nonzero_mask(v) : mask_of(v, {label_ids.begin(), label_ids.end()});
        const auto surf = extract_surface(mask);
        if (!out_path.empty()) {
          const auto ext = std::filesystem::path(out_path).extension();
          if (ext == ".stl")
            write_stl(surf, out_path);
          else if (ext == ".obj")
            write_obj(surf, out_path);
          else
            throw ArgumentError("surface output must end in .stl or .obj");
        }
        json r = to_json(surface_report(surf));
        r["warnings"] = surf.warnings;
        if (!out_path.empty()) r["output"] = out_path;
        return r;
      };
    });
  }

  // mesh
  MeshParams mesh_params;
  std::vector<std::string> surface_names;
  {
    auto* s = add("mesh", "Generate a conforming hexahedral mesh from a material label map");
    s->add_option("-i,--input", in_path, "Material NRRD volume")->required();
    s->add_option("--spacing", mesh_params.spacing, "Element size in mm (integer multiple of the voxel size)")->required();
    s->add_option("--surfaces", surface_names, "Interfaces to conform: outer_scalp,scalp_skull,skull_csf")->delimiter(',');
    s->add_option("--band", mesh_params.projection_band, "Projection band in cells")->capture_default_str();
    s->add_flag("!--no-pillow", mesh_params.pillow, "Skip pillow layers");
    s->add_option("--iterations", mesh_params.smoothing_iterations, "Smoothing iterations")->capture_default_str();
    s->add_option("--min-sj", mesh_params.min_accept_sj, "Smoothing acceptance threshold")->capture_default_str();
    s->add_option("-o,--output", out_path, "Output VTK mesh")->required();
    s->callback([&] {
      command = "mesh";
      action = [&] {
        const auto v = read_volume(in_path);
        MeshParams p = mesh_params;
        const auto available = material_interface_surfaces(v);
        for (const auto& name : surface_names) {
          auto it = std::find_if(available.begin(), available.end(), [&](const SurfaceSpec& sp) { return sp.node_set == name; });
          if (it == available.end()) throw ArgumentError("surface '" + name + "' is not available (outer_scalp, scalp_skull, skull_csf)");
          p.surfaces.push_back(*it);
        }
        SmoothingStats stats;
        const auto mesh = generate_mesh(v, p, &stats);
        export_vtk(ExportBundle{mesh, {}, {}, {}}, out_path);
        const auto q = quality_report(mesh);
        return json{{"output", out_path},
                    {"elements", mesh.element_count()},
                    {"nodes", mesh.node_count()},
                    {"voxel_to_element_ratio", mesh.provenance.voxel_to_element_ratio},
                    {"projected", mesh.provenance.projected_counts},
                    {"notes", mesh.provenance.notes},
                    {"min_scaled_jacobian", q.scaled_jacobian.min},
                    {"percent_sj_above_0_5", q.percent_sj_above_half},
                    {"percent_ar_below_3", q.percent_ar_below_3},
                    {"percent_skew_below_0_5", q.percent_skew_below_half}};
      };
    });
  }

  // quality
  std::string csv_path;
  {
    auto* s = add("quality", "Report scaled Jacobian, aspect ratio and skew of a VTK mesh");
    s->add_option("-i,--input", in_path, "Input VTK mesh")->required();
    s->add_option("--csv", csv_path, "Write per-element metrics as CSV");
    s->add_option("-o,--output", out_path, "Write the report as JSON");
    s->callback([&] {
      command = "quality";
      action = [&] {
        const auto b = import_vtk(in_path);
        const auto q = element_qualities(b.mesh);
        const auto report = to_json(quality_report(q));
        if (!csv_path.empty()) write_quality_csv(q, csv_path);
        if (!out_path.empty()) detail::write_file(out_path, report.dump(2) + "\n");
        return report;
      };
    });
  }

  // label
  std::string label_field = "anatomical", stats_field;
  {
    auto* s = add("label", "Transfer atlas labels onto mesh elements and optionally report region statistics");
    s->add_option("-m,--mesh", in_path, "Input VTK mesh")->required();
    s->add_option("-a,--atlas", aux_path, "Atlas NRRD volume")->required();
    s->add_option("--field", label_field, "Label field to fill: anatomical or material")->capture_default_str();
    s->add_option("--stats-field", stats_field, "Element or nodal array of the mesh to summarize per label");
    s->add_option("--stats-labels", label_ids, "Label ids for the statistics")->delimiter(',');
    s->add_option("-o,--output", out_path, "Output VTK mesh")->required();
    s->callback([&] {
      command = "label";
      action = [&] {
        auto b = import_vtk(in_path);
        const auto atlas = read_volume(aux_path);
        const auto locator = build_locator(atlas);
        b.mesh = transfer_labels(std::move(b.mesh), atlas, locator, label_field);
        export_vtk(b, out_path);
        json r{{"output", out_path}, {"elements", b.mesh.element_count()}, {"octants", locator.octants().size()}, {"leaves", locator.leaf_count()}};
        if (!stats_field.empty()) {
          std::vector<double> values;
          FieldLocation where = FieldLocation::element;
          if (stats_field == vtk_material_array || stats_field == vtk_anatomical_array) {
            const auto& l = stats_field == vtk_material_array ? b.mesh.material_label : b.mesh.anatomical_label;
            values.assign(l.begin(), l.end());
          } else if (auto it = b.element_reals.find(stats_field); it != b.element_reals.end()) {
            values = it->second;
          } else if (auto it2 = b.element_ints.find(stats_field); it2 != b.element_ints.end()) {
            values.assign(it2->second.begin(), it2->second.end());
          } else if (auto it3 = b.nodal.find(stats_field); it3 != b.nodal.end()) {
            values = it3->second;
            where = FieldLocation::node;
          } else {
            throw ArgumentError("mesh has no array named '" + stats_field + "'");
          }
          std::vector<Label> ids = label_ids;
          if (ids.empty()) {
            const auto& l = label_field == "anatomical" ? b.mesh.anatomical_label : b.mesh.material_label;
            const std::set<Label> all(l.begin(), l.end());
            ids.assign(all.begin(), all.end());
          }
          json stats = json::array();
          for (const auto& st : region_stats(b.mesh, values, ids, label_field, &atlas.label_table, where)) stats.push_back(to_json(st));
          r["region_stats"] = stats;
        }
        return r;
      };
    });
  }

  // ogden-test
  std::string material_name = "white_matter";
  double stretch = 1.1, hold = 0.6, dt = 1e-4;
  {
    auto* s = add("ogden-test", "Run a step-stretch relaxation test of the Ogden model");
    s->add_option("--material", material_name, "Material name with Ogden parameters in the table")->capture_default_str();
    s->add_option("--materials", aux_path, "Material table JSON (default: built-in)");
    s->add_option("--stretch", stretch, "Axial stretch of the isochoric uniaxial step")->capture_default_str();
    s->add_option("--hold", hold, "Hold duration in s")->capture_default_str();
    s->add_option("--dt", dt, "Time step in s")->capture_default_str();
    s->add_option("-o,--output", out_path, "Write t,sigma1,sigma2,sigma3 CSV");
    s->callback([&] {
      command = "ogden-test";
      action = [&] {
        const auto table = table_or_default(aux_path);
        const MaterialRecord* rec = nullptr;
        for (const auto& [id, r] : table)
          if (r.name == material_name) rec = &r;
        if (!rec || !rec->ogden) throw ArgumentError("material '" + material_name + "' has no Ogden parameters in the table");
        if (!(stretch > 0.0) || !(hold > 0.0) || !(dt > 0.0)) throw ArgumentError("stretch, hold and dt must be > 0");
        const auto steps = static_cast<std::size_t>(std::llround(hold / dt));
        std::vector<StretchState> history{StretchState{}};
        const double lateral = 1.0 / std::sqrt(stretch);
        for (std::size_t i = 0; i < steps; ++i) history.push_back(StretchState{{stretch, lateral, lateral}});
        const auto sigma = ogden_stress_history(*rec->ogden, history, dt);
        if (!out_path.empty()) {
          std::string text = "t_s,sigma1_pa,sigma2_pa,sigma3_pa\n";
          for (std::size_t i = 0; i < sigma.size(); ++i)
            text += format_double(static_cast<double>(i) * dt) + ',' + format_double(sigma[i][0]) + ',' + format_double(sigma[i][1]) + ',' +
                    format_double(sigma[i][2]) + '\n';
          detail::write_file(out_path, text);
        }
        const double first = sigma[1][0] - sigma[1][1];
        const double last = sigma.back()[0] - sigma.back()[1];
        const auto& p = *rec->ogden;
        return json{{"material", material_name},
                    {"g0_pa", p.G0},
                    {"gi_pa", p.Gi},
                    {"tau_s", p.tau},
                    {"steps", steps},
                    {"deviatoric_stress_initial_pa", first},
                    {"deviatoric_stress_final_pa", last},
                    {"relaxation_ratio", last / first},
                    {"expected_ratio", p.Gi / p.G0}};
      };
    });
  }

  // solve-eeg
  std::vector<double> dipole_pos, dipole_moment;
  std::string reference = "auto", electrodes_path;
  double tolerance = 1e-9;
  {
    auto* s = add("solve-eeg", "Solve the EEG forward problem for one dipole and read scalp electrodes");
    s->add_option("-m,--mesh", in_path, "Input VTK mesh")->required();
    s->add_option("--materials", aux_path, "Material table JSON (default: built-in)");
    s->add_option("--dipole", dipole_pos, "Dipole position x,y,z in mm")->delimiter(',')->required();
    s->add_option("--moment", dipole_moment, "Dipole moment px,py,pz in A*mm")->delimiter(',')->required();
    s->add_option("-e,--electrodes", electrodes_path, "Electrode CSV name,x_mm,y_mm,z_mm")->required();
    s->add_option("--reference", reference, "Reference electrode name, or auto")->capture_default_str();
    s->add_option("--tol", tolerance, "Relative residual tolerance")->capture_default_str();
    s->add_option("-o,--output", out_path, "Potentials CSV (name,raw_uV,avg_ref_uV)")->required();
    s->add_option("--vtk", aux2_path, "Also write the mesh with point data potential_uV");
    s->callback([&] {
      command = "solve-eeg";
      action = [&] {
        auto b = import_vtk(in_path);
        const Dipole d{to_vec3(dipole_pos, "--dipole"), to_vec3(dipole_moment, "--moment")};
        if (norm(d.moment) == 0.0) throw ArgumentError("dipole moment must be nonzero");
        const auto system = assemble_system(b.mesh, table_or_default(aux_path));
        const auto load = dipole_load(b.mesh, d);
        const auto electrodes = project_electrodes(b.mesh, read_electrode_csv(electrodes_path));
        NodeId ref = 0;
        if (reference == "auto") {
          ref = choose_reference(b.mesh, electrodes, d);
        } else {
          auto it = std::find_if(electrodes.begin(), electrodes.end(), [&](const Electrode& e) { return e.name == reference; });
          if (it == electrodes.end()) throw ArgumentError("reference electrode '" + reference + "' is not in the electrode file");
          ref = it->node;
        }
        const auto field = solve(system, load.rhs, ref, tolerance);
        const auto readings = electrode_potentials(field, electrodes);
        write_potentials_csv(readings, out_path);
        if (!aux2_path.empty()) {
          std::vector<double> uv(field.values.size());
          std::transform(field.values.begin(), field.values.end(), uv.begin(), [](double v) { return v * 1e6; });
          b.nodal["potential_uV"] = std::move(uv);
          export_vtk(b, aux2_path);
        }
        double max_snap = 0.0;
        for (const auto& e : electrodes) max_snap = std::max(max_snap, e.snap_distance);
        json r{{"output", out_path},
               {"reference_node", ref},
               {"iterations", field.iterations},
               {"relative_residual", field.relative_residual},
               {"dipole_element", load.location.element},
               {"electrodes", electrodes.size()},
               {"max_snap_distance_mm", max_snap}};
        if (load.location.on_face) r["warning"] = "dipole lies on an element face; assigned to the lower-index element";
        return r;
      };
    });
  }

  // export
  std::string format;
  {
    auto* s = add("export", "Convert a VTK mesh to VTK, MFEM or LS-DYNA keyword format");
    s->add_option("-i,--input", in_path, "Input VTK mesh")->required();
    s->add_option("-f,--format", format, "vtk, mfem or lsdyna")->required()->check(CLI::IsMember({"vtk", "mfem", "lsdyna"}));
    s->add_option("--materials", aux_path, "Material table JSON for LS-DYNA part names and elastic cards");
    s->add_option("-o,--output", out_path, "Output file")->required();
    s->callback([&] {
      command = "export";
      action = [&] {
        const auto b = import_vtk(in_path);
        if (format == "vtk") {
          export_vtk(b, out_path);
        } else if (format == "mfem") {
          export_mfem(b, out_path);
        } else {
          const auto table = aux_path.empty() ? std::optional<MaterialTable>{} : std::optional<MaterialTable>{load_material_table(aux_path)};
          export_lsdyna(b, out_path, table ? &*table : nullptr);
        }
        return json{{"output", out_path}, {"format", format}, {"elements", b.mesh.element_count()}, {"nodes", b.mesh.node_count()}};
      };
    });
  }

  // phantom
  std::vector<double> radii;
  double spacing = 1.0;
  {
    auto* s = add("phantom", "Write a concentric-shell phantom volume (label 1 outermost)");
    s->add_option("--radii", radii, "Shell radii in mm, outermost first")->delimiter(',')->required();
    s->add_option("--spacing", spacing, "Voxel size in mm")->capture_default_str();
    s->add_option("-o,--output", out_path, "Output NRRD volume")->required();
    s->callback([&] {
      command = "phantom";
      action = [&] {
        const auto v = shell_phantom(radii, spacing);
        write_volume(v, out_path);
        std::map<std::string, std::size_t> counts;
        for (Label l : v.labels) ++counts[std::to_string(l)];
        return json{{"output", out_path}, {"dims", v.geometry.dims}, {"voxels_per_label", counts}};
      };
    });
  }

  // pipeline
  {
    auto* s = add("pipeline", "Run every stage from a JSON config");
    s->add_option("-c,--config", in_path, "Pipeline config")->required();
    s->add_option("-o,--output-dir", out_path, "Override export.output_dir");
    s->callback([&] {
      command = "pipeline";
      action = [&] {
        auto c = load_pipeline_config(in_path);
        if (!out_path.empty()) c.output_dir = out_path;
        return run_pipeline(c);
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const json result = action();
    if (as_json)
      std::cout << json{{"command", command}, {"status", "ok"}, {"result", result}}.dump(2) << '\n';
    else
      print_text(result);
    return 0;
  } catch (const std::exception& e) {
    const bool input = dynamic_cast<const InputError*>(&e) != nullptr || dynamic_cast<const CLI::Error*>(&e) != nullptr;
    std::cerr << "atlasmesh " << command << ": " << e.what() << '\n';
    if (as_json)
      std::cout << json{{"command", command}, {"status", "error"}, {"error", {{"kind", error_kind(e)}, {"message", e.what()}, {"exit_code", input ? 1 : 2}}}}.dump(2)
                << '\n';
    return input ? 1 : 2;
  }
}
