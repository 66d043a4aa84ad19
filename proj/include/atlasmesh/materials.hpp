#pragma once

// One-term Ogden hyperviscoelastic material-point model and per-material
// parameter tables bound to mesh labels.

#include <atlasmesh/hexmesh.hpp>

#include <nlohmann/json.hpp>

namespace atlasmesh {

struct OgdenParams {
  double G0{0.0};     // Pa, instantaneous shear modulus
  double Gi{0.0};     // Pa, relaxed shear modulus
  double alpha{0.0};  // dimensionless
  double tau{0.0};    // s
  double K{2.19e9};   // Pa, bulk modulus

  void validate() const {
    if (!(Gi > 0.0) || !(G0 >= Gi)) throw ValidationError("Ogden moduli must satisfy G0 >= Gi > 0");
    if (!(tau > 0.0)) throw ValidationError("Ogden tau must be > 0");
    if (!(K > 0.0)) throw ValidationError("Ogden bulk modulus must be > 0");
    if (alpha == 0.0 || !std::isfinite(alpha)) throw ValidationError("Ogden alpha must be finite and nonzero");
  }
};

struct StretchState {
  std::array<double, 3> lambda{1.0, 1.0, 1.0};

  double J() const { return lambda[0] * lambda[1] * lambda[2]; }
  void validate() const {
    for (double l : lambda)
      if (!(l > 0.0) || !std::isfinite(l)) throw ArgumentError("principal stretches must be finite and > 0");
  }
};

using PrincipalStress = std::array<double, 3>;

/// G(t) = Gi + (G0 - Gi) exp(-t / tau).
inline double relaxation_modulus(const OgdenParams& p, double t) {
  if (!(t >= 0.0)) throw ArgumentError("relaxation time must be >= 0");
  return p.Gi + (p.G0 - p.Gi) * std::exp(-t / p.tau);
}

struct EnergyParts {
  double deviatoric{0.0};
  double volumetric{0.0};
  double total() const { return deviatoric + volumetric; }
};

/// Elastic-limit energy density split into its stretch-power and bulk terms:
/// (2 G0 / alpha^2)(sum lambda^alpha - 3) and K (J - 1 - ln J).
inline EnergyParts ogden_energy_parts(const OgdenParams& p, const StretchState& s) {
  s.validate();
  const double a = p.alpha;
  const double sum = std::pow(s.lambda[0], a) + std::pow(s.lambda[1], a) + std::pow(s.lambda[2], a) - 3.0;
  const double J = s.J();
  return {2.0 * p.G0 / (a * a) * sum, p.K * (J - 1.0 - std::log(J))};
}

inline double ogden_energy_instantaneous(const OgdenParams& p, const StretchState& s) {
  return ogden_energy_parts(p, s).total();
}

/// Principal Cauchy stress of the elastic limit, zero at the reference state:
/// (2 G0 / (alpha J)) (lambda_i^alpha - 1) + K (1 - 1/J).
inline PrincipalStress ogden_stress_instantaneous(const OgdenParams& p, const StretchState& s) {
  s.validate();
  const double J = s.J();
  PrincipalStress out{};
  for (int i = 0; i < 3; ++i)
    out[i] = 2.0 * p.G0 / (p.alpha * J) * (std::pow(s.lambda[i], p.alpha) - 1.0) + p.K * (1.0 - 1.0 / J);
  return out;
}

/// Principal Cauchy stresses along a uniformly sampled stretch history that
/// starts at the reference state. The hereditary integral over G(t - s) d(lambda^alpha)/ds
/// is advanced with the exact update for a piecewise-linear stimulus:
/// h <- e^{-dt/tau} h + (q_n - q_{n-1}) (tau/dt)(1 - e^{-dt/tau}).
inline std::vector<PrincipalStress> ogden_stress_history(const OgdenParams& p, const std::vector<StretchState>& history, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ArgumentError("time step must be finite and > 0");
  if (history.empty()) return {};
  for (const auto& s : history) s.validate();
  for (double l : history.front().lambda)
    if (std::abs(l - 1.0) > 1e-12) throw ArgumentError("stretch history must start at the reference state");

  const double decay = std::exp(-dt / p.tau);
  const double gain = p.tau / dt * -std::expm1(-dt / p.tau);
  std::array<double, 3> h{}, q_prev{1.0, 1.0, 1.0};
  std::vector<PrincipalStress> out;
  out.reserve(history.size());
  for (const auto& s : history) {
    const double J = s.J();
    PrincipalStress sigma{};
    for (int i = 0; i < 3; ++i) {
      const double q = std::pow(s.lambda[i], p.alpha);
      h[i] = decay * h[i] + (q - q_prev[i]) * gain;
      q_prev[i] = q;
      sigma[i] = 2.0 / (p.alpha * J) * (p.Gi * (q - 1.0) + (p.G0 - p.Gi) * h[i]) + p.K * (1.0 - 1.0 / J);
    }
    out.push_back(sigma);
  }
  return out;
}

/// Time-stamped variant; the samples must be uniformly spaced.
inline std::vector<PrincipalStress> ogden_stress_history(const OgdenParams& p, const std::vector<double>& times,
                                                         const std::vector<StretchState>& history) {
  if (times.size() != history.size()) throw ArgumentError("time and stretch series differ in length");
  if (times.size() < 2) return ogden_stress_history(p, history, 1.0);
  const double dt = times[1] - times[0];
  if (!(dt > 0.0)) throw ArgumentError("time step must be > 0");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (std::abs((times[i] - times[i - 1]) - dt) > 1e-9 * dt) throw ArgumentError("time samples are not uniformly spaced");
  return ogden_stress_history(p, history, dt);
}

// ---------------------------------------------------------------------------
// Material tables

struct ElasticParams {
  double density{0.0};          // kg/m^3
  double youngs_modulus{0.0};   // Pa
  double poisson_ratio{0.0};
  std::optional<double> thickness_mm;
};

struct MaterialRecord {
  std::string name;
  std::optional<OgdenParams> ogden;
  std::optional<ElasticParams> elastic;
  std::optional<double> conductivity;  // S/m
};

using MaterialTable = std::map<Label, MaterialRecord>;

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where, "expected an object");
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) throw FormatError(where, "unknown key '" + key + "'");
}

inline double number_at(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + "." + key, "missing");
  if (!j.at(key).is_number()) throw FormatError(where + "." + key, "expected a number");
  return j.at(key).get<double>();
}

}  // namespace detail

/// Parses {"materials": [{"id", "name", "conductivity_s_per_m"?, "ogden"?, "elastic"?}]}.
inline MaterialTable material_table_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"materials"}, "material table");
  if (!j.contains("materials") || !j.at("materials").is_array()) throw FormatError("materials", "expected an array");
  MaterialTable table;
  for (const auto& m : j.at("materials")) {
    detail::reject_unknown_keys(m, {"id", "name", "conductivity_s_per_m", "ogden", "elastic"}, "materials[]");
    if (!m.contains("id") || !m.at("id").is_number_integer()) throw FormatError("materials[].id", "expected an integer");
    const auto id = m.at("id").get<Label>();
    const std::string where = "materials[id=" + std::to_string(id) + "]";
    if (id <= 0) throw ValidationError(where + ": id must be positive");
    MaterialRecord r;
    r.name = m.value("name", default_label_name(id));
    if (m.contains("conductivity_s_per_m")) {
      r.conductivity = detail::number_at(m, "conductivity_s_per_m", where);
      if (!(*r.conductivity > 0.0)) throw ValidationError(where + ": conductivity must be > 0");
    }
    if (m.contains("ogden")) {
      const auto& o = m.at("ogden");
      detail::reject_unknown_keys(o, {"g0_pa", "gi_pa", "alpha", "tau_s", "k_pa"}, where + ".ogden");
      OgdenParams p;
      p.G0 = detail::number_at(o, "g0_pa", where + ".ogden");
      p.Gi = detail::number_at(o, "gi_pa", where + ".ogden");
      p.alpha = detail::number_at(o, "alpha", where + ".ogden");
      p.tau = detail::number_at(o, "tau_s", where + ".ogden");
      if (o.contains("k_pa")) p.K = detail::number_at(o, "k_pa", where + ".ogden");
      p.validate();
      r.ogden = p;
    }
    if (m.contains("elastic")) {
      const auto& e = m.at("elastic");
      detail::reject_unknown_keys(e, {"density_kg_m3", "youngs_modulus_pa", "poisson_ratio", "thickness_mm"}, where + ".elastic");
      ElasticParams p;
      p.density = detail::number_at(e, "density_kg_m3", where + ".elastic");
      p.youngs_modulus = detail::number_at(e, "youngs_modulus_pa", where + ".elastic");
      p.poisson_ratio = detail::number_at(e, "poisson_ratio", where + ".elastic");
      if (e.contains("thickness_mm")) p.thickness_mm = detail::number_at(e, "thickness_mm", where + ".elastic");
      if (!(p.density > 0.0) || !(p.youngs_modulus > 0.0) || !(p.poisson_ratio > -1.0 && p.poisson_ratio < 0.5))
        throw ValidationError(where + ": elastic parameters out of range");
      r.elastic = p;
    }
    if (!table.emplace(id, std::move(r)).second) throw ValidationError("material id " + std::to_string(id) + " listed twice");
  }
  return table;
}

inline nlohmann::json to_json(const MaterialTable& table) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [id, r] : table) {
    nlohmann::json m = {{"id", id}, {"name", r.name}};
    if (r.conductivity) m["conductivity_s_per_m"] = *r.conductivity;
    if (r.ogden)
      m["ogden"] = {{"g0_pa", r.ogden->G0}, {"gi_pa", r.ogden->Gi}, {"alpha", r.ogden->alpha}, {"tau_s", r.ogden->tau}, {"k_pa", r.ogden->K}};
    if (r.elastic) {
      m["elastic"] = {{"density_kg_m3", r.elastic->density},
                      {"youngs_modulus_pa", r.elastic->youngs_modulus},
                      {"poisson_ratio", r.elastic->poisson_ratio}};
      if (r.elastic->thickness_mm) m["elastic"]["thickness_mm"] = *r.elastic->thickness_mm;
    }
    list.push_back(m);
  }
  return {{"materials", list}};
}

/// Reads a material table; `//` and `/* */` comments are allowed.
inline MaterialTable load_material_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read material table '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string(), e.what());
  }
  return material_table_from_json(j);
}

/// Built-in defaults; identical to data/materials.json.
inline MaterialTable default_material_table() {
  MaterialTable t;
  const OgdenParams gm{850.0, 425.0, -4.7, 0.06, 2.19e9};
  const OgdenParams wm{1100.0, 550.0, -4.7, 0.06, 2.19e9};
  t[material::scalp] = {"scalp", std::nullopt, std::nullopt, 0.33};
  t[material::skull] = {"skull", std::nullopt, std::nullopt, 0.012};
  t[material::csf] = {"csf", std::nullopt, ElasticParams{1000.0, 160.0, 0.49, std::nullopt}, 1.79};
  t[material::grey_matter] = {"grey_matter", gm, std::nullopt, 0.33};
  t[material::white_matter] = {"white_matter", wm, std::nullopt, 0.33};
  t[material::ventricle] = {"ventricle", std::nullopt, std::nullopt, 1.79};
  t[7] = {"pia", std::nullopt, ElasticParams{1000.0, 1.1e6, 0.40, 0.40}, std::nullopt};
  t[8] = {"arachnoid", std::nullopt, ElasticParams{1000.0, 1.1e6, 0.40, 0.40}, std::nullopt};
  t[9] = {"dura", std::nullopt, ElasticParams{1133.0, 7.0e7, 0.45, 1.0}, std::nullopt};
  return t;
}

/// One table record per element, by material label.
inline std::vector<const MaterialRecord*> bind_materials(const HexMesh& mesh, const MaterialTable& table) {
  std::vector<const MaterialRecord*> out(mesh.element_count(), nullptr);
  std::set<Label> missing;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    auto it = table.find(mesh.material_label[e]);
    if (it == table.end())
      missing.insert(mesh.material_label[e]);
    else
      out[e] = &it->second;
  }
  if (!missing.empty()) {
    std::string list;
    for (Label l : missing) list += (list.empty() ? "" : ", ") + std::to_string(l);
    throw BindingError({missing.begin(), missing.end()}, "material table has no entry for material id(s) " + list);
  }
  return out;
}

}  // namespace atlasmesh
