#include <support/fixtures.hpp>

#include <gtest/gtest.h>

using namespace atlasmesh;

namespace {

const OgdenParams grey{850.0, 425.0, -4.7, 0.06, 2.19e9};
const OgdenParams white{1100.0, 550.0, -4.7, 0.06, 2.19e9};

StretchState isochoric_uniaxial(double l) { return {{l, 1.0 / std::sqrt(l), 1.0 / std::sqrt(l)}}; }

// Step to `s` at the first sample after the reference state, held for `steps` samples.
std::vector<StretchState> step_history(const StretchState& s, std::size_t steps) {
  std::vector<StretchState> h(steps + 1, s);
  h[0] = StretchState{};
  return h;
}

double deviatoric_difference(const PrincipalStress& s) { return s[0] - s[1]; }

}  // namespace

TEST(RelaxationModulus, KnownValues) {
  EXPECT_DOUBLE_EQ(relaxation_modulus(white, 0.0), 1100.0);
  EXPECT_NEAR(relaxation_modulus(white, 0.06), 550.0 + 550.0 * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(relaxation_modulus(white, 0.06), 752.3, 0.05);
  EXPECT_NEAR(relaxation_modulus(white, 100 * 0.06), 550.0, 1e-6);
  EXPECT_NEAR(relaxation_modulus(white, 50 * 0.06) / 550.0, 1.0, 1e-10);
  EXPECT_THROW(relaxation_modulus(white, -1e-3), ArgumentError);
}

TEST(RelaxationModulus, MonotoneNonincreasing) {
  for (const auto& p : {grey, white}) {
    double prev = relaxation_modulus(p, 0.0);
    for (int i = 1; i <= 500; ++i) {
      const double g = relaxation_modulus(p, i * 0.002);
      EXPECT_LE(g, prev);
      EXPECT_GE(g, p.Gi);
      prev = g;
    }
  }
}

TEST(OgdenEnergy, ReferenceIsZero) { EXPECT_EQ(ogden_energy_instantaneous(grey, StretchState{}), 0.0); }

TEST(OgdenEnergy, IsochoricShearValue) {
  const StretchState s{{1.1, 1.0 / 1.1, 1.0}};
  const auto parts = ogden_energy_parts(grey, s);
  EXPECT_NEAR(parts.volumetric, 0.0, 1e-6);
  const double expected = 2.0 * 850.0 / (4.7 * 4.7) * (std::pow(1.1, -4.7) + std::pow(1.1, 4.7) - 2.0);
  EXPECT_NEAR(parts.deviatoric, expected, 1e-9 * expected);
  EXPECT_GT(parts.deviatoric, 0.0);
}

TEST(OgdenEnergy, NonnegativeForRandomIsochoricStretches) {
  std::mt19937_64 rng(59);
  std::uniform_real_distribution<double> u(std::log(0.8), std::log(1.25));
  for (const auto& p : {grey, white})
    for (int n = 0; n < 1000; ++n) {
      const double a = std::exp(u(rng)), b = std::exp(u(rng));
      const StretchState s{{a, b, 1.0 / (a * b)}};
      const auto parts = ogden_energy_parts(p, s);
      EXPECT_GE(parts.deviatoric, 0.0);
      EXPECT_NEAR(parts.volumetric, 0.0, 1e-6);
    }
}

TEST(OgdenStress, MatchesEnergyDerivative) {
  // Principal Cauchy stress from W: lambda_i / J * dW/dlambda_i. The model stress
  // is shifted by a constant pressure so the reference state is stress free.
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.85, 1.2);
  OgdenParams p = grey;
  p.K = 5e3;  // comparable to G0 so the volumetric part is resolved by differences
  for (int n = 0; n < 200; ++n) {
    StretchState s{{u(rng), u(rng), u(rng)}};
    const double J = s.J();
    const auto sigma = ogden_stress_instantaneous(p, s);
    PrincipalStress fd{};
    for (int i = 0; i < 3; ++i) {
      const double h = 1e-6 * s.lambda[i];
      StretchState a = s, b = s;
      a.lambda[i] += h;
      b.lambda[i] -= h;
      const double dW = (ogden_energy_instantaneous(p, a) - ogden_energy_instantaneous(p, b)) / (2 * h);
      fd[i] = s.lambda[i] / J * dW;
    }
    const double shift = -2.0 * p.G0 / (p.alpha * J);
    for (int i = 0; i < 3; ++i) {
      const double expected = fd[i] + shift;
      EXPECT_NEAR(sigma[i], expected, 1e-5 * std::max(std::abs(fd[i]), std::abs(shift))) << n << " " << i;
    }
  }
}

TEST(OgdenStress, SmallStrainMatchesLinearElasticity) {
  const double eps = 1e-4;
  for (const auto& p : {grey, white}) {
    const auto s = ogden_stress_instantaneous(p, isochoric_uniaxial(1.0 + eps));
    // Linear isotropic: sigma_1 - sigma_2 = 2 G (eps_1 - eps_2) = 3 G eps.
    EXPECT_NEAR(deviatoric_difference(s) / (3.0 * p.G0 * eps), 1.0, 0.01);
  }
}

TEST(OgdenHistory, ReferenceHistoryIsStressFree) {
  const std::vector<StretchState> h(50);
  for (const auto& s : ogden_stress_history(grey, h, 1e-3))
    for (double v : s) EXPECT_EQ(v, 0.0);
}

TEST(OgdenHistory, StepRelaxesToHalf) {
  for (const auto& p : {grey, white}) {
    const double dt = 1e-4;
    const auto out = ogden_stress_history(p, step_history(isochoric_uniaxial(1.1), 60000), dt);
    const double ratio = deviatoric_difference(out.back()) / deviatoric_difference(out[1]);
    EXPECT_NEAR(ratio, p.Gi / p.G0, 2e-3);
    const double relaxed = deviatoric_difference(ogden_stress_instantaneous({p.Gi, p.Gi, p.alpha, p.tau, p.K}, isochoric_uniaxial(1.1)));
    EXPECT_NEAR(deviatoric_difference(out.back()) / relaxed, 1.0, 1e-9);
  }
}

TEST(OgdenHistory, DecaysWithTimeConstantTau) {
  const double dt = 1e-4;
  const auto s = isochoric_uniaxial(1.05);
  const auto out = ogden_stress_history(grey, step_history(s, 2000), dt);
  const double inf = deviatoric_difference(ogden_stress_instantaneous({grey.Gi, grey.Gi, grey.alpha, grey.tau, grey.K}, s));
  // Excess stress over the relaxed value falls by e^-1 over tau = 600 steps.
  const double e0 = deviatoric_difference(out[1]) - inf;
  const double e1 = deviatoric_difference(out[601]) - inf;
  EXPECT_NEAR(e1 / e0, std::exp(-1.0), 1e-9);
}

TEST(OgdenHistory, FirstStepConvergesToInstantaneousAtFirstOrder) {
  const auto s = isochoric_uniaxial(1.1);
  const double target = deviatoric_difference(ogden_stress_instantaneous(grey, s));
  auto error = [&](double dt) {
    return std::abs(deviatoric_difference(ogden_stress_history(grey, step_history(s, 1), dt)[1]) - target);
  };
  const double e1 = error(4e-3), e2 = error(2e-3), e3 = error(1e-3);
  EXPECT_NEAR(e1 / e2, 2.0, 0.1);
  EXPECT_NEAR(e2 / e3, 2.0, 0.1);
}

TEST(OgdenHistory, TimeStampedVariantAndErrors) {
  const auto h = step_history(isochoric_uniaxial(1.02), 5);
  const std::vector<double> t{0, 0.01, 0.02, 0.03, 0.04, 0.05};
  EXPECT_EQ(ogden_stress_history(grey, t, h), ogden_stress_history(grey, h, 0.01));
  const std::vector<double> uneven{0, 0.01, 0.03, 0.04, 0.05, 0.06};
  EXPECT_THROW(ogden_stress_history(grey, uneven, h), ArgumentError);
  EXPECT_THROW(ogden_stress_history(grey, h, 0.0), ArgumentError);
  std::vector<StretchState> not_reference(3, isochoric_uniaxial(1.1));
  EXPECT_THROW(ogden_stress_history(grey, not_reference, 0.01), ArgumentError);
}

TEST(OgdenParams, Validation) {
  EXPECT_NO_THROW(grey.validate());
  EXPECT_THROW((OgdenParams{100, 200, -4.7, 0.06}.validate()), ValidationError);
  EXPECT_THROW((OgdenParams{850, 425, 0.0, 0.06}.validate()), ValidationError);
  EXPECT_THROW((OgdenParams{850, 425, -4.7, 0.0}.validate()), ValidationError);
}

TEST(MaterialTable, ShippedJsonMatchesDefaults) {
  const auto table = load_material_table(std::filesystem::path(ATLASMESH_DATA_DIR) / "materials.json");
  EXPECT_EQ(to_json(table), to_json(default_material_table()));
  const auto& csf = table.at(material::csf);
  ASSERT_TRUE(csf.elastic.has_value());
  EXPECT_EQ(csf.elastic->density, 1000.0);
  EXPECT_NEAR(csf.elastic->youngs_modulus * 1e-6, 1.6e-4, 1e-18);
  EXPECT_EQ(csf.elastic->poisson_ratio, 0.49);
}

TEST(MaterialTable, JsonRoundTripAndStrictKeys) {
  const auto table = default_material_table();
  EXPECT_EQ(to_json(material_table_from_json(to_json(table))), to_json(table));
  EXPECT_THROW(material_table_from_json(nlohmann::json::parse(R"({"materials":[{"id":1,"colour":"red"}]})")), FormatError);
  EXPECT_THROW(material_table_from_json(nlohmann::json::parse(R"({"materials":[{"id":1},{"id":1}]})")), ValidationError);
  EXPECT_THROW(material_table_from_json(nlohmann::json::parse(R"({"materials":[{"id":1,"conductivity_s_per_m":-1}]})")),
               ValidationError);
  EXPECT_THROW(
      material_table_from_json(nlohmann::json::parse(R"({"materials":[{"id":4,"ogden":{"g0_pa":850,"gi_pa":425,"alpha":-4.7}}]})")),
      FormatError);
}

TEST(BindMaterials, CoversEveryElement) {
  const auto m = shell_phantom({8.0, 6.0, 4.0}, 1.0);
  const auto mesh = build_base_grid(m, 1.0);
  const auto table = default_material_table();
  const auto bound = bind_materials(mesh, table);
  ASSERT_EQ(bound.size(), mesh.element_count());
  for (std::size_t e = 0; e < bound.size(); ++e) EXPECT_EQ(bound[e], &table.at(mesh.material_label[e]));
}

TEST(BindMaterials, MissingIdIsNamed) {
  auto mesh = fixtures::eight_element_mesh(1);
  mesh.material_label[3] = material::ventricle;
  auto table = default_material_table();
  table.erase(material::ventricle);
  try {
    bind_materials(mesh, table);
    FAIL() << "expected BindingError";
  } catch (const BindingError& e) {
    EXPECT_EQ(e.ids(), std::vector<Label>{6});
    EXPECT_NE(std::string(e.what()).find('6'), std::string::npos);
  }
}
