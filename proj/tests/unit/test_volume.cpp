#include <support/fixtures.hpp>

#include <gtest/gtest.h>

using namespace atlasmesh;

namespace {

std::map<Label, std::size_t> histogram(const LabelVolume& v) {
  std::map<Label, std::size_t> h;
  for (Label l : v.labels) ++h[l];
  return h;
}

void write_raw_nrrd(const std::filesystem::path& path, const std::string& header, const std::vector<std::uint16_t>& values) {
  std::ofstream out(path, std::ios::binary);
  out << header << '\n';
  for (auto v : values) {
    const char bytes[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    out.write(bytes, 2);
  }
}

LabelVolume ball_volume(int n, double radius, Label label) {
  auto v = fixtures::constant_volume({n, n, n}, 0);
  const double c = (n - 1) / 2.0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (norm(Vec3{i - c, j - c, k - c}) <= radius) v.labels[v.geometry.index(i, j, k)] = label;
  v.label_table[label] = {"ball", std::nullopt};
  return v;
}

}  // namespace

// --- read_volume -----------------------------------------------------------

TEST(ReadVolume, BackgroundOnlyVolumeHasNoLabels) {
  const auto dir = fixtures::scratch_dir("bg");
  write_raw_nrrd(dir / "bg.nrrd", "NRRD0004\ntype: uint16\ndimension: 3\nsizes: 4 4 4\nendian: little\nencoding: raw\n",
                 std::vector<std::uint16_t>(64, 0));
  const auto v = read_volume(dir / "bg.nrrd");
  EXPECT_EQ(v.geometry.dims, (std::array<int, 3>{4, 4, 4}));
  EXPECT_TRUE(v.nonzero_labels().empty());
  EXPECT_TRUE(v.label_table.empty());
}

TEST(ReadVolume, SidecarNamesAndVoxelValuesMatchHandWrittenFile) {
  const auto dir = fixtures::scratch_dir("sidecar");
  const std::vector<std::uint16_t> values{0, 1, 1, 0, 2, 0, 0, 1};
  write_raw_nrrd(dir / "v.nrrd",
                 "NRRD0004\ntype: unsigned short\ndimension: 3\nsizes: 2 2 2\nspace directions: (0.5,0,0) (0,2,0) (0,0,1)\n"
                 "space origin: (10,20,30)\nendian: little\nencoding: raw\n",
                 values);
  std::ofstream(dir / "v.labels.json") << R"([{"id":1,"name":"GM"},{"id":2,"name":"WM"}])";
  const auto v = read_volume(dir / "v.nrrd");
  ASSERT_EQ(v.labels.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) EXPECT_EQ(v.labels[i], values[i]) << i;
  ASSERT_EQ(v.label_table.size(), 2u);
  EXPECT_EQ(v.label_table.at(1).name, "GM");
  EXPECT_EQ(v.label_table.at(2).name, "WM");
  EXPECT_EQ(v.geometry.spacing, (Vec3{0.5, 2, 1}));
  EXPECT_EQ(v.geometry.origin, (Vec3{10, 20, 30}));
}

TEST(ReadVolume, MissingSidecarGeneratesNames) {
  const auto dir = fixtures::scratch_dir("nosidecar");
  write_raw_nrrd(dir / "v.nrrd", "NRRD0004\ntype: uint16\ndimension: 3\nsizes: 1 1 2\nendian: little\nencoding: raw\n", {7, 0});
  const auto v = read_volume(dir / "v.nrrd");
  EXPECT_EQ(v.label_table.at(7).name, "label_7");
}

TEST(ReadVolume, SizeCountMismatchIsFormatErrorNamingSizes) {
  const auto dir = fixtures::scratch_dir("badsizes");
  write_raw_nrrd(dir / "v.nrrd", "NRRD0004\ntype: uint16\ndimension: 3\nsizes: 2 2\nendian: little\nencoding: raw\n", {0, 0, 0, 0});
  try {
    read_volume(dir / "v.nrrd");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.field(), "sizes");
  }
}

TEST(ReadVolume, FloatVoxelsAreTypeError) {
  const auto dir = fixtures::scratch_dir("float");
  std::ofstream out(dir / "v.nrrd", std::ios::binary);
  out << "NRRD0004\ntype: float\ndimension: 3\nsizes: 1 1 1\nendian: little\nencoding: raw\n\n";
  const float f = 1.0f;
  out.write(reinterpret_cast<const char*>(&f), 4);
  out.close();
  EXPECT_THROW(read_volume(dir / "v.nrrd"), TypeError);
}

TEST(ReadVolume, WriteReadRoundTripIsExact) {
  const auto dir = fixtures::scratch_dir("roundtrip");
  auto v = ball_volume(9, 3.2, 5);
  v.label_table[100] = {"group", std::nullopt};
  v.label_table[5].parent = 100;
  v.geometry.spacing = {0.5, 0.75, 1.25};
  v.geometry.origin = {-3.25, 0.1, 7};
  write_volume(v, dir / "ball.nrrd");
  const auto back = read_volume(dir / "ball.nrrd");
  EXPECT_EQ(back.geometry, v.geometry);
  EXPECT_EQ(back.labels, v.labels);
  EXPECT_EQ(back.label_table, v.label_table);
}

// --- apply_edits -------------------------------------------------------------

TEST(ApplyEdits, MergeCollapsesSourcesIntoTarget) {
  auto v = fixtures::constant_volume({5, 3, 1}, 0);
  for (int i = 0; i < 10; ++i) v.labels[i] = 3;
  for (int i = 10; i < 15; ++i) v.labels[i] = 4;
  v.label_table = {{3, {"a", std::nullopt}}, {4, {"b", std::nullopt}}};
  const auto before = histogram(v);
  const auto out = apply_edits(v, {MergeStep{{3, 4}, 3, std::nullopt}});
  const auto after = histogram(out);
  EXPECT_EQ(after.at(3), before.at(3) + before.at(4));
  EXPECT_FALSE(after.contains(4));
  EXPECT_FALSE(out.label_table.contains(4));
  EXPECT_EQ(out.labels.size(), v.labels.size());
}

TEST(ApplyEdits, RemoveOfEmptyLabelOnlyDropsEntry) {
  auto v = fixtures::constant_volume({3, 3, 3}, 1);
  v.label_table[7] = {"unused", std::nullopt};
  const auto out = apply_edits(v, {RemoveStep{{7}}});
  EXPECT_EQ(out.labels, v.labels);
  EXPECT_FALSE(out.label_table.contains(7));
}

TEST(ApplyEdits, RemoveZeroesVoxels) {
  auto v = ball_volume(7, 2.0, 2);
  const auto out = apply_edits(v, {RemoveStep{{2}}});
  EXPECT_TRUE(out.nonzero_labels().empty());
}

TEST(ApplyEdits, GroupIsMetadataOnly) {
  auto v = fixtures::constant_volume({2, 2, 2}, 1);
  v.labels[0] = 2;
  v.label_table[2] = {"b", std::nullopt};
  const auto out = apply_edits(v, {GroupStep{{1, 2}, 100, "cerebrum"}});
  EXPECT_EQ(out.labels, v.labels);
  ASSERT_TRUE(out.label_table.contains(100));
  EXPECT_EQ(out.label_table.at(100).name, "cerebrum");
  EXPECT_EQ(out.label_table.at(1).parent, std::optional<Label>(100));
  EXPECT_EQ(out.label_table.at(2).parent, std::optional<Label>(100));
  EXPECT_TRUE(label_descends_from(out.label_table, 2, 100));
}

TEST(ApplyEdits, UnknownIdIdentifiesStep) {
  auto v = fixtures::constant_volume({2, 2, 2}, 1);
  try {
    apply_edits(v, {GroupStep{{1}, 50, "g"}, RemoveStep{{9}}});
    FAIL() << "expected ScriptError";
  } catch (const ScriptError& e) {
    EXPECT_EQ(e.step(), 1u);
  }
}

TEST(ApplyEdits, RandomScriptsConserveVoxelCountAndGeometry) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto v = fixtures::constant_volume({6, 5, 4}, 0);
    std::uniform_int_distribution<int> lab(0, 5);
    for (auto& l : v.labels) l = lab(rng);
    for (Label l = 1; l <= 5; ++l) v.label_table[l] = {default_label_name(l), std::nullopt};
    EditScript script;
    std::vector<Label> alive{1, 2, 3, 4, 5};
    for (int s = 0; s < 3 && alive.size() > 1; ++s) {
      std::shuffle(alive.begin(), alive.end(), rng);
      if (rng() % 2) {
        script.push_back(MergeStep{{alive[0], alive[1]}, alive[1], std::nullopt});
      } else {
        script.push_back(RemoveStep{{alive[0]}});
      }
      alive.erase(alive.begin());
    }
    const auto out = apply_edits(v, script);
    EXPECT_EQ(out.labels.size(), v.labels.size());
    EXPECT_EQ(out.geometry, v.geometry);
  }
}

TEST(EditScriptJson, ParsesAllStepKinds) {
  const auto script = edit_script_from_json(nlohmann::json::parse(
      R"([{"op":"merge","sources":[3,4],"target":3},{"op":"remove","ids":[7]},{"op":"group","ids":[1,2],"id":100,"name":"c"}])"));
  ASSERT_EQ(script.size(), 3u);
  EXPECT_TRUE(std::holds_alternative<MergeStep>(script[0]));
  EXPECT_TRUE(std::holds_alternative<RemoveStep>(script[1]));
  EXPECT_TRUE(std::holds_alternative<GroupStep>(script[2]));
  EXPECT_THROW(edit_script_from_json(nlohmann::json::parse(R"([{"op":"split"}])")), ScriptError);
}

// --- dilate_mask -------------------------------------------------------------

TEST(DilateMask, OneSpacingGivesPlusSign) {
  auto v = fixtures::constant_volume({5, 5, 5}, 0);
  v.labels[v.geometry.index(2, 2, 2)] = 1;
  v.label_table[1] = {"x", std::nullopt};
  const auto d = dilate_mask(nonzero_mask(v), 1.0);
  EXPECT_EQ(d.count(), 7u);
  for (auto [i, j, k] : std::vector<std::array<int, 3>>{{2, 2, 2}, {1, 2, 2}, {3, 2, 2}, {2, 1, 2}, {2, 3, 2}, {2, 2, 1}, {2, 2, 3}})
    EXPECT_TRUE(d.test(v.geometry.index(i, j, k)));
}

TEST(DilateMask, MatchesBruteForceOnRandomMasks) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    BinaryMask m;
    m.geometry.dims = {7, 6, 5};
    m.geometry.spacing = {1.0, 0.8, 1.3};
    m.bits.assign(m.geometry.voxel_count(), 0);
    for (auto& b : m.bits) b = (rng() % 13 == 0) ? 1 : 0;
    const double r = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    const auto d = dilate_mask(m, r);
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
      bool expect = false;
      for (std::size_t j = 0; j < m.bits.size() && !expect; ++j)
        if (m.bits[j] && distance(m.geometry.center(i), m.geometry.center(j)) <= r) expect = true;
      ASSERT_EQ(d.test(i), expect) << "trial " << trial << " voxel " << i;
    }
  }
}

TEST(DilateMask, ZeroDistanceIsIdentityAndFullMaskSaturates) {
  auto v = ball_volume(7, 2.0, 1);
  const auto m = nonzero_mask(v);
  EXPECT_EQ(dilate_mask(m, 0.0).bits, m.bits);
  BinaryMask full{v.geometry, std::vector<std::uint8_t>(v.labels.size(), 1)};
  EXPECT_EQ(dilate_mask(full, 2.5).bits, full.bits);
  EXPECT_THROW(dilate_mask(m, -1.0), ArgumentError);
}

TEST(DilateMask, MonotoneAndComposes) {
  const auto m = nonzero_mask(ball_volume(11, 2.5, 1));
  const auto a = dilate_mask(m, 1.5);
  const auto ab = dilate_mask(a, 1.0);
  const auto big = dilate_mask(m, 2.5);
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (m.bits[i]) {
      EXPECT_TRUE(a.bits[i]);
    }
    if (ab.bits[i]) {
      EXPECT_TRUE(big.bits[i]);
    }
  }
}

// --- build_material_map --------------------------------------------------------

TEST(MaterialMap, ShellRadiiFollowOffsets) {
  const int n = 71;
  auto atlas = fixtures::constant_volume({n, n, n}, 0);
  const double c = (n - 1) / 2.0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (norm(Vec3{i - c, j - c, k - c}) <= 20.0) atlas.labels[atlas.geometry.index(i, j, k)] = 1;
  atlas.label_table[1] = {"brain", std::nullopt};
  const auto out = build_material_map(atlas, nonzero_mask(atlas), MaterialRules{});
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double r = norm(Vec3{i - c, j - c, k - c});
        const Label l = out.at(i, j, k);
        if (l == material::skull) {
          EXPECT_GT(r, 20.0 - 1.0);
          EXPECT_LE(r, 24.0 + 1.0);
        } else if (l == material::scalp) {
          EXPECT_GT(r, 24.0 - 1.0);
          EXPECT_LE(r, 28.0 + 1.0);
        } else if (l == material::csf) {
          EXPECT_LE(r, 20.0);
        } else {
          EXPECT_EQ(l, 0);
          EXPECT_GT(r, 28.0 - 1.0);
        }
      }
}

TEST(MaterialMap, RulesTakePrecedenceInsideMask) {
  auto atlas = ball_volume(15, 4.0, 9);
  atlas.labels[atlas.geometry.index(7, 7, 7)] = 8;
  atlas.label_table[8] = {"cortex", std::nullopt};
  MaterialRules rules;
  rules.atlas_to_material[8] = material::grey_matter;
  rules.shell_thickness_mm = 2.0;
  const auto out = build_material_map(atlas, nonzero_mask(atlas), rules);
  EXPECT_EQ(out.at(7, 7, 7), material::grey_matter);
  EXPECT_EQ(out.at(7, 7, 8), material::csf);
  EXPECT_EQ(out.at(0, 0, 0), 0);
}

TEST(MaterialMap, ShellsPartitionTheDoubledOffset) {
  const auto atlas = ball_volume(21, 4.0, 1);
  const auto mask = nonzero_mask(atlas);
  MaterialRules rules;
  rules.shell_thickness_mm = 2.5;
  const auto out = build_material_map(atlas, mask, rules);
  const auto region = dilate_mask(mask, 5.0);
  for (std::size_t i = 0; i < out.labels.size(); ++i) EXPECT_EQ(out.labels[i] != 0, region.bits[i] != 0) << i;
}

TEST(MaterialMap, ErrorsOnMismatchAndUnknownRule) {
  const auto atlas = ball_volume(9, 3.0, 1);
  auto other = fixtures::constant_volume({8, 9, 9}, 1);
  EXPECT_THROW(build_material_map(atlas, nonzero_mask(other), {}), GeometryError);
  MaterialRules rules;
  rules.atlas_to_material[42] = material::white_matter;
  EXPECT_THROW(build_material_map(atlas, nonzero_mask(atlas), rules), RuleError);
}

// --- downsample ------------------------------------------------------------------

TEST(Downsample, BlockMajority) {
  auto v = fixtures::constant_volume({2, 2, 2}, 0);
  v.labels = {5, 5, 5, 5, 5, 0, 0, 0};
  v.label_table[5] = {"x", std::nullopt};
  const auto d = downsample(v, 2);
  ASSERT_EQ(d.labels.size(), 1u);
  EXPECT_EQ(d.labels[0], 5);
  EXPECT_EQ(d.geometry.spacing, (Vec3{2, 2, 2}));
  EXPECT_EQ(d.geometry.origin, (Vec3{0.5, 0.5, 0.5}));
}

TEST(Downsample, TieGoesToLowerLabel) {
  auto v = fixtures::constant_volume({2, 2, 2}, 0);
  v.labels = {7, 3, 7, 3, 7, 3, 7, 3};
  v.label_table = {{3, {"a", std::nullopt}}, {7, {"b", std::nullopt}}};
  EXPECT_EQ(downsample(v, 2).labels[0], 3);
}

TEST(Downsample, FactorOneIsIdentityAndPaddingIsRecorded) {
  const auto v = ball_volume(5, 2.0, 1);
  const auto same = downsample(v, 1);
  EXPECT_EQ(same.labels, v.labels);
  EXPECT_EQ(same.geometry, v.geometry);
  const auto d = downsample(v, 2);
  EXPECT_EQ(d.geometry.dims, (std::array<int, 3>{3, 3, 3}));
  EXPECT_EQ(d.padding, (std::array<int, 3>{1, 1, 1}));
  EXPECT_THROW(downsample(v, 0), ArgumentError);
}

TEST(Downsample, ConstantVolumeStaysConstant) {
  for (int f = 1; f <= 4; ++f) {
    const auto d = downsample(fixtures::constant_volume({12, 12, 12}, 6), f);
    for (Label l : d.labels) EXPECT_EQ(l, 6);
  }
}
