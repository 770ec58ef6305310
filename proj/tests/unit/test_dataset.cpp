// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "planeseg/dataset.hpp"
#include "planeseg/pipeline.hpp"
#include "planeseg/volume_io.hpp"
#include "support.hpp"

using namespace planeseg;
using planeseg::testing::TempDir;

namespace {

const std::vector<int> kTableScans{2, 5, 3, 4, 5, 4, 5, 3, 5, 1, 1};

// Writes `<p>_<s>` image/mask pairs of the given shape for every patient.
void write_cohort(const std::filesystem::path& root, const std::vector<int>& scans, const Shape3& shape,
                  bool with_masks = true) {
  std::mt19937_64 rng(9);
  for (std::size_t p = 0; p < scans.size(); ++p) {
    const std::string pid = std::to_string(p + 1);
    for (int s = 1; s <= scans[p]; ++s) {
      const std::string sid = pid + "_" + std::to_string(s);
      Volume v = planeseg::testing::random_volume(shape, rng);
      v.patient_id = pid;
      v.scan_id = sid;
      save_volume(v, root / pid / (sid + ".raw"));
      if (with_masks) save_mask(planeseg::testing::random_mask(shape, rng), root / pid / (sid + "_mask.raw"), pid, sid);
    }
  }
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("extract_plane shapes, bounds and voxel placement") {
    Volume v;
    v.voxels = make_grid({4, 5, 6});
    Mask3D m;
    m.voxels = make_mask_grid({4, 5, 6});
    m.voxels(2, 3, 4) = 1;
    v.voxels(2, 3, 4) = 0.75f;
    const SliceRecord r = extract_plane(v, m, PlaneAxis::X_axial, 2);
    CHECK(r.image.rows() == 5);
    CHECK(r.image.cols() == 6);
    CHECK(r.mask(3, 4) == 1);
    CHECK(r.mask.cast<int>().sum() == 1);
    CHECK(r.image(3, 4) == 0.75f);
    CHECK(extract_plane(v, m, PlaneAxis::Y_coronal, 3).mask(2, 4) == 1);
    CHECK(extract_plane(v, m, PlaneAxis::Z_sagittal, 4).mask(2, 3) == 1);
    CHECK_THROWS_AS(extract_plane(v, m, PlaneAxis::X_axial, 4), InvalidArgument);
    CHECK_THROWS_AS(extract_plane(v, m, PlaneAxis::X_axial, -1), InvalidArgument);
  }

  TEST_CASE("slice_volume yields ordered records along the axis") {
    Volume v;
    v.voxels = make_grid({4, 5, 6});
    Mask3D m;
    m.voxels = make_mask_grid({4, 5, 6});
    const auto recs = slice_volume(v, m, PlaneAxis::Y_coronal);
    REQUIRE(recs.size() == 5);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      CHECK(recs[i].index == static_cast<int>(i));
      CHECK(recs[i].image.rows() == 4);
      CHECK(recs[i].image.cols() == 6);
    }
    CHECK(slice_volume(v, m, PlaneAxis::Z_sagittal).size() == 6);
  }

  TEST_CASE("cube volumes give one record per voxel row on every plane") {
    Volume v;
    v.voxels = make_grid({48, 48, 48});
    Mask3D m;
    m.voxels = make_mask_grid({48, 48, 48});
    for (PlaneAxis p : kAllPlanes) CHECK(slice_volume(v, m, p).size() == 48);
  }

  TEST_CASE("manifest over the 38-scan cohort splits 35/3") {
    TempDir dir("ds");
    write_cohort(dir.path(), kTableScans, {4, 4, 4});
    const DatasetManifest m = build_manifest(dir.path(), {"1", "10"});
    CHECK(m.entries.size() == 38);
    CHECK(m.with_role(Role::train).size() == 35);
    CHECK(m.with_role(Role::test).size() == 3);
    for (const ManifestEntry* e : m.with_role(Role::test)) CHECK((e->patient_id == "1" || e->patient_id == "10"));

    const DatasetManifest all = build_manifest(dir.path(), {});
    CHECK(all.with_role(Role::train).size() == 38);

    save_manifest(m, dir / "manifest.json");
    const DatasetManifest back = load_manifest(dir / "manifest.json");
    REQUIRE(back.entries.size() == 38);
    CHECK(back.entries[5].scan_id == m.entries[5].scan_id);
    CHECK(std::filesystem::exists(back.resolve(back.entries[5].mask_path)));
  }

  TEST_CASE("image without mask is reported by scan id") {
    TempDir dir("ds");
    write_cohort(dir.path(), {1}, {2, 2, 2}, false);
    try {
      build_manifest(dir.path(), {});
      FAIL("expected an error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("1_1") != std::string::npos);
    }
  }

  TEST_CASE("scenario datasets are built from train scans only") {
    TempDir dir("ds");
    const Shape3 shape{8, 9, 10};
    write_cohort(dir.path(), kTableScans, shape);
    const DatasetManifest m = build_manifest(dir.path(), {"1", "10"});
    const auto s1 = build_scenario1(m);
    CHECK(s1.at(PlaneAxis::X_axial).size() == 35u * 8);
    CHECK(s1.at(PlaneAxis::Y_coronal).size() == 35u * 9);
    CHECK(s1.at(PlaneAxis::Z_sagittal).size() == 35u * 10);

    std::set<SliceKey> seen;
    std::size_t total = 0;
    for (const auto& [plane, ds] : s1) {
      for (const SliceKey& k : ds.keys) {
        CHECK(k.plane == plane);
        CHECK(m.find(k.scan_id).role == Role::train);
        seen.insert(k);
      }
      total += ds.size();
    }
    CHECK(seen.size() == total);

    const SliceDataset s2 = build_scenario2(m);
    CHECK(s2.size() == total);
    CHECK(std::set<SliceKey>(s2.keys.begin(), s2.keys.end()) == seen);
  }

  TEST_CASE("two 32^3 train scans give 192 scenario-2 records") {
    TempDir dir("ds");
    write_cohort(dir.path(), {2}, {32, 32, 32});
    CHECK(build_scenario2(build_manifest(dir.path(), {})).size() == 192);
  }

  TEST_CASE("foreground filter drops empty slices") {
    TempDir dir("ds");
    Volume v;
    v.voxels = make_grid({4, 4, 4});
    v.patient_id = "1";
    v.scan_id = "1_1";
    Mask3D m;
    m.voxels = make_mask_grid({4, 4, 4});
    m.voxels(1, 2, 2) = 1;
    save_volume(v, dir / "1_1.raw");
    save_mask(m, dir / "1_1_mask.raw", "1", "1_1");
    const auto s1 = build_scenario1(build_manifest(dir.path(), {}), {1});
    REQUIRE(s1.at(PlaneAxis::X_axial).size() == 1);
    CHECK(s1.at(PlaneAxis::X_axial).keys[0].index == 1);
  }

  TEST_CASE("folds: balanced, seeded and exhaustive") {
    TempDir dir("ds");
    write_cohort(dir.path(), kTableScans, {2, 2, 2});
    const DatasetManifest m = build_manifest(dir.path(), {"1", "10"});
    const FoldPlan plan = make_folds(m, 5, 42);
    CHECK(plan.fold_sizes() == std::vector<int>{7, 7, 7, 7, 7});
    std::set<std::string> validated;
    for (int f = 0; f < 5; ++f) {
      const auto val = plan.validation_scans(f);
      const auto tr = plan.training_scans(f);
      CHECK(val.size() == 7);
      CHECK(tr.size() == 28);
      for (const auto& s : val) {
        CHECK(validated.insert(s).second);
        CHECK(tr.count(s) == 0);
      }
    }
    CHECK(validated.size() == 35);
    CHECK(make_folds(m, 5, 42).assignments == plan.assignments);
    CHECK(make_folds(m, 5, 43).assignments != plan.assignments);

    save_fold_plan(plan, dir / "folds.json");
    CHECK(load_fold_plan(dir / "folds.json").assignments == plan.assignments);
  }

  TEST_CASE("k=2 over three scans splits 2/1") {
    TempDir dir("ds");
    write_cohort(dir.path(), {3}, {2, 2, 2});
    auto sizes = make_folds(build_manifest(dir.path(), {}), 2, 1).fold_sizes();
    std::sort(sizes.begin(), sizes.end());
    CHECK(sizes == std::vector<int>{1, 2});
    CHECK_THROWS_AS(make_folds(build_manifest(dir.path(), {}), 4, 1), InvalidArgument);
  }

  TEST_CASE("patients never straddle roles") {
    DatasetManifest m;
    m.entries.push_back({"1", "1_1", "a.raw", "a_mask.raw", Role::train});
    m.entries.push_back({"1", "1_2", "b.raw", "b_mask.raw", Role::test});
    CHECK_THROWS_AS(m.validate(), InvalidArgument);
    m.entries[1].role = Role::train;
    m.entries[1].scan_id = "1_1";
    CHECK_THROWS_AS(m.validate(), InvalidArgument);
  }

  TEST_CASE("slice and stack round trip on random volumes") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      const Shape3 s{7 + trial, 5, 6};
      const Mask3D m = planeseg::testing::random_mask(s, rng);
      Volume v;
      v.voxels = make_grid(s);
      for (PlaneAxis p : kAllPlanes) {
        std::vector<Mask2> slices;
        for (const SliceRecord& r : slice_volume(v, m, p)) slices.push_back(r.mask);
        const Mask3D back = stack_slices(slices, p);
        REQUIRE(back.shape() == s);
        CHECK(std::equal(back.voxels.data(), back.voxels.data() + back.voxels.size(), m.voxels.data()));
      }
    }
  }
}
