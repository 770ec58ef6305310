// SPDX-License-Identifier: Apache-2.0

#include "planeseg/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <json.hpp>

#include "planeseg/volume_io.hpp"

namespace planeseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string plane_tag(PlaneAxis p) {
  switch (p) {
    case PlaneAxis::X_axial: return "X";
    case PlaneAxis::Y_coronal: return "Y";
    case PlaneAxis::Z_sagittal: return "Z";
  }
  return "?";
}

std::string plane_name(PlaneAxis p) {
  switch (p) {
    case PlaneAxis::X_axial: return "Axial";
    case PlaneAxis::Y_coronal: return "Coronal";
    case PlaneAxis::Z_sagittal: return "Sagittal";
  }
  return "?";
}

PlaneAxis plane_from_string(const std::string& s) {
  if (s == "X" || s == "x" || s == "axial" || s == "Axial" || s == "X_axial") return PlaneAxis::X_axial;
  if (s == "Y" || s == "y" || s == "coronal" || s == "Coronal" || s == "Y_coronal") return PlaneAxis::Y_coronal;
  if (s == "Z" || s == "z" || s == "sagittal" || s == "Sagittal" || s == "Z_sagittal") return PlaneAxis::Z_sagittal;
  throw InvalidArgument("unknown plane '" + s + "'");
}

std::pair<int, int> slice_shape(const Shape3& shape, PlaneAxis plane) {
  switch (plane) {
    case PlaneAxis::X_axial: return {shape.ny, shape.nz};
    case PlaneAxis::Y_coronal: return {shape.nx, shape.nz};
    case PlaneAxis::Z_sagittal: return {shape.nx, shape.ny};
  }
  return {0, 0};
}

SliceRecord extract_plane(const Volume& volume, const Mask3D& mask, PlaneAxis plane, int index) {
  if (!(volume.shape() == mask.shape())) {
    throw InvalidArgument("volume " + to_string(volume.shape()) + " and mask " + to_string(mask.shape()) +
                          " shapes differ");
  }
  SliceRecord r;
  r.scan_id = volume.scan_id;
  r.plane = plane;
  r.index = index;
  r.image = extract_slice(volume.voxels, plane, index);
  r.mask = extract_slice(mask.voxels, plane, index);
  return r;
}

std::vector<SliceRecord> slice_volume(const Volume& volume, const Mask3D& mask, PlaneAxis plane) {
  if (!(volume.shape() == mask.shape())) {
    throw InvalidArgument("volume " + to_string(volume.shape()) + " and mask " + to_string(mask.shape()) +
                          " shapes differ");
  }
  const int extent = volume.shape()[axis_of(plane)];
  std::vector<SliceRecord> out;
  out.reserve(extent);
  for (int i = 0; i < extent; ++i) out.push_back(extract_plane(volume, mask, plane, i));
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Role r) { return r == Role::test ? "test" : "train"; }

Role role_from_string(const std::string& s) {
  if (s == "train") return Role::train;
  if (s == "test") return Role::test;
  throw InvalidArgument("unknown role '" + s + "'");
}

fs::path DatasetManifest::resolve(const fs::path& p) const {
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

std::vector<const ManifestEntry*> DatasetManifest::with_role(Role r) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.role == r) out.push_back(&e);
  }
  return out;
}

const ManifestEntry& DatasetManifest::find(const std::string& scan_id) const {
  for (const auto& e : entries) {
    if (e.scan_id == scan_id) return e;
  }
  throw InvalidArgument("scan '" + scan_id + "' not in manifest");
}

void DatasetManifest::validate() const {
  std::set<std::string> scans;
  std::map<std::string, Role> roles;
  for (const auto& e : entries) {
    if (!scans.insert(e.scan_id).second) throw InvalidArgument("duplicate scan_id '" + e.scan_id + "'");
    const auto [it, inserted] = roles.emplace(e.patient_id, e.role);
    if (!inserted && it->second != e.role) {
      throw InvalidArgument("patient '" + e.patient_id + "' has scans in both train and test roles");
    }
  }
}

std::set<std::string> default_test_patients() { return {"1", "10"}; }

namespace {

bool is_image_file(const fs::path& p) {
  const std::string name = p.filename().string();
  auto ends = [&](const std::string& suf) {
    return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (!(ends(".raw") || ends(".nii") || ends(".nii.gz"))) return false;
  const std::string stem = volume_stem(p);
  return !(stem.size() >= 5 && stem.compare(stem.size() - 5, 5, "_mask") == 0);
}

bool mask_exists(const fs::path& mask) {
  if (detect_format(mask) == VolumeFormat::raw) {
    fs::path side = mask;
    side.replace_extension(".json");
    return fs::exists(mask) && fs::exists(side);
  }
  return fs::exists(mask);
}

}  // namespace

DatasetManifest build_manifest(const fs::path& root, const std::set<std::string>& test_patients) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<fs::path> images;
  for (const auto& item : fs::recursive_directory_iterator(root)) {
    if (item.is_regular_file() && is_image_file(item.path())) images.push_back(item.path());
  }
  std::sort(images.begin(), images.end());

  DatasetManifest m;
  m.base_dir = root;
  for (const auto& img : images) {
    const fs::path mask = mask_path_for(img);
    const VolumeHeader hdr = read_header(img);
    if (!mask_exists(mask)) {
      throw IoError("scan '" + hdr.scan_id + "' has no mask (expected " + mask.string() + ")");
    }
    ManifestEntry e;
    e.patient_id = hdr.patient_id;
    e.scan_id = hdr.scan_id;
    e.volume_path = fs::relative(img, root);
    e.mask_path = fs::relative(mask, root);
    e.role = test_patients.count(e.patient_id) ? Role::test : Role::train;
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  auto rel = [&](const fs::path& p) {
    const fs::path abs = fs::absolute(manifest.resolve(p));
    return fs::relative(abs, fs::absolute(dir)).generic_string();
  };
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"patient_id", e.patient_id},
                       {"scan_id", e.scan_id},
                       {"volume_path", rel(e.volume_path)},
                       {"mask_path", rel(e.mask_path)},
                       {"role", to_string(e.role)}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << json{{"entries", entries}}.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("corrupt manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  const json& arr = j.is_array() ? j : j.at("entries");
  for (const auto& je : arr) {
    ManifestEntry e;
    e.patient_id = je.at("patient_id").get<std::string>();
    e.scan_id = je.at("scan_id").get<std::string>();
    e.volume_path = je.at("volume_path").get<std::string>();
    e.mask_path = je.at("mask_path").get<std::string>();
    e.role = role_from_string(je.at("role").get<std::string>());
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

std::set<std::string> SliceDataset::scan_ids() const {
  std::set<std::string> s;
  for (const auto& k : keys) s.insert(k.scan_id);
  return s;
}

namespace {

SliceDataset plane_dataset(const DatasetManifest& manifest, PlaneAxis plane, const ScenarioOptions& options) {
  SliceDataset ds;
  for (const ManifestEntry* e : manifest.with_role(Role::train)) {
    if (options.min_foreground_px > 0) {
      const Mask3D mask = load_mask(manifest.resolve(e->mask_path));
      const int extent = mask.shape()[axis_of(plane)];
      for (int i = 0; i < extent; ++i) {
        const Mask2 s = extract_slice(mask.voxels, plane, i);
        if (s.template cast<int>().sum() >= options.min_foreground_px) ds.keys.push_back({e->scan_id, plane, i});
      }
    } else {
      const VolumeHeader hdr = read_header(manifest.resolve(e->volume_path));
      const int extent = hdr.shape[axis_of(plane)];
      for (int i = 0; i < extent; ++i) ds.keys.push_back({e->scan_id, plane, i});
    }
  }
  return ds;
}

void require_nonempty(const DatasetManifest& manifest) {
  if (manifest.with_role(Role::train).empty()) throw InvalidArgument("manifest has no train-role scans");
}

}  // namespace

std::map<PlaneAxis, SliceDataset> build_scenario1(const DatasetManifest& manifest, const ScenarioOptions& options) {
  manifest.validate();
  require_nonempty(manifest);
  std::map<PlaneAxis, SliceDataset> out;
  for (PlaneAxis p : kAllPlanes) out[p] = plane_dataset(manifest, p, options);
  return out;
}

SliceDataset build_scenario2(const DatasetManifest& manifest, const ScenarioOptions& options) {
  const auto per_plane = build_scenario1(manifest, options);
  SliceDataset all;
  for (PlaneAxis p : kAllPlanes) {
    const auto& keys = per_plane.at(p).keys;
    all.keys.insert(all.keys.end(), keys.begin(), keys.end());
  }
  return all;
}

// ---------------------------------------------------------------------------

std::set<std::string> FoldPlan::validation_scans(int fold) const {
  if (fold < 0 || fold >= k) throw InvalidArgument("fold " + std::to_string(fold) + " not in plan");
  std::set<std::string> s;
  for (const auto& [scan, f] : assignments) {
    if (f == fold) s.insert(scan);
  }
  return s;
}

std::set<std::string> FoldPlan::training_scans(int fold) const {
  if (fold < 0 || fold >= k) throw InvalidArgument("fold " + std::to_string(fold) + " not in plan");
  std::set<std::string> s;
  for (const auto& [scan, f] : assignments) {
    if (f != fold) s.insert(scan);
  }
  return s;
}

std::vector<int> FoldPlan::fold_sizes() const {
  std::vector<int> sizes(k, 0);
  for (const auto& [scan, f] : assignments) ++sizes.at(f);
  return sizes;
}

FoldPlan make_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("k must be at least 2");
  std::vector<std::string> scans;
  for (const ManifestEntry* e : manifest.with_role(Role::train)) scans.push_back(e->scan_id);
  if (static_cast<int>(scans.size()) < k) {
    throw InvalidArgument("fewer train scans (" + std::to_string(scans.size()) + ") than folds (" +
                          std::to_string(k) + ")");
  }
  std::sort(scans.begin(), scans.end());
  std::mt19937_64 rng(seed);
  std::shuffle(scans.begin(), scans.end(), rng);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  for (std::size_t i = 0; i < scans.size(); ++i) plan.assignments[scans[i]] = static_cast<int>(i % k);
  return plan;
}

void save_fold_plan(const FoldPlan& plan, const fs::path& path) {
  json j{{"k", plan.k}, {"seed", plan.seed}, {"assignments", plan.assignments}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

FoldPlan load_fold_plan(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fold plan " + path.string());
  json j;
  in >> j;
  FoldPlan plan;
  plan.k = j.at("k").get<int>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.assignments = j.at("assignments").get<std::map<std::string, int>>();
  return plan;
}

}  // namespace planeseg
