// SPDX-License-Identifier: Apache-2.0

#include "planeseg/volume_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include <zlib.h>

#include <json.hpp>

namespace planeseg {

static_assert(std::endian::native == std::endian::little,
              "raw volume format assumes a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(const Shape3& s) {
  std::ostringstream os;
  os << '(' << s.nx << ',' << s.ny << ',' << s.nz << ')';
  return os.str();
}

std::string to_string(MaskSource s) {
  return s == MaskSource::predicted ? "predicted" : "ground_truth";
}

MaskSource mask_source_from_string(const std::string& s) {
  if (s == "predicted") return MaskSource::predicted;
  if (s == "ground_truth") return MaskSource::ground_truth;
  throw InvalidArgument("unknown mask source '" + s + "'");
}

std::int64_t Mask3D::foreground() const {
  std::int64_t n = 0;
  const auto* p = voxels.data();
  for (Eigen::Index i = 0; i < voxels.size(); ++i) n += p[i];
  return n;
}

void require_binary(const Grid3<std::uint8_t>& voxels) {
  const auto* p = voxels.data();
  for (Eigen::Index i = 0; i < voxels.size(); ++i) {
    if (p[i] > 1) throw InvalidArgument("non-binary mask");
  }
}

namespace {

void make_parent(const fs::path& path) {
  if (!path.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void check_shape(const Shape3& s) {
  if (s.nx < 1 || s.ny < 1 || s.nz < 1) throw InvalidArgument("non-positive shape " + to_string(s));
}

// ---------------------------------------------------------------------------
// NIfTI-1

#pragma pack(push, 1)
struct NiftiHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code, datatype, bitpix, slice_start;
  float pixdim[8];
  float vox_offset, scl_slope, scl_inter;
  std::int16_t slice_end;
  char slice_code, xyzt_units;
  float cal_max, cal_min, slice_duration, toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d, qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348);

enum : std::int16_t {
  kNiftiUint8 = 2,
  kNiftiInt16 = 4,
  kNiftiInt32 = 8,
  kNiftiFloat32 = 16,
  kNiftiFloat64 = 64,
  kNiftiInt8 = 256,
  kNiftiUint16 = 512,
  kNiftiUint32 = 768,
};

template <typename T>
void swap_bytes(T& v) {
  auto* b = reinterpret_cast<unsigned char*>(&v);
  std::reverse(b, b + sizeof(T));
}

void swap_header(NiftiHeader& h) {
  swap_bytes(h.sizeof_hdr);
  for (auto& d : h.dim) swap_bytes(d);
  swap_bytes(h.datatype);
  swap_bytes(h.bitpix);
  for (auto& p : h.pixdim) swap_bytes(p);
  swap_bytes(h.vox_offset);
  swap_bytes(h.scl_slope);
  swap_bytes(h.scl_inter);
}

class GzReader {
 public:
  explicit GzReader(const fs::path& path) : file_(gzopen(path.c_str(), "rb")) {
    if (!file_) throw IoError("cannot open " + path.string());
  }
  ~GzReader() {
    if (file_) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, std::size_t n, const std::string& what) {
    auto* out = static_cast<char*>(dst);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int got = gzread(file_, out, chunk);
      if (got <= 0) throw IoError("truncated " + what);
      out += got;
      n -= static_cast<std::size_t>(got);
    }
  }
  void skip(std::size_t n, const std::string& what) {
    std::vector<char> buf(std::min<std::size_t>(n, 4096));
    while (n > 0) {
      const std::size_t chunk = std::min(n, buf.size());
      read(buf.data(), chunk, what);
      n -= chunk;
    }
  }

 private:
  gzFile file_;
};

struct NiftiData {
  NiftiHeader header;
  bool swapped = false;
  std::vector<double> values;
};

std::map<std::string, std::string> parse_descrip(const NiftiHeader& h) {
  std::map<std::string, std::string> kv;
  std::string d(h.descrip, strnlen(h.descrip, sizeof(h.descrip)));
  std::istringstream is(d);
  std::string item;
  while (std::getline(is, item, ';')) {
    const auto eq = item.find('=');
    if (eq != std::string::npos) kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return kv;
}

NiftiHeader read_nifti_header(GzReader& in, bool& swapped, const fs::path& path) {
  NiftiHeader h{};
  in.read(&h, sizeof(h), "NIfTI header in " + path.string());
  swapped = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swapped = true;
    if (h.sizeof_hdr != 348) throw IoError("corrupt NIfTI header in " + path.string());
  }
  if (std::memcmp(h.magic, "n+1", 4) != 0 && std::memcmp(h.magic, "ni1", 4) != 0) {
    throw IoError("corrupt NIfTI header (bad magic) in " + path.string());
  }
  if (h.dim[0] < 1 || h.dim[0] > 7) throw IoError("corrupt NIfTI header (dim) in " + path.string());
  for (int i = 4; i <= h.dim[0]; ++i) {
    if (h.dim[i] > 1) throw IoError("only 3D NIfTI volumes are supported: " + path.string());
  }
  return h;
}

Shape3 nifti_shape(const NiftiHeader& h) {
  auto d = [&](int i) { return i <= h.dim[0] ? std::max<int>(h.dim[i], 1) : 1; };
  return {d(1), d(2), d(3)};
}

template <typename T>
void decode(const std::vector<unsigned char>& raw, bool swapped, std::vector<double>& out) {
  const std::size_t n = raw.size() / sizeof(T);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    if (swapped) swap_bytes(v);
    out[i] = static_cast<double>(v);
  }
}

NiftiData read_nifti(const fs::path& path) {
  GzReader in(path);
  NiftiData d;
  d.header = read_nifti_header(in, d.swapped, path);
  const auto& h = d.header;
  const Shape3 shape = nifti_shape(h);
  check_shape(shape);
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < sizeof(NiftiHeader)) throw IoError("corrupt NIfTI vox_offset in " + path.string());
  in.skip(offset - sizeof(NiftiHeader), "NIfTI extension block");

  std::size_t bytes_per = 0;
  switch (h.datatype) {
    case kNiftiUint8:
    case kNiftiInt8: bytes_per = 1; break;
    case kNiftiInt16:
    case kNiftiUint16: bytes_per = 2; break;
    case kNiftiInt32:
    case kNiftiUint32:
    case kNiftiFloat32: bytes_per = 4; break;
    case kNiftiFloat64: bytes_per = 8; break;
    default: throw IoError("unsupported NIfTI datatype " + std::to_string(h.datatype));
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(shape.voxels()) * bytes_per);
  in.read(raw.data(), raw.size(), "NIfTI voxel data in " + path.string());
  switch (h.datatype) {
    case kNiftiUint8: decode<std::uint8_t>(raw, d.swapped, d.values); break;
    case kNiftiInt8: decode<std::int8_t>(raw, d.swapped, d.values); break;
    case kNiftiInt16: decode<std::int16_t>(raw, d.swapped, d.values); break;
    case kNiftiUint16: decode<std::uint16_t>(raw, d.swapped, d.values); break;
    case kNiftiInt32: decode<std::int32_t>(raw, d.swapped, d.values); break;
    case kNiftiUint32: decode<std::uint32_t>(raw, d.swapped, d.values); break;
    case kNiftiFloat32: decode<float>(raw, d.swapped, d.values); break;
    case kNiftiFloat64: decode<double>(raw, d.swapped, d.values); break;
  }
  if (h.scl_slope != 0.0f && std::isfinite(h.scl_slope) &&
      !(h.scl_slope == 1.0f && h.scl_inter == 0.0f)) {
    for (auto& v : d.values) v = v * h.scl_slope + h.scl_inter;
  }
  return d;
}

void write_nifti(const fs::path& path, const Shape3& shape, const std::array<double, 3>& spacing,
                 std::int16_t datatype, const void* data, std::size_t bytes,
                 const std::string& descrip, bool gz) {
  NiftiHeader h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(shape.nx);
  h.dim[2] = static_cast<std::int16_t>(shape.ny);
  h.dim[3] = static_cast<std::int16_t>(shape.nz);
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = datatype;
  h.bitpix = datatype == kNiftiUint8 ? 8 : 32;
  h.pixdim[0] = 1.0f;
  for (int i = 0; i < 3; ++i) h.pixdim[i + 1] = static_cast<float>(spacing[i]);
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.xyzt_units = 2;  // mm
  std::strncpy(h.descrip, descrip.c_str(), sizeof(h.descrip) - 1);
  h.sform_code = 1;
  h.srow_x[0] = h.pixdim[1];
  h.srow_y[1] = h.pixdim[2];
  h.srow_z[2] = h.pixdim[3];
  std::memcpy(h.magic, "n+1", 4);
  const char extension[4] = {0, 0, 0, 0};

  if (shape.nx > 32767 || shape.ny > 32767 || shape.nz > 32767) {
    throw InvalidArgument("shape too large for NIfTI-1: " + to_string(shape));
  }

  make_parent(path);
  if (gz) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f) throw IoError("cannot write " + path.string());
    bool ok = gzwrite(f, &h, sizeof(h)) == static_cast<int>(sizeof(h));
    ok = ok && gzwrite(f, extension, 4) == 4;
    const auto* p = static_cast<const char*>(data);
    std::size_t left = bytes;
    while (ok && left > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(left, 1u << 30));
      ok = gzwrite(f, p, chunk) == static_cast<int>(chunk);
      p += chunk;
      left -= chunk;
    }
    if (gzclose(f) != Z_OK || !ok) throw IoError("failed writing " + path.string());
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(&h), sizeof(h));
    out.write(extension, 4);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw IoError("failed writing " + path.string());
  }
}

// ---------------------------------------------------------------------------
// raw + JSON sidecar

fs::path raw_data_path(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".json") p.replace_extension(".raw");
  return p;
}

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  p.replace_extension(".json");
  return p;
}

json read_sidecar(const fs::path& path) {
  const fs::path side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw IoError("missing sidecar " + side.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("corrupt sidecar " + side.string() + ": " + e.what());
  }
  if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 3) {
    throw IoError("corrupt sidecar " + side.string() + ": missing 3-element shape");
  }
  return j;
}

Shape3 sidecar_shape(const json& j) {
  Shape3 s{j["shape"][0].get<int>(), j["shape"][1].get<int>(), j["shape"][2].get<int>()};
  if (s.nx < 1 || s.ny < 1 || s.nz < 1) throw IoError("corrupt sidecar: non-positive shape");
  return s;
}

std::array<double, 3> sidecar_spacing(const json& j) {
  std::array<double, 3> sp{1.0, 1.0, 1.0};
  if (j.contains("spacing_mm")) {
    for (int i = 0; i < 3; ++i) sp[i] = j["spacing_mm"].at(i).get<double>();
  }
  return sp;
}

std::vector<unsigned char> read_raw_bytes(const fs::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != expected) {
    throw IoError("corrupt raw file " + path.string() + ": expected " + std::to_string(expected) +
                  " bytes, found " + std::to_string(size));
  }
  in.seekg(0);
  std::vector<unsigned char> buf(size);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("failed reading " + path.string());
  return buf;
}

void write_raw(const fs::path& path, const json& sidecar, const void* data, std::size_t bytes) {
  make_parent(path);
  const fs::path data_path = raw_data_path(path);
  {
    std::ofstream out(data_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + data_path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw IoError("failed writing " + data_path.string());
  }
  const fs::path side = sidecar_path(path);
  std::ofstream out(side);
  if (!out) throw IoError("cannot write " + side.string());
  out << sidecar.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + side.string());
}

std::string patient_from_stem(const std::string& stem) {
  const auto us = stem.find('_');
  return us == std::string::npos ? stem : stem.substr(0, us);
}

std::string nifti_descrip(const std::string& source, const std::string& patient,
                          const std::string& scan) {
  return "source=" + source + ";patient=" + patient + ";scan=" + scan;
}

}  // namespace

// ---------------------------------------------------------------------------

VolumeFormat detect_format(const fs::path& path) {
  const std::string name = path.filename().string();
  if (ends_with(name, ".nii.gz")) return VolumeFormat::nifti_gz;
  if (ends_with(name, ".nii")) return VolumeFormat::nifti;
  if (ends_with(name, ".raw") || ends_with(name, ".json")) return VolumeFormat::raw;
  throw InvalidArgument("unrecognised volume format: " + path.string());
}

std::string volume_stem(const fs::path& path) {
  std::string name = path.filename().string();
  for (const char* ext : {".nii.gz", ".nii", ".raw", ".json"}) {
    if (ends_with(name, ext)) return name.substr(0, name.size() - std::strlen(ext));
  }
  return name;
}

fs::path mask_path_for(const fs::path& image_path) {
  const auto fmt = detect_format(image_path);
  const std::string stem = volume_stem(image_path) + "_mask";
  const char* ext = fmt == VolumeFormat::nifti_gz ? ".nii.gz" : (fmt == VolumeFormat::nifti ? ".nii" : ".raw");
  return image_path.parent_path() / (stem + ext);
}

VolumeHeader read_header(const fs::path& path) {
  VolumeHeader hdr;
  hdr.format = detect_format(path);
  if (!fs::exists(hdr.format == VolumeFormat::raw ? sidecar_path(path) : path)) {
    throw IoError("missing file " + path.string());
  }
  const std::string stem = volume_stem(path);
  if (hdr.format == VolumeFormat::raw) {
    const json j = read_sidecar(path);
    hdr.shape = sidecar_shape(j);
    hdr.spacing_mm = sidecar_spacing(j);
    hdr.patient_id = j.value("patient_id", patient_from_stem(stem));
    hdr.scan_id = j.value("scan_id", stem);
  } else {
    GzReader in(path);
    bool swapped = false;
    const NiftiHeader h = read_nifti_header(in, swapped, path);
    hdr.shape = nifti_shape(h);
    for (int i = 0; i < 3; ++i) hdr.spacing_mm[i] = h.pixdim[i + 1] > 0 ? h.pixdim[i + 1] : 1.0;
    const auto kv = parse_descrip(h);
    hdr.patient_id = kv.count("patient") ? kv.at("patient") : patient_from_stem(stem);
    hdr.scan_id = kv.count("scan") ? kv.at("scan") : stem;
  }
  return hdr;
}

Volume load_image(const fs::path& path) {
  const VolumeHeader hdr = read_header(path);
  Volume v;
  v.spacing_mm = hdr.spacing_mm;
  v.patient_id = hdr.patient_id;
  v.scan_id = hdr.scan_id;
  v.voxels = make_grid(hdr.shape);
  const auto n = static_cast<std::size_t>(hdr.shape.voxels());
  if (hdr.format == VolumeFormat::raw) {
    const auto bytes = read_raw_bytes(raw_data_path(path), n * sizeof(float));
    std::memcpy(v.voxels.data(), bytes.data(), bytes.size());
  } else {
    const NiftiData d = read_nifti(path);
    for (std::size_t i = 0; i < n; ++i) v.voxels.data()[i] = static_cast<float>(d.values[i]);
  }
  return v;
}

Mask3D load_mask(const fs::path& path) {
  const auto fmt = detect_format(path);
  if (!fs::exists(fmt == VolumeFormat::raw ? sidecar_path(path) : path)) {
    throw IoError("missing file " + path.string());
  }
  Mask3D m;
  std::vector<double> values;
  Shape3 shape;
  if (fmt == VolumeFormat::raw) {
    const json j = read_sidecar(path);
    shape = sidecar_shape(j);
    m.source = mask_source_from_string(j.value("source", std::string("ground_truth")));
    const std::string dtype = j.value("dtype", std::string("uint8"));
    const auto n = static_cast<std::size_t>(shape.voxels());
    if (dtype == "uint8") {
      const auto bytes = read_raw_bytes(raw_data_path(path), n);
      values.assign(bytes.begin(), bytes.end());
    } else if (dtype == "float32") {
      const auto bytes = read_raw_bytes(raw_data_path(path), n * sizeof(float));
      values.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
        values[i] = f;
      }
    } else {
      throw IoError("unsupported mask dtype '" + dtype + "' in " + path.string());
    }
  } else {
    NiftiData d = read_nifti(path);
    shape = nifti_shape(d.header);
    const auto kv = parse_descrip(d.header);
    if (kv.count("source")) m.source = mask_source_from_string(kv.at("source"));
    values = std::move(d.values);
  }
  m.voxels = make_mask_grid(shape);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (v != 0.0 && v != 1.0) throw InvalidArgument("non-binary mask in " + path.string());
    m.voxels.data()[i] = static_cast<std::uint8_t>(v);
  }
  return m;
}

std::pair<Volume, std::optional<Mask3D>> load_volume(const fs::path& path) {
  Volume v = load_image(path);
  const fs::path mp = mask_path_for(path);
  const bool has_mask = detect_format(mp) == VolumeFormat::raw ? fs::exists(sidecar_path(mp)) : fs::exists(mp);
  if (!has_mask) return {std::move(v), std::nullopt};
  Mask3D m = load_mask(mp);
  if (!(m.shape() == v.shape())) {
    throw InvalidArgument("shape mismatch between image " + to_string(v.shape()) + " and mask " +
                          to_string(m.shape()) + " for " + path.string());
  }
  return {std::move(v), std::move(m)};
}

void save_volume(const Volume& volume, const fs::path& path) {
  const auto fmt = detect_format(path);
  const Shape3 shape = volume.shape();
  const std::size_t bytes = static_cast<std::size_t>(shape.voxels()) * sizeof(float);
  if (fmt == VolumeFormat::raw) {
    json j;
    j["shape"] = {shape.nx, shape.ny, shape.nz};
    j["spacing_mm"] = volume.spacing_mm;
    j["patient_id"] = volume.patient_id;
    j["scan_id"] = volume.scan_id;
    j["source"] = "image";
    j["dtype"] = "float32";
    write_raw(path, j, volume.voxels.data(), bytes);
  } else {
    write_nifti(path, shape, volume.spacing_mm, kNiftiFloat32, volume.voxels.data(), bytes,
                nifti_descrip("image", volume.patient_id, volume.scan_id), fmt == VolumeFormat::nifti_gz);
  }
}

void save_mask(const Mask3D& mask, const fs::path& path, const std::string& patient_id,
               const std::string& scan_id) {
  require_binary(mask.voxels);
  const auto fmt = detect_format(path);
  const Shape3 shape = mask.shape();
  const std::size_t bytes = static_cast<std::size_t>(shape.voxels());
  if (fmt == VolumeFormat::raw) {
    json j;
    j["shape"] = {shape.nx, shape.ny, shape.nz};
    j["spacing_mm"] = {1.0, 1.0, 1.0};
    j["patient_id"] = patient_id;
    j["scan_id"] = scan_id;
    j["source"] = to_string(mask.source);
    j["dtype"] = "uint8";
    write_raw(path, j, mask.voxels.data(), bytes);
  } else {
    write_nifti(path, shape, {1.0, 1.0, 1.0}, kNiftiUint8, mask.voxels.data(), bytes,
                nifti_descrip(to_string(mask.source), patient_id, scan_id), fmt == VolumeFormat::nifti_gz);
  }
}

Volume normalize(const Volume& volume) {
  Volume out = volume;
  const auto n = volume.voxels.size();
  if (n == 0) return out;
  const float* p = volume.voxels.data();
  float lo = p[0];
  float hi = p[0];
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) throw InvalidArgument("non-finite intensity in volume " + volume.scan_id);
    lo = std::min(lo, p[i]);
    hi = std::max(hi, p[i]);
  }
  float* q = out.voxels.data();
  if (hi == lo) {
    std::fill(q, q + n, 0.0f);
    return out;
  }
  if (lo == 0.0f && hi == 1.0f) return out;
  const double scale = 1.0 / (static_cast<double>(hi) - lo);
  for (Eigen::Index i = 0; i < n; ++i) {
    q[i] = static_cast<float>(std::clamp((static_cast<double>(p[i]) - lo) * scale, 0.0, 1.0));
  }
  return out;
}

namespace {

struct AxisSample {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;
};

AxisSample linear_axis(int src, int dst) {
  AxisSample a;
  a.lo.resize(dst);
  a.hi.resize(dst);
  a.frac.resize(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int l = static_cast<int>(std::floor(s));
    a.lo[i] = l;
    a.hi[i] = std::min(l + 1, src - 1);
    a.frac[i] = s - l;
  }
  return a;
}

void check_target(const Shape3& target) {
  if (target.nx < 1 || target.ny < 1 || target.nz < 1) {
    throw InvalidArgument("non-positive target shape " + to_string(target));
  }
}

}  // namespace

Grid3<float> resample(const Grid3<float>& grid, const Shape3& target, Interpolation mode) {
  check_target(target);
  const Shape3 src = shape_of(grid);
  if (src == target) return grid;
  Grid3<float> out(target.nx, target.ny, target.nz);
  if (mode == Interpolation::nearest) {
    std::vector<int> ix(target.nx), iy(target.ny), iz(target.nz);
    for (int i = 0; i < target.nx; ++i) ix[i] = nearest_source_index(i, src.nx, target.nx);
    for (int i = 0; i < target.ny; ++i) iy[i] = nearest_source_index(i, src.ny, target.ny);
    for (int i = 0; i < target.nz; ++i) iz[i] = nearest_source_index(i, src.nz, target.nz);
    for (int z = 0; z < target.nz; ++z)
      for (int y = 0; y < target.ny; ++y)
        for (int x = 0; x < target.nx; ++x) out(x, y, z) = grid(ix[x], iy[y], iz[z]);
    return out;
  }
  const AxisSample ax = linear_axis(src.nx, target.nx);
  const AxisSample ay = linear_axis(src.ny, target.ny);
  const AxisSample az = linear_axis(src.nz, target.nz);
  for (int z = 0; z < target.nz; ++z) {
    const double fz = az.frac[z];
    for (int y = 0; y < target.ny; ++y) {
      const double fy = ay.frac[y];
      for (int x = 0; x < target.nx; ++x) {
        const double fx = ax.frac[x];
        auto lerp_x = [&](int yy, int zz) {
          return (1.0 - fx) * grid(ax.lo[x], yy, zz) + fx * grid(ax.hi[x], yy, zz);
        };
        const double c0 = (1.0 - fy) * lerp_x(ay.lo[y], az.lo[z]) + fy * lerp_x(ay.hi[y], az.lo[z]);
        const double c1 = (1.0 - fy) * lerp_x(ay.lo[y], az.hi[z]) + fy * lerp_x(ay.hi[y], az.hi[z]);
        out(x, y, z) = static_cast<float>((1.0 - fz) * c0 + fz * c1);
      }
    }
  }
  return out;
}

Grid3<std::uint8_t> resample_nearest(const Grid3<std::uint8_t>& grid, const Shape3& target) {
  check_target(target);
  const Shape3 src = shape_of(grid);
  if (src == target) return grid;
  Grid3<std::uint8_t> out(target.nx, target.ny, target.nz);
  std::vector<int> ix(target.nx), iy(target.ny), iz(target.nz);
  for (int i = 0; i < target.nx; ++i) ix[i] = nearest_source_index(i, src.nx, target.nx);
  for (int i = 0; i < target.ny; ++i) iy[i] = nearest_source_index(i, src.ny, target.ny);
  for (int i = 0; i < target.nz; ++i) iz[i] = nearest_source_index(i, src.nz, target.nz);
  for (int z = 0; z < target.nz; ++z)
    for (int y = 0; y < target.ny; ++y)
      for (int x = 0; x < target.nx; ++x) out(x, y, z) = grid(ix[x], iy[y], iz[z]);
  return out;
}

Volume resample(const Volume& volume, const Shape3& target, Interpolation mode) {
  Volume out;
  out.spacing_mm = volume.spacing_mm;
  out.patient_id = volume.patient_id;
  out.scan_id = volume.scan_id;
  out.voxels = resample(volume.voxels, target, mode);
  return out;
}

Mask3D resample(const Mask3D& mask, const Shape3& target) {
  Mask3D out;
  out.source = mask.source;
  out.voxels = resample_nearest(mask.voxels, target);
  return out;
}

}  // namespace planeseg
