// SPDX-License-Identifier: Apache-2.0

#include "planeseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "planeseg/config.hpp"
#include "planeseg/volume_io.hpp"

namespace planeseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

using Mat3 = Eigen::Matrix3d;

Mat3 rotation(const std::array<double, 3>& deg) {
  const double k = std::numbers::pi / 180.0;
  return (Eigen::AngleAxisd(deg[2] * k, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(deg[1] * k, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(deg[0] * k, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

// Left-hand side of the bent-ellipsoid inequality at voxel p; <= 1 is inside.
struct UterusField {
  Mat3 rt;
  Eigen::Vector3d center;
  double a, b, c, bend;

  explicit UterusField(const PhantomGeometry& g)
      : rt(rotation(g.rotation_deg).transpose()),
        center(g.uterus_center[0], g.uterus_center[1], g.uterus_center[2]),
        a(g.uterus_semi_axes[0]),
        b(g.uterus_semi_axes[1]),
        c(g.uterus_semi_axes[2]),
        bend(g.bend) {}

  double operator()(double x, double y, double z) const {
    const Eigen::Vector3d l = rt * (Eigen::Vector3d(x, y, z) - center);
    const double u = l[0] / a;
    const double v = (l[1] - bend * l[0] * l[0] / a) / b;
    const double w = l[2] / c;
    return u * u + v * v + w * w;
  }
};

bool inside_bladder(const PhantomGeometry& g, double x, double y, double z) {
  const double dx = (x - g.bladder_center[0]) / g.bladder_semi_axes[0];
  const double dy = (y - g.bladder_center[1]) / g.bladder_semi_axes[1];
  const double dz = (z - g.bladder_center[2]) / g.bladder_semi_axes[2];
  return dx * dx + dy * dy + dz * dz <= 1.0;
}

bool fits_margin(const Grid3<std::uint8_t>& m, int margin) {
  const Shape3 s = shape_of(m);
  bool any = false;
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        if (!m(x, y, z)) continue;
        any = true;
        if (x < margin || y < margin || z < margin || x >= s.nx - margin || y >= s.ny - margin ||
            z >= s.nz - margin) {
          return false;
        }
      }
  return any;
}

bool bladder_fits(const PhantomGeometry& g, const Shape3& s, int margin) {
  for (int i = 0; i < 3; ++i) {
    if (g.bladder_center[i] - g.bladder_semi_axes[i] < margin) return false;
    if (g.bladder_center[i] + g.bladder_semi_axes[i] > s[i] - 1 - margin) return false;
  }
  return true;
}

PhantomGeometry sample_geometry(const PhantomConfig& cfg, std::mt19937_64& rng,
                                const std::array<double, 3>& base) {
  PhantomGeometry g;
  for (int i = 0; i < 3; ++i) {
    g.uterus_semi_axes[i] = base[i] * (1.0 + uniform(rng, -cfg.semi_axis_jitter, cfg.semi_axis_jitter));
  }
  for (int i = 0; i < 3; ++i) g.rotation_deg[i] = uniform(rng, -cfg.max_rotation_deg, cfg.max_rotation_deg);
  for (int i = 0; i < 3; ++i) {
    g.uterus_center[i] = 0.5 * (cfg.shape[i] - 1) + uniform(rng, -cfg.max_translation, cfg.max_translation) * cfg.shape[i];
  }
  const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  g.bend = sign * uniform(rng, cfg.bend.lo, cfg.bend.hi);
  const int m = std::min({cfg.shape.nx, cfg.shape.ny, cfg.shape.nz});
  for (int i = 0; i < 3; ++i) g.bladder_semi_axes[i] = uniform(rng, cfg.bladder_semi_axes.lo, cfg.bladder_semi_axes.hi) * m;
  // The bladder sits between the probe (y = 0) and the uterus.
  const double reach = g.uterus_semi_axes[1] + std::abs(g.bend) * g.uterus_semi_axes[0];
  g.bladder_center = g.uterus_center;
  g.bladder_center[0] += uniform(rng, -0.5, 0.5) * g.uterus_semi_axes[0];
  g.bladder_center[1] -= 0.7 * reach + g.bladder_semi_axes[1];
  return g;
}

std::array<double, 3> sample_base_axes(const PhantomConfig& cfg, std::mt19937_64& rng) {
  const int m = std::min({cfg.shape.nx, cfg.shape.ny, cfg.shape.nz});
  std::array<double, 3> axes;
  for (double& a : axes) a = uniform(rng, cfg.uterus_semi_axes.lo, cfg.uterus_semi_axes.hi) * m;
  std::sort(axes.begin(), axes.end(), std::greater<>());
  return axes;
}

void blur_axis(Grid3<float>& g, int axis, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const Shape3 s = shape_of(g);
  const int n = s[axis];
  const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? s.nx : std::int64_t{s.nx} * s.ny);
  std::vector<float> line(n);
  float* data = g.data();
  const int na = axis == 0 ? s.ny : s.nx;
  const int nb = axis == 2 ? s.ny : s.nz;
  for (int bq = 0; bq < nb; ++bq)
    for (int aq = 0; aq < na; ++aq) {
      std::int64_t base;
      if (axis == 0) base = std::int64_t{s.nx} * (aq + std::int64_t{s.ny} * bq);
      else if (axis == 1) base = aq + std::int64_t{s.nx} * s.ny * bq;
      else base = aq + std::int64_t{s.nx} * bq;
      for (int i = 0; i < n; ++i) line[i] = data[base + i * stride];
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * line[std::clamp(i + t, 0, n - 1)];
        data[base + i * stride] = static_cast<float>(acc);
      }
    }
}

Phantom render(const PhantomConfig& cfg, const PhantomGeometry& g, std::mt19937_64& rng) {
  const Shape3 s = cfg.shape;
  Phantom ph;
  ph.geometry = g;
  ph.mask.voxels = make_mask_grid(s);
  ph.mask.source = MaskSource::ground_truth;
  Grid3<float> img = make_grid(s);
  const UterusField field(g);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sig = cfg.speckle_sigma;
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        const double q = field(x, y, z);
        double level = cfg.background_intensity;
        if (q <= 1.0) {
          ph.mask.voxels(x, y, z) = 1;
          level = q < 0.12 ? cfg.endometrium_intensity : cfg.uterus_intensity;
        } else if (inside_bladder(g, x, y, z)) {
          level = cfg.bladder_intensity;
        }
        const double speckle = std::exp(sig * noise(rng) - 0.5 * sig * sig);
        img(x, y, z) = static_cast<float>(level * speckle * std::exp(-cfg.attenuation_coeff * y));
      }
  blur_axis(img, cfg.elevational_axis, cfg.elevational_blur_sigma);
  Volume raw;
  raw.voxels = std::move(img);
  ph.volume = normalize(raw);
  return ph;
}

Phantom generate_with_base(const PhantomConfig& cfg, std::mt19937_64& rng, const std::array<double, 3>& base) {
  cfg.validate();
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const PhantomGeometry g = sample_geometry(cfg, rng, base);
    if (!bladder_fits(g, cfg.shape, cfg.margin)) continue;
    if (!fits_margin(rasterize_uterus(cfg.shape, g), cfg.margin)) continue;
    return render(cfg, g, rng);
  }
  throw InvalidArgument("phantom geometry does not fit the volume margins after " +
                        std::to_string(cfg.max_retries) + " attempts");
}

void fnv_update(std::uint64_t& h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001B3ull;
  }
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ull;

void fnv_file(std::uint64_t& h, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    fnv_update(h, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
}

}  // namespace

void PhantomConfig::validate() const {
  if (shape.nx < 8 || shape.ny < 8 || shape.nz < 8) throw InvalidArgument("phantom shape components must be >= 8");
  auto check = [](const Range& r, const char* what) {
    if (!(r.lo > 0.0 && r.hi >= r.lo)) throw InvalidArgument(std::string(what) + " range must be positive and ordered");
  };
  check(uterus_semi_axes, "uterus_semi_axes");
  check(bend, "bend");
  check(bladder_semi_axes, "bladder_semi_axes");
  if (uterus_semi_axes.hi >= 0.5) throw InvalidArgument("uterus semi-axes must stay below half the volume");
  if (!(semi_axis_jitter >= 0.0 && semi_axis_jitter < 0.5)) throw InvalidArgument("semi_axis_jitter must lie in [0, 0.5)");
  if (!(max_rotation_deg >= 0.0) || !(max_translation >= 0.0)) throw InvalidArgument("pose ranges must be non-negative");
  if (!(speckle_sigma >= 0.0) || !(elevational_blur_sigma >= 0.0) || !(attenuation_coeff >= 0.0)) {
    throw InvalidArgument("speckle_sigma, elevational_blur_sigma and attenuation_coeff must be non-negative");
  }
  if (elevational_axis < 0 || elevational_axis > 2) throw InvalidArgument("elevational_axis must be 0, 1 or 2");
  if (margin < 0 || max_retries < 1) throw InvalidArgument("margin must be >= 0 and max_retries >= 1");
}

double PhantomGeometry::uterus_volume() const {
  return 4.0 / 3.0 * std::numbers::pi * uterus_semi_axes[0] * uterus_semi_axes[1] * uterus_semi_axes[2];
}

Grid3<std::uint8_t> rasterize_uterus(const Shape3& s, const PhantomGeometry& g) {
  Grid3<std::uint8_t> m = make_mask_grid(s);
  const UterusField field(g);
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) m(x, y, z) = field(x, y, z) <= 1.0 ? 1 : 0;
  return m;
}

Phantom generate_phantom(const PhantomConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const auto base = sample_base_axes(config, rng);
  return generate_with_base(config, rng, base);
}

Phantom generate_phantom(const PhantomConfig& config, std::uint64_t seed, const std::array<double, 3>& base_semi_axes) {
  std::mt19937_64 rng(seed);
  return generate_with_base(config, rng, base_semi_axes);
}

DatasetManifest generate_cohort(int n_patients, const std::vector<int>& scans_per_patient, const PhantomConfig& config,
                                std::uint64_t seed, const fs::path& out_dir,
                                const std::set<std::string>& test_patients) {
  config.validate();
  if (n_patients < 1) throw InvalidArgument("need at least one patient");
  if (static_cast<int>(scans_per_patient.size()) != n_patients) {
    throw InvalidArgument("scans_per_patient has " + std::to_string(scans_per_patient.size()) + " entries for " +
                          std::to_string(n_patients) + " patients");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  for (int p = 1; p <= n_patients; ++p) {
    const int scans = scans_per_patient[p - 1];
    if (scans < 1) throw InvalidArgument("every patient needs at least one scan");
    std::mt19937_64 patient_rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(p))));
    const auto base = sample_base_axes(config, patient_rng);
    for (int s = 1; s <= scans; ++s) {
      const std::uint64_t scan_seed = splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(p) << 32) | s));
      Phantom ph = generate_phantom(config, scan_seed, base);
      const std::string pid = std::to_string(p);
      const std::string sid = pid + "_" + std::to_string(s);
      ph.volume.patient_id = pid;
      ph.volume.scan_id = sid;
      const fs::path image = out_dir / (sid + ".raw");
      save_volume(ph.volume, image);
      save_mask(ph.mask, mask_path_for(image), pid, sid);
    }
  }
  DatasetManifest manifest = build_manifest(out_dir, test_patients);
  save_manifest(manifest, out_dir / "manifest.json");
  json meta;
  meta["phantom"] = config;
  meta["seed"] = seed;
  meta["n_patients"] = n_patients;
  meta["scans_per_patient"] = scans_per_patient;
  meta["test_patients"] = test_patients;
  std::ofstream out(out_dir / "phantom.config.json");
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (out_dir / "phantom.config.json").string());
  return manifest;
}

std::uint64_t file_checksum(const fs::path& path) {
  std::uint64_t h = kFnvOffset;
  fnv_file(h, path);
  return h;
}

std::uint64_t manifest_checksum(const fs::path& manifest_path) {
  std::uint64_t h = kFnvOffset;
  fnv_file(h, manifest_path);
  const DatasetManifest m = load_manifest(manifest_path);
  for (const auto& e : m.entries) {
    for (const fs::path& rel : {e.volume_path, e.mask_path}) {
      const fs::path p = m.resolve(rel);
      fnv_file(h, p);
      fs::path sidecar = p;
      if (p.extension() == ".raw" && fs::exists(sidecar.replace_extension(".json"))) fnv_file(h, sidecar);
    }
  }
  return h;
}

}  // namespace planeseg
