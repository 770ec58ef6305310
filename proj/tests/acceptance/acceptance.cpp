// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Long-running: the phantom training
// criteria take tens of minutes on one core.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "planeseg/commands.hpp"
#include "planeseg/dataset.hpp"
#include "planeseg/loss.hpp"
#include "planeseg/phantom.hpp"
#include "planeseg/pipeline.hpp"
#include "planeseg/report.hpp"

using namespace planeseg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  fs::path work;
  int epochs_x = 20;
  int epochs_all = 12;
  std::ofstream log;
};

ModelConfig desk_model() {
  ModelConfig m;
  m.width_mult = 0.25;
  m.decoder_channels = {64, 32, 24, 16, 8};
  return m;
}

// ---------------------------------------------------------------------------
// 1-3: exact properties

Outcome dice_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::bernoulli_distribution coin(0.5);
  using Arr = Eigen::ArrayXXd;
  auto brute = [](const Arr& g, const Arr& p) {
    std::int64_t inter = 0, sg = 0, sp = 0;
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) {
        const bool a = g(r, c) == 1.0, b = p(r, c) == 1.0;
        inter += a && b;
        sg += a;
        sp += b;
      }
    return (2.0 * static_cast<double>(inter) + 1.0) / (static_cast<double>(sg + sp) + 1.0);
  };
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    Arr g(8, 8), p(8, 8);
    // Vary the fill so sparse and dense masks both show up.
    std::bernoulli_distribution fill(0.05 + 0.9 * (i % 10) / 9.0);
    for (Eigen::Index j = 0; j < 64; ++j) {
      g.data()[j] = fill(rng);
      p.data()[j] = coin(rng) ? fill(rng) : g.data()[j];
    }
    mismatches += dice_coefficient(g, p) != brute(g, p);
  }
  std::mt19937_64 one(5);
  Arr g(8, 8);
  for (Eigen::Index j = 0; j < 64; ++j) g.data()[j] = coin(one);
  const Arr empty = Arr::Zero(8, 8);
  Arr four = Arr::Zero(8, 8);
  four.block(3, 3, 2, 2) = 1.0;
  const bool forced = dice_coefficient(g, g) == 1.0 && dice_coefficient(empty, empty) == 1.0 &&
                      dice_coefficient(four, empty) == 0.2 && dice_coefficient(empty, four) == 0.2;
  const double t = seconds_since(t0);
  return {mismatches == 0 && forced && t < 5.0,
          std::to_string(mismatches) + " mismatches in 1000 pairs, forced cases " + (forced ? "ok" : "wrong") + ", " +
              fmt(t) + " s"};
}

Outcome loss_gradient() {
  const auto t0 = Clock::now();
  LossConfig cfg;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::bernoulli_distribution coin(0.4);
  double worst = 0.0;
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::ArrayXXd y(8, 8), p(8, 8);
    for (Eigen::Index i = 0; i < 64; ++i) {
      y.data()[i] = coin(rng);
      p.data()[i] = u(rng);
    }
    const Eigen::ArrayXXd g = combined_loss_gradient(p, y, cfg);
    for (Eigen::Index i = 0; i < 64; ++i) {
      Eigen::ArrayXXd hi = p, lo = p;
      hi.data()[i] += h;
      lo.data()[i] -= h;
      const double fd = (combined_loss(hi, y, cfg) - combined_loss(lo, y, cfg)) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(g.data()[i]), 1e-12});
      worst = std::max(worst, std::abs(fd - g.data()[i]) / denom);
    }
  }
  const double t = seconds_since(t0);
  std::ostringstream os;
  os << "max relative error " << std::scientific << std::setprecision(2) << worst << " over 20 instances, "
     << fmt(t) << " s";
  return {worst < 1e-4 && t < 30.0, os.str()};
}

Outcome slice_round_trip() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  std::bernoulli_distribution coin(0.3);
  int failures = 0;
  for (int v = 0; v < 50; ++v) {
    Mask3D m;
    m.voxels = make_mask_grid({32, 32, 32});
    for (Eigen::Index i = 0; i < m.voxels.size(); ++i) m.voxels.data()[i] = coin(rng);
    Volume vol;
    vol.voxels = make_grid({32, 32, 32});
    for (PlaneAxis plane : kAllPlanes) {
      std::vector<Mask2> slices;
      for (SliceRecord& r : slice_volume(vol, m, plane)) slices.push_back(std::move(r.mask));
      const Mask3D back = stack_slices(slices, plane);
      const bool same = back.shape() == m.shape() &&
                        std::memcmp(back.voxels.data(), m.voxels.data(), static_cast<std::size_t>(m.voxels.size())) == 0;
      failures += !same;
    }
  }
  const double t = seconds_since(t0);
  return {failures == 0 && t < 10.0,
          std::to_string(failures) + " of 150 volume/plane round trips differ, " + fmt(t) + " s"};
}

// ---------------------------------------------------------------------------
// 4: split hygiene

struct SplitRun {
  std::uint64_t checksum = 0;
  std::map<std::string, int> assignments;
};

SplitRun make_split(const fs::path& dir, Settings& s) {
  PhantomCommand ph;
  ph.config.shape = {32, 32, 32};
  ph.out = dir;
  ph.seed = 7;
  SplitRun r;
  r.checksum = run_phantom(ph, s.log);
  r.assignments = make_folds(load_manifest(dir / "manifest.json"), 5, 0).assignments;
  return r;
}

Outcome split_hygiene(Settings& s, std::optional<SplitRun>& keep) {
  keep = make_split(s.work / "table1", s);
  const DatasetManifest man = load_manifest(s.work / "table1" / "manifest.json");
  const auto train = man.with_role(Role::train), test = man.with_role(Role::test);
  std::set<std::string> test_patients;
  for (const ManifestEntry* e : test) test_patients.insert(e->patient_id);

  const FoldPlan plan = make_folds(man, 5, 0);
  const std::vector<int> sizes = plan.fold_sizes();
  std::map<std::string, int> validated;
  for (int f = 0; f < 5; ++f)
    for (const std::string& id : plan.validation_scans(f)) ++validated[id];
  bool once = validated.size() == train.size();
  for (const auto& [id, n] : validated) once = once && n == 1;

  auto patient_of = [&](const std::string& scan) { return man.find(scan).patient_id; };
  int leaks = 0;
  for (int f = 0; f < 5; ++f) {
    for (const std::string& id : plan.training_scans(f)) leaks += test_patients.count(patient_of(id)) > 0;
    for (const std::string& id : plan.validation_scans(f)) leaks += test_patients.count(patient_of(id)) > 0;
  }
  for (const auto& [plane, ds] : build_scenario1(man))
    for (const std::string& id : ds.scan_ids()) leaks += test_patients.count(patient_of(id)) > 0;
  for (const std::string& id : build_scenario2(man).scan_ids()) leaks += test_patients.count(patient_of(id)) > 0;

  const bool counts = train.size() == 35 && test.size() == 3 && man.entries.size() == 38;
  const bool sevens = sizes == std::vector<int>{7, 7, 7, 7, 7};
  const bool right_test = test_patients == std::set<std::string>{"1", "10"};
  std::string size_list;
  for (int n : sizes) size_list += (size_list.empty() ? "" : "/") + std::to_string(n);
  return {counts && sevens && once && right_test && leaks == 0,
          std::to_string(train.size()) + "/" + std::to_string(test.size()) + " train/test, folds " + size_list +
              ", each scan validated once: " + (once ? "yes" : "no") + ", test-patient leaks " +
              std::to_string(leaks)};
}

// ---------------------------------------------------------------------------
// 5: overfit probe

struct OverfitRun {
  std::vector<double> losses;
  double eval_loss = 0.0;
  double seconds = 0.0;
};

OverfitRun overfit_probe() {
  PhantomConfig pc;
  pc.shape = {64, 64, 64};
  const Phantom ph = generate_phantom(pc, 5);
  TrainConfig tc;
  tc.augment.resize_to = 64;
  tc.augment.crop_to = 64;
  auto model = build_model(desk_model(), 1);
  Trainer trainer(model, tc);
  std::vector<Image2> images;
  std::vector<Mask2> masks;
  for (int i = 0; i < 8; ++i) {
    auto [im, mk] = eval_transform(extract_plane(ph.volume, ph.mask, PlaneAxis::X_axial, 24 + 2 * i), tc.augment);
    images.push_back(std::move(im));
    masks.push_back(std::move(mk));
  }
  std::vector<const Image2*> ip;
  std::vector<const Mask2*> mp;
  for (int i = 0; i < 8; ++i) {
    ip.push_back(&images[i]);
    mp.push_back(&masks[i]);
  }
  OverfitRun r;
  const auto t0 = Clock::now();
  for (int s = 0; s < 300; ++s) r.losses.push_back(trainer.step(ip, mp));
  r.seconds = seconds_since(t0);
  r.eval_loss = trainer.evaluate(ip, mp);
  return r;
}

Outcome overfit(std::optional<OverfitRun>& keep) {
  keep = overfit_probe();
  const OverfitRun& r = *keep;
  int first = -1;
  for (std::size_t i = 0; i < r.losses.size(); ++i)
    if (r.losses[i] < 0.05) {
      first = static_cast<int>(i) + 1;
      break;
    }
  std::string detail = first > 0 ? "training loss < 0.05 from step " + std::to_string(first) : "never below 0.05";
  detail += ", final " + fmt(r.losses.back(), 4) + " (eval-mode " + fmt(r.eval_loss, 4) + "), " + fmt(r.seconds, 1) + " s";
  return {first > 0 && r.seconds < 600.0, detail};
}

// ---------------------------------------------------------------------------
// 6, 7: phantom end to end

const std::set<std::string> kE2eTest{"1", "6"};

std::uint64_t make_e2e_cohort(const fs::path& dir, Settings& s) {
  PhantomCommand ph;
  ph.patients = 6;
  ph.scans = {2, 2, 2, 2, 2, 2};
  ph.seed = 11;
  ph.test_patients = kE2eTest;
  ph.out = dir;
  return run_phantom(ph, s.log);
}

TrainCommand e2e_train(const fs::path& data, const fs::path& runs, Scenario sc, int epochs) {
  TrainCommand tr;
  tr.manifest = data / "manifest.json";
  tr.runs_dir = runs;
  tr.scenario = sc;
  tr.planes = {PlaneAxis::X_axial};
  tr.folds = {0};
  tr.k = 5;
  tr.fold_seed = 3;
  tr.model = desk_model();
  tr.train.epochs = epochs;
  tr.train.seed = 1;
  tr.train.augment.resize_to = 72;
  tr.train.augment.crop_to = 64;
  return tr;
}

struct E2eRun {
  std::uint64_t checksum = 0;
  std::vector<double> val_loss;
};

// Mean over held-out scans of the per-scan fold-0 statistics.
struct PlaneScore {
  double all = 0.0;
  double mid = 0.0;
  int scans = 0;
  std::string per_scan;
};

std::map<PlaneAxis, PlaneScore> score(const std::vector<NetworkMetrics>& nets) {
  std::map<PlaneAxis, PlaneScore> out;
  for (const NetworkMetrics& nm : nets)
    for (const ScanMetrics& m : nm.records) {
      if (m.fold != 0) continue;
      PlaneScore& p = out[m.plane];
      p.all += m.all_slices.mean;
      p.mid += m.mid_slices.mean;
      ++p.scans;
      p.per_scan += " " + m.scan_id + "=" + fmt(m.mid_slices.mean, 2) + "/" + fmt(m.all_slices.mean, 2);
    }
  for (auto& [plane, p] : out) {
    p.all /= p.scans;
    p.mid /= p.scans;
  }
  return out;
}

Outcome e2e_per_plane(Settings& s, std::optional<E2eRun>& keep) {
  const auto t0 = Clock::now();
  E2eRun run;
  run.checksum = make_e2e_cohort(s.work / "cohort", s);
  const TrainCommand tr = e2e_train(s.work / "cohort", s.work / "runs", Scenario::per_plane, s.epochs_x);
  const auto runs = run_train(tr, s.log);
  run.val_loss = runs.at(0).history.val_loss;
  keep = run;

  EvaluateCommand ev;
  ev.manifest = tr.manifest;
  ev.runs_dir = tr.runs_dir;
  ev.out = s.work / "metrics";
  ev.planes = {PlaneAxis::X_axial};
  ev.folds = {0};
  const auto nets = run_evaluate(ev, s.log);
  const PlaneScore p = score(nets).at(PlaneAxis::X_axial);
  const double t = seconds_since(t0);
  const bool ok = p.scans == 4 && p.mid >= 0.80 && p.all >= 0.65 && p.mid >= p.all && t <= 3600.0;
  return {ok, "net_X " + std::to_string(s.epochs_x) + " epochs: held-out mid " + fmt(p.mid) + ", all " + fmt(p.all) +
                  " over " + std::to_string(p.scans) + " scans (mid/all:" + p.per_scan + "), " + fmt(t / 60, 1) +
                  " min"};
}

Outcome e2e_all_planes(Settings& s) {
  const auto t0 = Clock::now();
  if (!fs::exists(s.work / "cohort" / "manifest.json")) make_e2e_cohort(s.work / "cohort", s);
  const TrainCommand tr = e2e_train(s.work / "cohort", s.work / "runs", Scenario::all_planes, s.epochs_all);
  const auto runs = run_train(tr, s.log);

  EvaluateCommand ev;
  ev.manifest = tr.manifest;
  ev.runs_dir = tr.runs_dir;
  ev.out = s.work / "metrics";
  ev.scenario = Scenario::all_planes;
  ev.folds = {0};
  const auto nets = run_evaluate(ev, s.log);
  const auto scores = score(nets);
  write_report(s.work / "metrics", s.work / "report");
  const std::string tables = slurp(s.work / "report" / "tables.md");
  const bool columns = tables.find("| Patient | Scan | Axial | Coronal | Sagittal |") != std::string::npos;
  const double t = seconds_since(t0);

  bool ok = runs.size() == 1 && nets.size() == 1 && nets[0].network == "net_all" && scores.size() == 3 && columns &&
            t <= 3600.0;
  std::string detail = "net_all " + std::to_string(s.epochs_all) + " epochs, one checkpoint:";
  for (const auto& [plane, p] : scores) {
    ok = ok && p.scans == 4 && p.mid >= 0.75;
    detail += " " + plane_name(plane) + " mid " + fmt(p.mid) + " (all " + fmt(p.all) + ")";
  }
  detail += std::string(", plane columns ") + (columns ? "present" : "missing") + ", " + fmt(t / 60, 1) + " min";
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 8: report fidelity over a real five-fold run at small scale

Outcome report_fidelity(Settings& s) {
  const fs::path root = s.work / "small";
  PhantomCommand ph;
  ph.patients = 6;
  ph.scans = {2, 2, 2, 2, 2, 2};
  ph.seed = 12;
  ph.test_patients = kE2eTest;
  ph.config.shape = {32, 32, 32};
  ph.out = root / "data";
  run_phantom(ph, s.log);

  TrainCommand tr;
  tr.manifest = root / "data" / "manifest.json";
  tr.runs_dir = root / "runs";
  tr.planes = {kAllPlanes.begin(), kAllPlanes.end()};
  tr.model = desk_model();
  tr.train.epochs = 2;
  tr.train.augment.resize_to = 32;
  tr.train.augment.crop_to = 32;
  run_train(tr, s.log);
  EvaluateCommand ev;
  ev.manifest = tr.manifest;
  ev.runs_dir = tr.runs_dir;
  ev.out = root / "metrics";
  ev.planes = tr.planes;
  run_evaluate(ev, s.log);

  const auto t0 = Clock::now();
  write_report(root / "metrics", root / "report");
  const double t = seconds_since(t0);

  const std::string tables = slurp(root / "report" / "tables.md");
  const bool blocks = tables.find("### All slices") != std::string::npos &&
                      tables.find("### 4 mid-slices") != std::string::npos &&
                      tables.find(" ± ") != std::string::npos &&
                      tables.find("| Patient | Scan | net_X | net_Y | net_Z |") != std::string::npos;

  std::ifstream dist(root / "report" / "dsc_distribution.csv");
  std::string line;
  std::getline(dist, line);
  const bool header = line == "scenario,network,scan_id,plane,fold,slice_index,dsc";
  std::set<std::string> series;
  while (std::getline(dist, line)) {
    std::stringstream ss(line);
    std::vector<std::string> cells;
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() == 7) series.insert(cells[4]);
  }
  const bool five_plus_one = series == std::set<std::string>{"0", "1", "2", "3", "4", "avg"};
  const auto meta = nlohmann::json::parse(slurp(root / "report" / "dsc_distribution.meta.json"));
  const bool reference = meta.at("reference_level").get<double>() == 0.7;

  int curves = 0;
  for (const char* net : {"net_X", "net_Y", "net_Z"})
    for (int f = 0; f < 5; ++f) {
      const fs::path h = root / "report" / "per_plane" / net / ("history_fold" + std::to_string(f) + ".csv");
      if (fs::exists(h) && read_history_csv(h).val_loss.size() == 2) ++curves;
    }
  const bool ok = blocks && header && five_plus_one && reference && curves == 15 && t < 5.0;
  return {ok, std::string("tables ") + (blocks ? "ok" : "wrong") + ", " + std::to_string(series.size()) +
                  " distribution series, reference 0.7 " + (reference ? "present" : "missing") + ", " +
                  std::to_string(curves) + "/15 loss curves, report in " + fmt(t) + " s"};
}

// ---------------------------------------------------------------------------
// 9: determinism

Outcome determinism(Settings& s, std::optional<SplitRun>& split, std::optional<OverfitRun>& probe,
                    std::optional<E2eRun>& e2e) {
  if (!split) split = make_split(s.work / "table1", s);
  if (!probe) probe = overfit_probe();
  if (!e2e) {
    E2eRun r;
    r.checksum = make_e2e_cohort(s.work / "cohort", s);
    r.val_loss = run_train(e2e_train(s.work / "cohort", s.work / "runs", Scenario::per_plane, s.epochs_x), s.log)
                     .at(0)
                     .history.val_loss;
    e2e = r;
  }
  const SplitRun split2 = make_split(s.work / "table1_again", s);
  const OverfitRun probe2 = overfit_probe();
  const std::uint64_t cohort2 = make_e2e_cohort(s.work / "cohort_again", s);
  const auto runs2 =
      run_train(e2e_train(s.work / "cohort_again", s.work / "runs_again", Scenario::per_plane, s.epochs_x), s.log);

  const bool manifests = split2.checksum == split->checksum && split2.assignments == split->assignments &&
                         cohort2 == e2e->checksum;
  const bool probe_same = probe2.losses == probe->losses;
  const bool val_same = runs2.at(0).history.val_loss == e2e->val_loss;
  return {manifests && probe_same && val_same,
          std::string("manifests and folds ") + (manifests ? "identical" : "differ") + ", overfit losses " +
              (probe_same ? "identical" : "differ") + ", net_X validation losses " + (val_same ? "identical" : "differ") +
              " (final " + fmt(runs2.at(0).history.val_loss.back(), 6) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planeseg acceptance run"};
  Settings s;
  std::string only;
  s.work = fs::temp_directory_path() / "planeseg_acceptance";
  app.add_option("--work", s.work, "scratch directory (wiped first)");
  app.add_option("--only", only, "comma-separated criteria to run, default all");
  app.add_option("--epochs-x", s.epochs_x, "net_X epochs for criteria 6 and 9")->check(CLI::Range(1, 40));
  app.add_option("--epochs-all", s.epochs_all, "net_all epochs for criterion 7")->check(CLI::Range(1, 40));
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  if (only.empty()) {
    for (int i = 1; i <= 9; ++i) selected.insert(i);
  } else {
    for (int i : parse_int_list(only)) selected.insert(i);
  }
  fs::remove_all(s.work);
  fs::create_directories(s.work);
  s.log.open(s.work / "acceptance.log");
  std::cout << "work directory " << s.work.string() << std::endl;

  std::optional<SplitRun> split;
  std::optional<OverfitRun> probe;
  std::optional<E2eRun> e2e;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"dice oracle", dice_oracle},
      {"loss gradient", loss_gradient},
      {"slice/stack round trip", slice_round_trip},
      {"split hygiene", [&] { return split_hygiene(s, split); }},
      {"overfit probe", [&] { return overfit(probe); }},
      {"end to end, per-plane", [&] { return e2e_per_plane(s, e2e); }},
      {"end to end, all planes", [&] { return e2e_all_planes(s); }},
      {"report fidelity", [&] { return report_fidelity(s); }},
      {"determinism", [&] { return determinism(s, split, probe, e2e); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
