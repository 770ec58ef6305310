// SPDX-License-Identifier: Apache-2.0

#include "planeseg/commands.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "planeseg/checkpoint.hpp"
#include "planeseg/phantom.hpp"

namespace planeseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw InvalidArgument("invalid " + what + " '" + s + "'");
  return v;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Model, train, augment and loss blocks of one run, for evaluation to reuse.
void save_run_settings(const fs::path& path, const ModelConfig& model, const TrainConfig& train) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << json{{"model", model}, {"train", train}, {"augment", train.augment}, {"loss", train.loss}}.dump(2) << '\n';
}

TrainConfig load_run_settings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing run settings " + path.string());
  const json j = json::parse(in);
  TrainConfig t = j.at("train").get<TrainConfig>();
  t.augment = j.at("augment").get<AugmentConfig>();
  t.loss = j.at("loss").get<LossConfig>();
  return t;
}

struct NetworkSpec {
  std::string name;
  std::string dir;
  /// Planes this network is evaluated on.
  std::vector<PlaneAxis> planes;
  /// Plane whose slices train it; unused for all-planes networks.
  PlaneAxis train_plane = PlaneAxis::X_axial;
};

std::vector<NetworkSpec> networks_for(Scenario scenario, const std::vector<PlaneAxis>& planes) {
  std::vector<NetworkSpec> out;
  if (scenario == Scenario::all_planes) {
    out.push_back({network_name(scenario, PlaneAxis::X_axial), network_dir(scenario, PlaneAxis::X_axial),
                   std::vector<PlaneAxis>(kAllPlanes.begin(), kAllPlanes.end())});
  } else {
    for (PlaneAxis p : planes) out.push_back({network_name(scenario, p), network_dir(scenario, p), {p}, p});
  }
  return out;
}

}  // namespace

std::vector<int> parse_fold_list(const std::string& s) {
  std::vector<int> out;
  if (const auto dots = s.find(".."); dots != std::string::npos) {
    const int lo = parse_int(s.substr(0, dots), "fold range");
    const int hi = parse_int(s.substr(dots + 2), "fold range");
    if (lo < 0 || hi < lo) throw InvalidArgument("invalid fold range '" + s + "'");
    for (int f = lo; f <= hi; ++f) out.push_back(f);
    return out;
  }
  for (int f : parse_int_list(s)) {
    if (f < 0) throw InvalidArgument("fold indices must be non-negative");
    out.push_back(f);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(parse_int(cell, "integer"));
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

std::vector<PlaneAxis> parse_plane_option(const std::string& s) {
  if (s == "all-three") return {kAllPlanes.begin(), kAllPlanes.end()};
  return {plane_from_string(s)};
}

std::uint64_t run_phantom(const PhantomCommand& cmd, std::ostream& log) {
  if (cmd.out.empty()) throw InvalidArgument("an output directory is required");
  const DatasetManifest m = generate_cohort(cmd.patients, cmd.scans, cmd.config, cmd.seed, cmd.out, cmd.test_patients);
  const std::uint64_t sum = manifest_checksum(cmd.out / "manifest.json");
  log << "wrote " << m.entries.size() << " scans (" << m.with_role(Role::train).size() << " train, "
      << m.with_role(Role::test).size() << " test) to " << cmd.out.string() << "\n"
      << "manifest checksum " << hex64(sum) << '\n';
  return sum;
}

std::vector<TrainRun> run_train(const TrainCommand& cmd, std::ostream& log) {
  cmd.model.validate();
  TrainConfig tc = cmd.train;
  tc.scenario = cmd.scenario;
  tc.validate();
  const DatasetManifest manifest = load_manifest(cmd.manifest);
  const FoldPlan plan = make_folds(manifest, cmd.k, cmd.fold_seed);
  for (int f : cmd.folds) {
    if (f >= plan.k) throw InvalidArgument("fold " + std::to_string(f) + " outside k=" + std::to_string(plan.k));
  }
  const fs::path scenario_dir = cmd.runs_dir / to_string(cmd.scenario);
  fs::create_directories(scenario_dir);
  save_fold_plan(plan, scenario_dir / "fold_plan.json");

  const ScenarioOptions opts{tc.min_foreground_px};
  std::map<PlaneAxis, SliceDataset> per_plane;
  SliceDataset all;
  if (cmd.scenario == Scenario::per_plane) per_plane = build_scenario1(manifest, opts);
  else all = build_scenario2(manifest, opts);

  SliceSource source(manifest);
  std::vector<TrainRun> runs;
  for (const NetworkSpec& net : networks_for(cmd.scenario, cmd.planes)) {
    const SliceDataset& ds = cmd.scenario == Scenario::per_plane ? per_plane.at(net.train_plane) : all;
    for (int fold : cmd.folds) {
      const fs::path dir = run_directory(cmd.runs_dir, cmd.scenario, net.dir, fold);
      fs::create_directories(dir);
      save_run_settings(dir / "run_config.json", cmd.model, tc);
      TrainOptions to;
      to.run_dir = dir;
      to.plane_label = net.dir;
      to.on_epoch = [&](int epoch, double tr, double va) {
        log << net.name << " fold " << fold << " epoch " << epoch << "/" << tc.epochs << "  train " << std::setprecision(6)
            << tr << "  val " << va << std::endl;
      };
      TrainResult r = train(ds, fold, plan, cmd.model, tc, source, to);
      log << net.name << " fold " << fold << ": best epoch " << r.history.best_epoch << ", val loss "
          << r.history.best_val_loss << ", " << std::fixed << std::setprecision(1) << r.history.wall_seconds << " s"
          << std::defaultfloat << '\n';
      runs.push_back({net.name, fold, dir, std::move(r.history)});
    }
  }
  return runs;
}

std::vector<NetworkMetrics> run_evaluate(const EvaluateCommand& cmd, std::ostream& log) {
  const DatasetManifest manifest = load_manifest(cmd.manifest);
  const auto tests = manifest.with_role(Role::test);
  if (tests.empty()) throw InvalidArgument("manifest has no test-role scans");
  if (cmd.folds.empty()) throw InvalidArgument("no folds to evaluate");
  SliceSource source(manifest);
  std::vector<NetworkMetrics> out;
  for (const NetworkSpec& net : networks_for(cmd.scenario, cmd.planes)) {
    NetworkMetrics nm;
    nm.scenario = cmd.scenario;
    nm.network = net.name;
    std::map<std::pair<std::string, PlaneAxis>, std::vector<ScanMetrics>> by_scan;
    for (int fold : cmd.folds) {
      const fs::path dir = run_directory(cmd.runs_dir, cmd.scenario, net.dir, fold);
      std::optional<Checkpoint> ck;
      TrainConfig tc;
      if (!cmd.oracle) {
        const fs::path ck_path = dir / "checkpoint.bin";
        if (!fs::exists(ck_path)) throw IoError("missing checkpoint " + ck_path.string());
        ck.emplace(load_checkpoint(ck_path));
        tc = load_run_settings(dir / "run_config.json");
      }
      if (fs::exists(dir / "history.csv")) nm.histories.emplace_back(fold, read_history_csv(dir / "history.csv"));
      std::vector<ScanMetrics> fold_records;
      for (const ManifestEntry* e : tests) {
        const Volume& vol = source.volume(e->scan_id);
        const Mask3D& gt = source.mask(e->scan_id);
        std::unique_ptr<SlicePredictor> pred;
        if (cmd.oracle) pred = std::make_unique<OraclePredictor>(gt);
        else pred = std::make_unique<NetworkPredictor>(ck->model, tc.augment, tc.threshold, cmd.batch_size);
        std::vector<ScanMetrics> recs;
        if (cmd.scenario == Scenario::all_planes) {
          const ModelSet set{{PlaneAxis::X_axial, pred.get()}, {PlaneAxis::Y_coronal, pred.get()},
                             {PlaneAxis::Z_sagittal, pred.get()}};
          recs = evaluate_scan(set, vol, gt, cmd.scenario, fold);
        } else {
          for (PlaneAxis p : net.planes) recs.push_back(evaluate_plane(*pred, vol, gt, p, fold));
        }
        for (ScanMetrics& m : recs) {
          log << net.name << " fold " << fold << " scan " << m.scan_id << " " << plane_name(m.plane) << ": all "
              << format_mean_std(m.all_slices) << ", mid " << format_mean_std(m.mid_slices) << '\n';
          by_scan[{m.scan_id, m.plane}].push_back(m);
          fold_records.push_back(m);
          nm.records.push_back(std::move(m));
        }
      }
      if (fs::exists(dir)) write_metrics_csv(dir / "metrics" / "per_slice.csv", fold_records);
    }
    for (const auto& [key, folds] : by_scan) {
      ScanMetrics avg = aggregate_folds(folds);
      log << net.name << " fold-average scan " << avg.scan_id << " " << plane_name(avg.plane) << ": all "
          << format_mean_std(avg.all_slices) << ", mid " << format_mean_std(avg.mid_slices) << '\n';
      nm.records.push_back(std::move(avg));
    }
    write_network_metrics(cmd.out, nm);
    out.push_back(std::move(nm));
  }
  return out;
}

}  // namespace planeseg
