// SPDX-License-Identifier: Apache-2.0
//
// planeseg phantom | train | evaluate | report
//
// Exit status: 0 success, 1 runtime failure, 2 usage error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "planeseg/commands.hpp"

namespace fs = std::filesystem;
using namespace planeseg;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return as_usage([&] { return load_run_config(path); });
}

Shape3 parse_shape(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) {
    const int n = parse_int_list(s).at(0);
    return {n, n, n};
  }
  const auto x2 = s.find('x', x + 1);
  if (x2 == std::string::npos) throw InvalidArgument("shape must be N or NxNxN");
  return {parse_int_list(s.substr(0, x)).at(0), parse_int_list(s.substr(x + 1, x2 - x - 1)).at(0),
          parse_int_list(s.substr(x2 + 1)).at(0)};
}

std::set<std::string> parse_id_set(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');) {
    if (!cell.empty()) out.insert(cell);
  }
  return out;
}

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, CommonFlags& f, const std::string& out_help) {
  app->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--out", f.out, out_help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plane-wise 2D U-Net segmentation of 3D ultrasound volumes"};
  app.require_subcommand(1);

  // phantom ---------------------------------------------------------------
  CommonFlags ph_flags;
  std::optional<int> ph_patients;
  std::string ph_scans, ph_tests, ph_shape;
  auto* ph = app.add_subcommand("phantom", "Generate a synthetic phantom cohort");
  add_common(ph, ph_flags, "Output directory (required)");
  ph->add_option("--patients", ph_patients, "Number of patients");
  ph->add_option("--scans", ph_scans, "Scans per patient, comma separated");
  ph->add_option("--test-patients", ph_tests, "Test patient ids, comma separated");
  ph->add_option("--shape", ph_shape, "Volume shape, N or NxNxN");

  // train -----------------------------------------------------------------
  CommonFlags tr_flags;
  std::string tr_manifest, tr_scenario = "per_plane", tr_plane, tr_folds = "0..4";
  std::optional<int> tr_k, tr_epochs, tr_batch, tr_resize, tr_crop;
  std::optional<double> tr_lr, tr_wd, tr_width;
  std::optional<std::uint64_t> tr_fold_seed;
  auto* tr = app.add_subcommand("train", "Train plane networks over cross-validation folds");
  add_common(tr, tr_flags, "Runs directory");
  tr->add_option("--manifest", tr_manifest, "Dataset manifest (default <data_dir>/manifest.json)");
  tr->add_option("--scenario", tr_scenario, "per_plane or all_planes")->check(CLI::IsMember({"per_plane", "all_planes"}));
  tr->add_option("--plane", tr_plane, "X, Y, Z or all-three (per_plane only)");
  tr->add_option("--folds", tr_folds, "Folds to train, e.g. 0..4 or 0,2");
  tr->add_option("--k", tr_k, "Number of folds");
  tr->add_option("--fold-seed", tr_fold_seed, "Seed of the fold assignment (default: --seed)");
  tr->add_option("--epochs", tr_epochs, "Training epochs");
  tr->add_option("--lr", tr_lr, "Learning rate");
  tr->add_option("--wd", tr_wd, "Weight decay");
  tr->add_option("--batch-size", tr_batch, "Batch size");
  tr->add_option("--width-mult", tr_width, "Encoder width multiplier");
  tr->add_option("--resize", tr_resize, "Slice resize size");
  tr->add_option("--crop", tr_crop, "Centre crop size");

  // evaluate --------------------------------------------------------------
  CommonFlags ev_flags;
  std::string ev_manifest, ev_runs, ev_scenario = "per_plane", ev_plane, ev_folds = "0..4";
  bool ev_oracle = false;
  auto* ev = app.add_subcommand("evaluate", "Evaluate trained networks on the test scans");
  add_common(ev, ev_flags, "Metrics directory");
  ev->add_option("--manifest", ev_manifest, "Dataset manifest (default <data_dir>/manifest.json)");
  ev->add_option("--runs", ev_runs, "Runs directory");
  ev->add_option("--scenario", ev_scenario, "per_plane or all_planes")->check(CLI::IsMember({"per_plane", "all_planes"}));
  ev->add_option("--plane", ev_plane, "X, Y, Z or all-three (per_plane only)");
  ev->add_option("--folds", ev_folds, "Folds to evaluate");
  ev->add_flag("--oracle", ev_oracle, "Replay the ground truth instead of a network");

  // report ----------------------------------------------------------------
  CommonFlags rp_flags;
  std::string rp_metrics;
  auto* rp = app.add_subcommand("report", "Render tables and plot data from evaluation output");
  add_common(rp, rp_flags, "Report directory");
  rp->add_option("--metrics", rp_metrics, "Metrics directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto planes_for = [](const std::string& scenario, const std::string& plane) {
    if (scenario == "all_planes") {
      if (!plane.empty()) throw UsageError("--plane cannot be combined with --scenario all_planes");
      return std::vector<PlaneAxis>(kAllPlanes.begin(), kAllPlanes.end());
    }
    return as_usage([&] { return parse_plane_option(plane.empty() ? "all-three" : plane); });
  };
  auto manifest_for = [](const std::string& flag, const RunConfig& rc) {
    return flag.empty() ? rc.paths.data_dir / "manifest.json" : fs::path(flag);
  };

  try {
    if (ph->parsed()) {
      const RunConfig rc = load_config(ph_flags.config);
      PhantomCommand cmd;
      if (rc.phantom) cmd.config = *rc.phantom;
      cmd.test_patients = rc.test_patients;
      as_usage([&] {
        if (ph_flags.out.empty()) throw InvalidArgument("--out is required");
        cmd.out = ph_flags.out;
        if (ph_patients) cmd.patients = *ph_patients;
        if (!ph_scans.empty()) cmd.scans = parse_int_list(ph_scans);
        else if (ph_patients && *ph_patients != static_cast<int>(cmd.scans.size())) cmd.scans.assign(*ph_patients, 2);
        if (!ph_tests.empty()) cmd.test_patients = parse_id_set(ph_tests);
        if (!ph_shape.empty()) cmd.config.shape = parse_shape(ph_shape);
        if (ph_flags.seed) cmd.seed = *ph_flags.seed;
        if (static_cast<int>(cmd.scans.size()) != cmd.patients) {
          throw InvalidArgument("--scans lists " + std::to_string(cmd.scans.size()) + " patients, --patients is " +
                                std::to_string(cmd.patients));
        }
        cmd.config.validate();
        return 0;
      });
      run_phantom(cmd, std::cout);
    } else if (tr->parsed()) {
      const RunConfig rc = load_config(tr_flags.config);
      TrainCommand cmd;
      as_usage([&] {
        cmd.scenario = scenario_from_string(tr_scenario);
        cmd.planes = planes_for(tr_scenario, tr_plane);
        cmd.folds = parse_fold_list(tr_folds);
        cmd.manifest = manifest_for(tr_manifest, rc);
        cmd.runs_dir = tr_flags.out.empty() ? rc.paths.runs_dir : fs::path(tr_flags.out);
        cmd.k = tr_k.value_or(rc.folds);
        cmd.model = rc.model;
        cmd.train = rc.train;
        if (tr_flags.seed) cmd.train.seed = *tr_flags.seed;
        cmd.fold_seed = tr_fold_seed.value_or(cmd.train.seed);
        if (tr_epochs) cmd.train.epochs = *tr_epochs;
        if (tr_lr) cmd.train.learning_rate = *tr_lr;
        if (tr_wd) cmd.train.weight_decay = *tr_wd;
        if (tr_batch) cmd.train.batch_size = *tr_batch;
        if (tr_width) cmd.model.width_mult = *tr_width;
        if (tr_resize) cmd.train.augment.resize_to = *tr_resize;
        if (tr_crop) cmd.train.augment.crop_to = *tr_crop;
        cmd.train.scenario = cmd.scenario;
        cmd.model.validate();
        cmd.train.validate();
        for (int f : cmd.folds) {
          if (f >= cmd.k) throw InvalidArgument("fold " + std::to_string(f) + " outside k=" + std::to_string(cmd.k));
        }
        return 0;
      });
      run_train(cmd, std::cout);
    } else if (ev->parsed()) {
      const RunConfig rc = load_config(ev_flags.config);
      EvaluateCommand cmd;
      as_usage([&] {
        cmd.scenario = scenario_from_string(ev_scenario);
        cmd.planes = planes_for(ev_scenario, ev_plane);
        cmd.folds = parse_fold_list(ev_folds);
        cmd.manifest = manifest_for(ev_manifest, rc);
        cmd.runs_dir = ev_runs.empty() ? rc.paths.runs_dir : fs::path(ev_runs);
        cmd.out = ev_flags.out.empty() ? rc.paths.metrics_dir : fs::path(ev_flags.out);
        cmd.oracle = ev_oracle;
        return 0;
      });
      run_evaluate(cmd, std::cout);
    } else if (rp->parsed()) {
      const RunConfig rc = load_config(rp_flags.config);
      const fs::path metrics = rp_metrics.empty() ? rc.paths.metrics_dir : fs::path(rp_metrics);
      const fs::path out = rp_flags.out.empty() ? rc.paths.report_dir : fs::path(rp_flags.out);
      write_report(metrics, out);
      std::cout << "report written to " << out.string() << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
