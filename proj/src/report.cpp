// SPDX-License-Identifier: Apache-2.0

#include "planeseg/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "planeseg/config.hpp"

namespace planeseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string network_name(Scenario scenario, PlaneAxis plane) {
  return scenario == Scenario::per_plane ? "net_" + plane_tag(plane) : "net_all";
}

std::string network_dir(Scenario scenario, PlaneAxis plane) {
  return scenario == Scenario::per_plane ? plane_tag(plane) : "all";
}

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(p.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

MeanStd mean_std_from_json(const json& j) {
  MeanStd m;
  m.mean = j.at("mean").get<double>();
  m.std = j.at("std").get<double>();
  m.count = j.value("count", 0);
  return m;
}

// Numeric ids sort numerically, everything else lexically after them.
bool id_less(const std::string& a, const std::string& b) {
  auto num = [](const std::string& s, long& v) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
    v = std::stol(s);
    return true;
  };
  long va = 0, vb = 0;
  const bool na = num(a, va), nb = num(b, vb);
  if (na && nb) return va < vb;
  if (na != nb) return na;
  return a < b;
}

// "1_2" -> "2": the scan number within its patient.
std::string scan_label(const std::string& patient, const std::string& scan) {
  const std::string prefix = patient + "_";
  return scan.rfind(prefix, 0) == 0 ? scan.substr(prefix.size()) : scan;
}

}  // namespace

void write_network_metrics(const fs::path& metrics_dir, const NetworkMetrics& m) {
  const fs::path dir = metrics_dir / to_string(m.scenario) / m.network;
  fs::create_directories(dir);
  write_metrics_csv(dir / "per_slice.csv", m.records);
  for (const auto& [fold, h] : m.histories) write_history_csv(dir / ("history_fold" + std::to_string(fold) + ".csv"), h);

  const fs::path summary = metrics_dir / to_string(m.scenario) / "summary.json";
  json doc = fs::exists(summary) ? read_json(summary)
                                 : json{{"scenario", to_string(m.scenario)}, {"threshold", kDscReference},
                                        {"networks", json::object()}};
  json recs = json::array();
  for (const ScanMetrics& r : m.records) recs.push_back(r);
  doc["networks"][m.network] = recs;
  write_text(summary, doc.dump(2) + "\n");
}

std::vector<SummaryRecord> read_summary(const fs::path& summary_json) {
  const json doc = read_json(summary_json);
  std::vector<SummaryRecord> out;
  for (const auto& [net, recs] : doc.at("networks").items()) {
    for (const json& r : recs) {
      SummaryRecord s;
      s.network = net;
      s.patient_id = r.at("patient_id").get<std::string>();
      s.scan_id = r.at("scan_id").get<std::string>();
      s.plane = plane_from_string(r.at("plane").get<std::string>());
      s.fold = fold_from_label(r.at("fold").get<std::string>());
      s.all_slices = mean_std_from_json(r.at("all_slices"));
      s.mid_slices = mean_std_from_json(r.at("mid_slices"));
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::string render_tables(Scenario scenario, const std::vector<SummaryRecord>& records) {
  struct Column {
    std::string header;
    std::string network;
    PlaneAxis plane;
  };
  std::vector<Column> cols;
  for (PlaneAxis p : kAllPlanes) {
    if (scenario == Scenario::per_plane) cols.push_back({network_name(scenario, p), network_name(scenario, p), p});
    else cols.push_back({plane_name(p), "net_all", p});
  }
  using RowKey = std::pair<std::string, std::string>;
  auto row_less = [](const RowKey& a, const RowKey& b) {
    if (a.first != b.first) return id_less(a.first, b.first);
    return id_less(a.second, b.second);
  };
  std::map<RowKey, std::map<std::pair<std::string, PlaneAxis>, const SummaryRecord*>, decltype(row_less)> rows(row_less);
  for (const SummaryRecord& r : records) {
    if (r.fold != kAverageFold) continue;
    rows[{r.patient_id, scan_label(r.patient_id, r.scan_id)}][{r.network, r.plane}] = &r;
  }

  std::ostringstream os;
  os << "## " << (scenario == Scenario::per_plane ? "Scenario 1" : "Scenario 2")
     << ": Quantitative results - Average DSC\n\n";
  for (const bool mid : {false, true}) {
    os << "### " << (mid ? "4 mid-slices" : "All slices") << "\n\n| Patient | Scan |";
    for (const Column& c : cols) os << ' ' << c.header << " |";
    os << "\n|---|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) os << "---|";
    os << '\n';
    for (const auto& [key, cells] : rows) {
      os << "| " << key.first << " | " << key.second << " |";
      for (const Column& c : cols) {
        auto it = cells.find({c.network, c.plane});
        os << ' ' << (it == cells.end() ? "n/a" : format_mean_std(mid ? it->second->mid_slices : it->second->all_slices))
           << " |";
      }
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

void write_report(const fs::path& metrics_dir, const fs::path& out_dir) {
  std::vector<Scenario> scenarios;
  for (Scenario s : {Scenario::per_plane, Scenario::all_planes}) {
    if (fs::exists(metrics_dir / to_string(s) / "summary.json")) scenarios.push_back(s);
  }
  if (scenarios.empty()) throw IoError("no evaluation summaries under " + metrics_dir.string());
  fs::create_directories(out_dir);

  std::string tables;
  std::ostringstream dist;
  dist << "scenario,network,scan_id,plane,fold,slice_index,dsc\n";
  std::set<std::string> series;
  json networks = json::array();
  for (Scenario s : scenarios) {
    tables += render_tables(s, read_summary(metrics_dir / to_string(s) / "summary.json"));
    std::vector<fs::path> net_dirs;
    for (const auto& e : fs::directory_iterator(metrics_dir / to_string(s))) {
      if (e.is_directory()) net_dirs.push_back(e.path());
    }
    std::sort(net_dirs.begin(), net_dirs.end());
    for (const fs::path& nd : net_dirs) {
      const std::string net = nd.filename().string();
      networks.push_back({{"scenario", to_string(s)}, {"network", net}});
      if (fs::exists(nd / "per_slice.csv")) {
        char buf[32];
        for (const MetricsRow& r : read_metrics_csv(nd / "per_slice.csv")) {
          std::snprintf(buf, sizeof buf, "%.6f", r.dsc);
          dist << to_string(s) << ',' << net << ',' << r.scan_id << ',' << plane_tag(r.plane) << ','
               << fold_label(r.fold) << ',' << r.slice_index << ',' << buf << '\n';
          series.insert(fold_label(r.fold));
        }
      }
      std::vector<fs::path> hists;
      for (const auto& e : fs::directory_iterator(nd)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("history_fold", 0) == 0 && e.path().extension() == ".csv") hists.push_back(e.path());
      }
      std::sort(hists.begin(), hists.end());
      for (const fs::path& h : hists) {
        const fs::path dst = out_dir / to_string(s) / net / h.filename();
        fs::create_directories(dst.parent_path());
        write_history_csv(dst, read_history_csv(h));
      }
    }
  }
  write_text(out_dir / "tables.md", tables);
  write_text(out_dir / "dsc_distribution.csv", dist.str());
  std::vector<std::string> ordered(series.begin(), series.end());
  std::sort(ordered.begin(), ordered.end(), [](const std::string& a, const std::string& b) {
    return fold_from_label(a) != kAverageFold && (fold_from_label(b) == kAverageFold || id_less(a, b));
  });
  const json meta{{"x", "slice_index"},
                  {"y", "dsc"},
                  {"series_column", "fold"},
                  {"series", ordered},
                  {"average_series", fold_label(kAverageFold)},
                  {"reference_level", kDscReference},
                  {"reference_label", "DSC = 0.7"},
                  {"networks", networks}};
  write_text(out_dir / "dsc_distribution.meta.json", meta.dump(2) + "\n");
}

}  // namespace planeseg
