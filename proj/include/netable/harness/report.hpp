#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <set>
#include <tuple>
#include <sstream>
#include <string>
#include <vector>

#include "netable/harness/experiment.hpp"

namespace netable::harness {

struct ReportRow {
  std::string label;  // run_label of the config
  std::string split;
  std::string metric;
  std::size_t n = 0;
  double mean = 0.0, min = 0.0, max = 0.0;
};

struct Report {
  std::string task;
  std::vector<ReportRow> rows;

  const ReportRow* find(const std::string& label, const std::string& split, const std::string& metric) const {
    for (const auto& r : rows) {
      if (r.label == label && r.split == split && r.metric == metric) return &r;
    }
    return nullptr;
  }
};

// Mean and range over seeds for every numeric metric, grouped by config
// label. All manifests must come from the same task.
inline Report aggregate(const std::vector<RunManifest>& runs) {
  if (runs.empty()) throw UsageError("nothing to aggregate: no manifests");
  Report rep;
  rep.task = to_string(runs.front().config.task);
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> values;
  static const std::set<std::string> count_keys{"count", "dialogs", "responses", "retrievals", "failures", "oov_count"};
  for (const auto& m : runs) {
    if (to_string(m.config.task) != rep.task) {
      throw UsageError("cannot aggregate runs of different tasks (" + rep.task + " and " + to_string(m.config.task) + ")");
    }
    const std::string label = run_label(m.config);
    for (const auto& [split, rec] : m.metrics.items()) {
      for (const auto& [metric, v] : rec.items()) {
        if (v.is_number() && !count_keys.contains(metric)) {
          values[{label, split, metric}].push_back(v.get<double>());
        }
      }
    }
  }
  for (const auto& [key, vs] : values) {
    ReportRow r;
    std::tie(r.label, r.split, r.metric) = key;
    r.n = vs.size();
    r.min = *std::min_element(vs.begin(), vs.end());
    r.max = *std::max_element(vs.begin(), vs.end());
    double s = 0.0;
    for (double v : vs) s += v;
    r.mean = s / static_cast<double>(vs.size());
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

inline std::string to_csv(const Report& rep) {
  std::ostringstream os;
  os << "task,label,split,metric,n,mean,min,max\n";
  os << std::setprecision(6);
  for (const auto& r : rep.rows) {
    os << rep.task << "," << r.label << "," << r.split << "," << r.metric << "," << r.n << "," << r.mean << ","
       << r.min << "," << r.max << "\n";
  }
  return os.str();
}

// Headline metric per task, used for plots and the dialog grid.
inline std::string headline_metric(const std::string& task) {
  if (task == "structured-qa" || task == "reading") return "accuracy";
  return "per_dialog_plus_db";
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

inline const char* palette(std::size_t i) {
  static const char* c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return c[i % 6];
}

inline std::vector<std::string> labels_of(const Report& rep) {
  std::vector<std::string> out;
  for (const auto& r : rep.rows) {
    if (std::find(out.begin(), out.end(), r.label) == out.end()) out.push_back(r.label);
  }
  return out;
}

}  // namespace detail

// Reading runs: accuracy against OOV percentage, one line per label with
// min-max bars. Other tasks: grouped bars of the headline metric per split.
inline std::string to_svg(const Report& rep) {
  const double w = 640, h = 400, left = 60, right = 180, top = 40, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  const std::string metric = headline_metric(rep.task);
  const auto labels = detail::labels_of(rep);
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left << "\" y=\"22\" font-size=\"14\">" << detail::svg_escape(rep.task) << ": " << metric
     << " (mean over seeds, bars show range)</text>\n";
  auto ypix = [&](double v) { return top + ph * (1.0 - v); };
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    os << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << ypix(v) << "\" y2=\"" << ypix(v)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << ypix(v) + 4 << "\" text-anchor=\"end\">" << static_cast<int>(v * 100)
       << "%</text>\n";
  }
  os << "<line x1=\"" << left << "\" x2=\"" << left << "\" y1=\"" << top << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << top + ph << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";

  if (rep.task == "reading") {
    const auto& ps = reading::oov_percents();
    auto xpix = [&](unsigned p) { return left + pw * p / 100.0; };
    for (unsigned p : ps) {
      os << "<text x=\"" << xpix(p) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << p << "%</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">OOV entities in test</text>\n";
    for (std::size_t li = 0; li < labels.size(); ++li) {
      std::ostringstream path;
      bool first = true;
      for (unsigned p : ps) {
        const ReportRow* r = rep.find(labels[li], reading::oov_split_name(p), metric);
        if (!r) continue;
        path << (first ? "M" : " L") << std::fixed << std::setprecision(1) << xpix(p) << "," << ypix(r->mean);
        first = false;
        os << "<line x1=\"" << xpix(p) << "\" x2=\"" << xpix(p) << "\" y1=\"" << ypix(r->min) << "\" y2=\""
           << ypix(r->max) << "\" stroke=\"" << detail::palette(li) << "\"/>\n";
        os << "<circle cx=\"" << xpix(p) << "\" cy=\"" << ypix(r->mean) << "\" r=\"3\" fill=\"" << detail::palette(li)
           << "\"/>\n";
      }
      if (!first) {
        os << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << detail::palette(li)
           << "\" stroke-width=\"2\"/>\n";
      }
    }
  } else {
    std::vector<std::string> splits;
    for (const auto& r : rep.rows) {
      if (r.metric == metric && r.split != "train" && std::find(splits.begin(), splits.end(), r.split) == splits.end()) {
        splits.push_back(r.split);
      }
    }
    const double group = splits.empty() ? pw : pw / static_cast<double>(splits.size());
    const double bar = labels.empty() ? group : group * 0.8 / static_cast<double>(labels.size());
    for (std::size_t si = 0; si < splits.size(); ++si) {
      const double gx = left + group * static_cast<double>(si);
      os << "<text x=\"" << gx + group / 2 << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
         << detail::svg_escape(splits[si]) << "</text>\n";
      for (std::size_t li = 0; li < labels.size(); ++li) {
        const ReportRow* r = rep.find(labels[li], splits[si], metric);
        if (!r) continue;
        const double x = gx + group * 0.1 + bar * static_cast<double>(li);
        os << "<rect x=\"" << x << "\" y=\"" << ypix(r->mean) << "\" width=\"" << bar * 0.9 << "\" height=\""
           << ypix(0) - ypix(r->mean) << "\" fill=\"" << detail::palette(li) << "\"/>\n";
        os << "<line x1=\"" << x + bar * 0.45 << "\" x2=\"" << x + bar * 0.45 << "\" y1=\"" << ypix(r->min)
           << "\" y2=\"" << ypix(r->max) << "\" stroke=\"black\"/>\n";
      }
    }
  }
  for (std::size_t li = 0; li < labels.size(); ++li) {
    const double y = top + 10 + 18 * static_cast<double>(li);
    os << "<rect x=\"" << left + pw + 15 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
       << detail::palette(li) << "\"/>\n";
    os << "<text x=\"" << left + pw + 30 << "\" y=\"" << y << "\">" << detail::svg_escape(labels[li]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// Dialog results as one row per (task, mode): headline and DB rates on test
// and test_oov, averaged over seeds.
inline std::string dialog_grid_csv(const std::vector<Report>& reports) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "task,label,seeds,per_response_test,per_dialog_test,db_retrieval_test,per_dialog_plus_db_test,"
        "per_response_test_oov,per_dialog_test_oov,db_retrieval_test_oov,per_dialog_plus_db_test_oov\n";
  for (const auto& rep : reports) {
    if (rep.task.rfind("dialog-", 0) != 0) continue;
    for (const auto& label : detail::labels_of(rep)) {
      const ReportRow* any = rep.find(label, "test", "per_dialog_plus_db");
      os << rep.task << "," << label << "," << (any ? any->n : 0);
      for (const char* split : {"test", "test_oov"}) {
        for (const char* m : {"per_response", "per_dialog", "db_retrieval", "per_dialog_plus_db"}) {
          const ReportRow* r = rep.find(label, split, m);
          os << ",";
          if (r) os << r->mean;
        }
      }
      os << "\n";
    }
  }
  return os.str();
}

// Every manifest.json under the given files or directories.
inline std::vector<fs::path> find_manifests(const std::vector<fs::path>& roots) {
  std::vector<fs::path> out;
  for (const auto& r : roots) {
    if (fs::is_regular_file(r)) {
      out.push_back(r);
    } else if (fs::is_directory(r)) {
      for (const auto& e : fs::recursive_directory_iterator(r)) {
        if (e.is_regular_file() && e.path().filename() == "manifest.json") out.push_back(e.path());
      }
    } else {
      throw DataError("no such run path: " + r.string());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Aggregates per task and writes report_<task>.csv/.svg, plus
// dialog_grid.csv when dialog runs are present. Returns written files.
inline std::vector<fs::path> write_reports(const std::vector<RunManifest>& runs, const fs::path& out) {
  std::map<std::string, std::vector<RunManifest>> by_task;
  for (const auto& m : runs) by_task[to_string(m.config.task)].push_back(m);
  if (by_task.empty()) throw UsageError("no manifests to report");
  fs::create_directories(out);
  std::vector<fs::path> files;
  std::vector<Report> reports;
  for (const auto& [task, ms] : by_task) {
    Report rep = aggregate(ms);
    write_file(out / ("report_" + task + ".csv"), to_csv(rep));
    write_file(out / ("report_" + task + ".svg"), to_svg(rep));
    files.push_back(out / ("report_" + task + ".csv"));
    files.push_back(out / ("report_" + task + ".svg"));
    reports.push_back(std::move(rep));
  }
  if (std::any_of(reports.begin(), reports.end(), [](const Report& r) { return r.task.rfind("dialog-", 0) == 0; })) {
    write_file(out / "dialog_grid.csv", dialog_grid_csv(reports));
    files.push_back(out / "dialog_grid.csv");
  }
  return files;
}

}  // namespace netable::harness
