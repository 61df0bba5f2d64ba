#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/harness/config.hpp"
#include "netable/harness/experiment.hpp"
#include "netable/harness/report.hpp"
#include "netable/harness/selftest.hpp"

namespace netable::cli {

namespace fs = std::filesystem;
using harness::json;

enum ExitCode : int { ok = 0, usage = 2, data = 3, divergence = 4, invariant = 5 };

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage:
    case ErrorKind::config: return usage;
    case ErrorKind::data:
    case ErrorKind::checkpoint:
    case ErrorKind::generation:
    case ErrorKind::retrieval: return data;
    case ErrorKind::divergence: return divergence;
    default: return invariant;
  }
}

// Output root: --out, else $NETABLE_OUT_DIR, else ./out.
inline fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("NETABLE_OUT_DIR"); env && *env) return env;
  return "out";
}

inline unsigned check_oov_percent(int p) {
  const auto& ok_values = reading::oov_percents();
  if (p < 0 || std::find(ok_values.begin(), ok_values.end(), static_cast<unsigned>(p)) == ok_values.end()) {
    throw UsageError("--oov-percent must be one of 0, 20, 40, 60, 80, 100 (got " + std::to_string(p) + ")");
  }
  return static_cast<unsigned>(p);
}

struct Options {
  std::string task, mode, encoder, config, data, out, checkpoint, split, format = "json";
  std::vector<std::string> sets, runs;
  std::optional<std::uint64_t> seed;
  int oov_percent = -1;
  std::size_t jobs = 1;
  bool verbose = false;
};

inline harness::ExperimentConfig resolve_config(const Options& o) {
  std::optional<harness::TaskId> file_task;
  if (!o.config.empty()) file_task = harness::task_in_file(o.config);
  if (o.task.empty() && !file_task) throw UsageError("--task is required (or a config file with a task line)");
  const harness::TaskId task = o.task.empty() ? *file_task : harness::parse_task(o.task);
  harness::ExperimentConfig c = harness::defaults_for(task);
  if (!o.config.empty()) harness::apply_file(c, o.config);
  if (!o.mode.empty()) harness::apply_setting(c, "mode", o.mode);
  if (!o.encoder.empty()) harness::apply_setting(c, "encoder", o.encoder);
  if (!o.data.empty()) harness::apply_setting(c, "data_dir", o.data);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    harness::apply_setting(c, harness::detail::trim(kv.substr(0, eq)), harness::detail::trim(kv.substr(eq + 1)));
  }
  if (o.seed) c.seeds = {*o.seed};
  harness::validate(c);
  return c;
}

inline int cmd_gen_data(const Options& o, std::ostream& out) {
  if (o.task.empty()) throw UsageError("gen-data needs --task");
  const harness::TaskId task = harness::parse_task(o.task);
  const std::uint64_t seed = o.seed.value_or(1);
  std::vector<unsigned> percents = reading::oov_percents();
  if (o.oov_percent >= 0) {
    const unsigned p = check_oov_percent(o.oov_percent);
    if (task != harness::TaskId::reading) throw UsageError("--oov-percent applies to the reading task only");
    percents = {p};
  }
  const fs::path root = output_root(o.out);
  const fs::path dir = o.data.empty() ? harness::default_data_dir(root, task, seed) : fs::path(o.data);
  const auto files = harness::generate_data(task, seed, dir, percents);
  json manifest{{"format", "netable-data"},
                {"task", harness::to_string(task)},
                {"seed", seed},
                {"data_seed", split_seed(seed).data},
                {"datasets", harness::dataset_hashes(dir)}};
  const fs::path mpath = dir.parent_path() / (dir.filename().string() + ".data.json");
  harness::write_file(mpath, manifest.dump(2) + "\n");
  out << "data: " << dir.string() << " (" << files.size() << " files)\n";
  out << "manifest: " << mpath.string() << "\n";
  return ok;
}

inline int cmd_train(const Options& o, std::ostream& out) {
  const harness::ExperimentConfig c = resolve_config(o);
  const fs::path root = output_root(o.out);
  for (std::uint64_t s : c.seeds) {
    const auto m = harness::train_run(c, s, root, {o.jobs, o.verbose});
    out << "manifest: " << harness::manifest_path(m).string() << "\n";
  }
  return ok;
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw UsageError("eval needs --checkpoint");
  std::vector<std::string> splits;
  if (!o.split.empty()) splits.push_back(o.split);
  if (o.oov_percent >= 0) {
    const unsigned p = check_oov_percent(o.oov_percent);
    if (!o.split.empty()) throw UsageError("give either --split or --oov-percent");
    splits.push_back(reading::oov_split_name(p));
  }
  std::optional<fs::path> data;
  if (!o.data.empty()) data = o.data;
  const json metrics = harness::evaluate_checkpoint(o.checkpoint, splits, data, o.jobs);
  const fs::path dir = o.out.empty() && !std::getenv("NETABLE_OUT_DIR") ? fs::path(o.checkpoint).parent_path()
                                                                         : output_root(o.out);
  fs::create_directories(dir);
  std::string tag = splits.empty() ? "all" : splits.front();
  const fs::path mpath = dir / ("eval-" + tag + ".json");
  json record{{"format", "netable-eval"}, {"checkpoint", o.checkpoint}, {"metrics", metrics}};
  harness::write_file(mpath, record.dump(2) + "\n");
  if (o.format == "json") {
    out << metrics.dump(2) << "\n";
  } else {
    for (const auto& [split, m] : metrics.items()) {
      out << split << ":";
      for (const auto& [k, v] : m.items()) out << " " << k << "=" << v.dump();
      out << "\n";
    }
  }
  out << "manifest: " << mpath.string() << "\n";
  return ok;
}

inline int cmd_report(const Options& o, std::ostream& out) {
  if (o.runs.empty()) throw UsageError("report needs --runs");
  std::vector<fs::path> roots(o.runs.begin(), o.runs.end());
  std::vector<harness::RunManifest> ms;
  for (const auto& p : harness::find_manifests(roots)) ms.push_back(harness::load_manifest(p));
  if (ms.empty()) throw DataError("no manifest.json found under the given --runs");
  const fs::path dir = output_root(o.out) / "report";
  for (const auto& f : harness::write_reports(ms, dir)) out << "wrote: " << f.string() << "\n";
  json index{{"format", "netable-report"}, {"runs", ms.size()}};
  harness::write_file(dir / "report.json", index.dump(2) + "\n");
  out << "manifest: " << (dir / "report.json").string() << "\n";
  return ok;
}

inline int cmd_selftest(const Options& o, std::ostream& out) {
  const fs::path dir = output_root(o.out) / "selftest";
  const auto lines = harness::run_selftest(dir);
  bool all = true;
  json rec = json::array();
  for (const auto& l : lines) {
    out << (l.passed ? "PASS " : "FAIL ") << l.name << (l.detail.empty() ? "" : ": " + l.detail) << "\n";
    all = all && l.passed;
    rec.push_back({{"name", l.name}, {"passed", l.passed}, {"detail", l.detail}});
  }
  harness::write_file(dir / "selftest.json", json{{"format", "netable-selftest"}, {"checks", rec}}.dump(2) + "\n");
  out << "manifest: " << (dir / "selftest.json").string() << "\n";
  return all ? ok : invariant;
}

// Parses argv and runs one subcommand. Errors go to `err` as one JSON line.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"NE-Table experiments: data generation, training, evaluation and reports", "netable"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--out", o.out, "output root (default $NETABLE_OUT_DIR or ./out)");
  };
  auto add_seed = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "master seed");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a dataset");
  gen->add_option("--task", o.task, "structured-qa, dialog-1, dialog-2, dialog-4 or reading")->required();
  add_seed(gen);
  gen->add_option("--data", o.data, "dataset directory (default <out>/data/<task>/seed-<seed>)");
  gen->add_option("--oov-percent", o.oov_percent, "reading: write only this OOV test split");
  add_common(gen);

  auto* train = app.add_subcommand("train", "train one run per seed");
  train->add_option("--task", o.task, "task id");
  train->add_option("--mode", o.mode, "with-ne or without-ne");
  train->add_option("--encoder", o.encoder, "reading: bow or lstm");
  train->add_option("--config", o.config, "key = value config file");
  train->add_option("--set", o.sets, "extra key=value overrides")->take_all();
  train->add_option("--data", o.data, "dataset directory");
  train->add_option("--jobs", o.jobs, "evaluation threads")->check(CLI::PositiveNumber);
  train->add_flag("--verbose", o.verbose, "log every epoch");
  add_seed(train);
  add_common(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint.json written by train")->required();
  eval->add_option("--split", o.split, "split name (default: all)");
  eval->add_option("--oov-percent", o.oov_percent, "reading: evaluate the renamed test split");
  eval->add_option("--data", o.data, "dataset directory to use instead of the recorded one");
  eval->add_option("--jobs", o.jobs, "evaluation threads")->check(CLI::PositiveNumber);
  eval->add_option("--format", o.format, "json or text")->check(CLI::IsMember({"json", "text"}));
  add_common(eval);

  auto* report = app.add_subcommand("report", "aggregate run manifests into CSV and SVG");
  report->add_option("--runs", o.runs, "manifest files or directories")->required()->take_all();
  add_common(report);

  auto* self = app.add_subcommand("selftest", "gradient checks, toy DB oracle and OOV round-trip");
  add_common(self);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return usage;
  }

  try {
    if (*gen) return cmd_gen_data(o, out);
    if (*train) return cmd_train(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*report) return cmd_report(o, out);
    if (*self) return cmd_selftest(o, out);
  } catch (const Error& e) {
    err << json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << json{{"error", "data"}, {"message", e.what()}}.dump() << "\n";
    return data;
  } catch (const std::exception& e) {
    err << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return invariant;
  }
  return usage;
}

}  // namespace netable::cli
