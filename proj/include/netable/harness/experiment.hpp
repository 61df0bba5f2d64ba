#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "netable/core/checkpoint.hpp"
#include "netable/harness/config.hpp"
#include "netable/harness/io.hpp"

namespace netable::harness {

using ad::Graph;
using ad::Var;

namespace fs = std::filesystem;

// ---- datasets ---------------------------------------------------------------

inline std::string oov_file(unsigned p) { return "test_oov" + std::to_string(p) + ".jsonl"; }

// Writes the dataset of `task` generated from the data stream of `seed`.
// Reading corpora also get one renamed test file per OOV percentage in
// `oov_percents` (p = 0 is test.jsonl itself).
inline std::vector<fs::path> generate_data(TaskId task, std::uint64_t seed, const fs::path& dir,
                                           const std::vector<unsigned>& oov_percents = reading::oov_percents()) {
  const std::uint64_t data_seed = split_seed(seed).data;
  fs::create_directories(dir);
  if (task == TaskId::structured_qa) {
    qa::save_dataset(qa::generate_dataset(data_seed), dir);
  } else if (is_dialog(task)) {
    dialog::save_task(dialog::generate_task(dialog_task_number(task), data_seed), dir);
  } else {
    const auto corpus = reading::generate_corpus(data_seed);
    reading::save_corpus(corpus, dir);
    const auto seen = reading::seen_entities(corpus);
    for (unsigned p : oov_percents) {
      if (p == 0) continue;
      reading::save_questions(
          reading::make_oov_testset(corpus.test, reading::OovSpec{p, reading::default_oov_lexicon()}, seen),
          dir / oov_file(p));
    }
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// sha256 of every regular file in `dir`, keyed by file name.
inline std::map<std::string, std::string> dataset_hashes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist; run gen-data");
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) out[e.path().filename().string()] = file_sha256(e.path());
  }
  if (out.empty()) throw DataError("dataset directory " + dir.string() + " is empty; run gen-data");
  return out;
}

inline fs::path default_data_dir(const fs::path& out, TaskId task, std::uint64_t seed) {
  return out / "data" / to_string(task) / ("seed-" + std::to_string(seed));
}

inline fs::path resolve_data_dir(const ExperimentConfig& c, const fs::path& out, std::uint64_t seed) {
  return c.data_dir.empty() ? default_data_dir(out, c.task, seed) : fs::path(c.data_dir);
}

// ---- manifest ---------------------------------------------------------------

struct RunManifest {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  SeedSet seeds;
  std::string data_dir;
  std::map<std::string, std::string> datasets;  // file name -> sha256
  std::string checkpoint;
  TrainResult train;
  json metrics = json::object();  // split -> metric record
  double wall_clock_seconds = 0.0;
};

inline json to_json(const RunManifest& m) {
  json epochs = json::array();
  for (const auto& e : m.train.epochs) epochs.push_back({{"epoch", e.epoch}, {"loss", e.mean_loss}, {"monitor", e.monitor}});
  return {{"format", "netable-manifest"},
          {"label", run_label(m.config)},
          {"task", to_string(m.config.task)},
          {"config", to_json(m.config)},
          {"seed", m.seed},
          {"seeds", {{"data", m.seeds.data}, {"init", m.seeds.init}, {"shuffle", m.seeds.shuffle}}},
          {"data_dir", m.data_dir},
          {"datasets", m.datasets},
          {"checkpoint", m.checkpoint},
          {"epochs", std::move(epochs)},
          {"best_epoch", m.train.best_epoch},
          {"stopped_early", m.train.stopped_early},
          {"metrics", m.metrics},
          {"wall_clock_seconds", m.wall_clock_seconds}};
}

inline RunManifest manifest_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != "netable-manifest") throw DataError("not a run manifest");
  RunManifest m;
  try {
    m.config = config_from_json(j.at("config"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.seeds = split_seed(m.seed);
    m.data_dir = j.at("data_dir").get<std::string>();
    m.datasets = j.at("datasets").get<std::map<std::string, std::string>>();
    m.checkpoint = j.at("checkpoint").get<std::string>();
    for (const auto& e : j.at("epochs")) {
      m.train.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("loss").get<double>(), e.at("monitor").get<double>()});
    }
    m.train.best_epoch = j.at("best_epoch").get<std::size_t>();
    m.train.stopped_early = j.at("stopped_early").get<bool>();
    m.metrics = j.at("metrics");
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

inline RunManifest load_manifest(const fs::path& p) {
  try {
    return manifest_from_json(json::parse(read_file(p)));
  } catch (const json::parse_error& e) {
    throw DataError("cannot parse manifest " + p.string() + ": " + e.what());
  }
}

inline fs::path run_dir(const fs::path& out, const ExperimentConfig& c, std::uint64_t seed) {
  return out / "runs" / run_label(c) / ("seed-" + std::to_string(seed));
}

// ---- task adapters ----------------------------------------------------------

namespace detail {

// A loaded dataset plus the model built on it; unused members stay empty.
struct Loaded {
  std::optional<qa::QaDataset> qa;
  std::optional<dialog::DialogData> dialog;
  std::optional<reading::ReadingCorpus> reading;
  std::map<std::string, std::vector<reading::ClozeQuestion>> reading_tests;  // "test", "oov20", ...
  std::unique_ptr<qa::QaModel> qa_model;
  std::unique_ptr<dialog::DialogModel> dialog_model;
  std::unique_ptr<reading::Reader> reader;

  ad::ParameterStore& params() {
    if (qa_model) return qa_model->params();
    if (dialog_model) return dialog_model->params();
    return reader->params();
  }
};

inline Loaded load(const ExperimentConfig& c, const fs::path& dir, std::uint64_t init_seed) {
  Loaded l;
  if (c.task == TaskId::structured_qa) {
    l.qa = qa::load_dataset(dir);
    l.qa_model = std::make_unique<qa::QaModel>(l.qa->db, to_qa_config(c), init_seed);
  } else if (is_dialog(c.task)) {
    l.dialog = dialog::load_task(dir);
    if (l.dialog->task != dialog_task_number(c.task)) {
      throw DataError(dir.string() + " holds dialog task " + std::to_string(l.dialog->task) + ", not " +
                      to_string(c.task));
    }
    l.dialog_model = std::make_unique<dialog::DialogModel>(*l.dialog, to_dialog_config(c), init_seed);
  } else {
    l.reading = reading::load_corpus(dir);
    l.reading_tests["test"] = l.reading->test;
    for (unsigned p : reading::oov_percents()) {
      if (p != 0 && fs::exists(dir / oov_file(p))) {
        l.reading_tests[reading::oov_split_name(p)] = reading::load_questions(dir / oov_file(p));
      }
    }
    l.reader = std::make_unique<reading::Reader>(*l.reading, to_reader_config(c), init_seed);
  }
  return l;
}

inline std::vector<std::string> split_names(const Loaded& l) {
  if (l.qa) return {"train", "test"};
  if (l.dialog) return {"train", "valid", "test", "test_oov"};
  std::vector<std::string> s{"train", "valid"};
  for (const auto& [k, v] : l.reading_tests) s.push_back(k);
  return s;
}

inline json evaluate_split(Loaded& l, const std::string& split, std::size_t jobs) {
  if (l.qa) {
    const auto seen = qa::training_entities(l.qa->train);
    if (split == "train") return qa::to_json(qa::evaluate(*l.qa_model, l.qa->train, seen, jobs));
    if (split == "test") return qa::to_json(qa::evaluate(*l.qa_model, l.qa->test, seen, jobs));
  } else if (l.dialog) {
    for (dialog::Split s : {dialog::Split::train, dialog::Split::valid, dialog::Split::test, dialog::Split::test_oov}) {
      if (split == dialog::to_string(s)) {
        return dialog::to_json(dialog::evaluate(*l.dialog_model, l.dialog->splits.at(s), jobs));
      }
    }
  } else {
    if (split == "train") return reading::to_json(reading::evaluate(*l.reader, l.reading->train, jobs));
    if (split == "valid") return reading::to_json(reading::evaluate(*l.reader, l.reading->valid, jobs));
    if (auto it = l.reading_tests.find(split); it != l.reading_tests.end()) {
      return reading::to_json(reading::evaluate(*l.reader, it->second, jobs));
    }
  }
  throw UsageError("split '" + split + "' is not available for this task");
}

inline TrainResult train(Loaded& l, const ExperimentConfig& c, std::uint64_t shuffle_seed, std::size_t jobs,
                         bool verbose) {
  if (l.qa) {
    // The QA loop also evaluates; keep only its training record.
    return qa::train_and_evaluate(*l.qa_model, *l.qa, shuffle_seed, jobs, verbose).train;
  }
  if (l.dialog) {
    (void)c;
    const dialog::DialogConfig& cfg = l.dialog_model->config();
    ad::Optimizer opt(l.dialog_model->params(), cfg.optimizer);
    LoopOptions lo;
    lo.max_epochs = cfg.max_epochs;
    lo.batch_size = cfg.batch_size;
    lo.shuffle_seed = shuffle_seed;
    lo.rule = StopRule::validation_patience;
    lo.patience = cfg.patience;
    lo.verbose = verbose;
    lo.label = to_string(c.task) + "/" + nn::to_string(cfg.mode);
    const auto& tr = l.dialog->splits.at(dialog::Split::train);
    const auto& va = l.dialog->splits.at(dialog::Split::valid);
    auto& model = *l.dialog_model;
    return run_training<dialog::Dialog>(
        model.params(), opt, tr, [&](Graph& g, const dialog::Dialog& d) { return model.loss(g, d); },
        [&] { return dialog::validation_score(dialog::evaluate(model, va, jobs)); }, lo);
  }
  return reading::train(*l.reader, *l.reading, shuffle_seed, jobs, verbose);
}

}  // namespace detail

struct TrainOptions {
  std::size_t jobs = 1;
  bool verbose = false;
};

// Trains one seed of `c`, writes checkpoint.json and manifest.json under
// run_dir(out, c, seed) and returns the manifest.
inline RunManifest train_run(const ExperimentConfig& c, std::uint64_t seed, const fs::path& out,
                             const TrainOptions& o = {}) {
  validate(c);
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest m;
  m.config = c;
  m.seed = seed;
  m.seeds = split_seed(seed);
  const fs::path data = resolve_data_dir(c, out, seed);
  m.data_dir = data.string();
  m.datasets = dataset_hashes(data);
  detail::Loaded l = detail::load(c, data, m.seeds.init);
  m.train = detail::train(l, c, m.seeds.shuffle, o.jobs, o.verbose);
  for (const auto& s : detail::split_names(l)) m.metrics[s] = detail::evaluate_split(l, s, o.jobs);

  const fs::path dir = run_dir(out, c, seed);
  fs::create_directories(dir);
  m.checkpoint = (dir / "checkpoint.json").string();
  json meta{{"config", to_json(c)}, {"data_dir", m.data_dir}, {"datasets", m.datasets}};
  ad::save_checkpoint(m.checkpoint, ad::make_checkpoint(l.params(), nullptr, seed, meta));
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(dir / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

inline fs::path manifest_path(const RunManifest& m) { return fs::path(m.checkpoint).parent_path() / "manifest.json"; }

// Reloads a checkpoint and scores `splits` (all available splits when empty).
// The dataset must hash-match the one recorded at training time unless
// `data_override` points elsewhere, in which case only the task must agree.
inline json evaluate_checkpoint(const fs::path& checkpoint, const std::vector<std::string>& splits,
                                const std::optional<fs::path>& data_override = std::nullopt, std::size_t jobs = 1) {
  const ad::CheckpointData ck = ad::load_checkpoint(checkpoint);
  ExperimentConfig c;
  fs::path data;
  std::map<std::string, std::string> recorded;
  try {
    c = config_from_json(ck.meta.at("config"));
    data = ck.meta.at("data_dir").get<std::string>();
    recorded = ck.meta.at("datasets").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  if (data_override) {
    data = *data_override;
  } else {
    const auto now = dataset_hashes(data);
    for (const auto& [file, hash] : recorded) {
      auto it = now.find(file);
      if (it == now.end() || it->second != hash) {
        throw DataError("dataset file " + file + " in " + data.string() + " changed since training");
      }
    }
  }
  detail::Loaded l = detail::load(c, data, split_seed(ck.seed).init);
  ad::apply_parameters(ck, l.params());
  json out = json::object();
  for (const auto& s : splits.empty() ? detail::split_names(l) : splits) out[s] = detail::evaluate_split(l, s, jobs);
  return out;
}

}  // namespace netable::harness
