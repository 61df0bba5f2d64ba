#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>

#include "netable/harness/config.hpp"
#include "netable/harness/experiment.hpp"
#include "netable/harness/report.hpp"
#include "netable/harness/selftest.hpp"

using namespace netable;
using namespace netable::harness;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("netable_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig quick_qa(nn::NeMode mode = nn::NeMode::with_ne) {
  auto c = defaults_for(TaskId::structured_qa);
  c.mode = mode;
  c.max_epochs = 4;
  return c;
}

RunManifest fake_run(TaskId task, nn::NeMode mode, std::uint64_t seed, double acc) {
  RunManifest m;
  m.config = defaults_for(task);
  m.config.mode = mode;
  m.seed = seed;
  m.metrics = json{{"test", {{"accuracy", acc}, {"count", 100}}}, {"train", {{"accuracy", 1.0}, {"count", 400}}}};
  return m;
}

}  // namespace

TEST(Seeds, SplitIsDeterministicAndDistinct) {
  const auto a = split_seed(3), b = split_seed(3), c = split_seed(4);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.init, b.init);
  EXPECT_NE(a.data, a.init);
  EXPECT_NE(a.init, a.shuffle);
  EXPECT_NE(a.data, c.data);
}

TEST(ParallelMap, PreservesOrder) {
  std::atomic<int> calls = 0;
  const auto out = parallel_map<std::size_t>(50, 4, [&](std::size_t i) {
    ++calls;
    return i * i;
  });
  ASSERT_EQ(out.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(out[i], i * i);
  EXPECT_EQ(calls.load(), 50);
}

TEST(Config, TaskNamesRoundTrip) {
  for (auto t : {TaskId::structured_qa, TaskId::dialog1, TaskId::dialog2, TaskId::dialog4, TaskId::reading}) {
    EXPECT_EQ(parse_task(to_string(t)), t);
  }
  EXPECT_THROW(parse_task("dialog-3"), UsageError);
  EXPECT_EQ(dialog_task_number(TaskId::dialog4), 4);
}

TEST(Config, DefaultsPerTask) {
  EXPECT_EQ(defaults_for(TaskId::structured_qa).max_epochs, 200u);
  EXPECT_EQ(defaults_for(TaskId::dialog1).max_epochs, 100u);
  EXPECT_EQ(defaults_for(TaskId::reading).max_epochs, 50u);
  EXPECT_EQ(defaults_for(TaskId::reading).window, 5u);
  for (auto t : {TaskId::structured_qa, TaskId::dialog2, TaskId::reading}) EXPECT_NO_THROW(validate(defaults_for(t)));
}

TEST(Config, SettingsParseAndRecordOverrides) {
  auto c = defaults_for(TaskId::reading);
  apply_setting(c, "encoder", "lstm");
  apply_setting(c, "seeds", "1, 2,3");
  apply_setting(c, "learning_rate", "0.02");
  EXPECT_EQ(c.encoder, reading::WindowEncoder::lstm);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.02);
  EXPECT_EQ(c.overrides, (std::vector<std::string>{"encoder", "seeds", "learning_rate"}));
  EXPECT_EQ(run_label(c), "reading_with-ne_lstm");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  auto qa = defaults_for(TaskId::structured_qa);
  EXPECT_THROW(apply_setting(qa, "window", "5"), UsageError);  // reading key
  EXPECT_THROW(apply_setting(qa, "dropout", "0.1"), UsageError);
  EXPECT_THROW(apply_setting(qa, "hops", "two"), UsageError);
  EXPECT_THROW(apply_setting(qa, "task", "reading"), UsageError);
  qa.hops = 2;
  EXPECT_THROW(validate(qa), ConfigError);
  auto r = defaults_for(TaskId::reading);
  r.window = 4;
  EXPECT_THROW(validate(r), ConfigError);
  auto d = defaults_for(TaskId::dialog1);
  d.hidden_units = d.embedding_size + 1;
  EXPECT_THROW(validate(d), ConfigError);
}

TEST(Config, FileParsing) {
  const auto dir = scratch("config");
  write_file(dir / "run.cfg", "# dialog run\ntask = dialog-2\nmode = without-ne   # baseline\n\nhops=2\n");
  EXPECT_EQ(task_in_file(dir / "run.cfg"), std::optional<TaskId>(TaskId::dialog2));
  auto c = defaults_for(TaskId::dialog2);
  apply_file(c, dir / "run.cfg");
  EXPECT_EQ(c.mode, nn::NeMode::without_ne);
  EXPECT_EQ(c.hops, 2u);
  write_file(dir / "bad.cfg", "hops 3\n");
  EXPECT_THROW(apply_file(c, dir / "bad.cfg"), UsageError);
  EXPECT_THROW(apply_file(c, dir / "missing.cfg"), DataError);
  fs::remove_all(dir);
}

TEST(Config, JsonRoundTrip) {
  auto c = defaults_for(TaskId::dialog4);
  c.mode = nn::NeMode::without_ne;
  c.seeds = {4, 5};
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Experiment, GenerateDataWritesExpectedFiles) {
  const auto dir = scratch("gen");
  generate_data(TaskId::structured_qa, 7, dir / "qa");
  for (const char* f : {"db.tsv", "train.jsonl", "test.jsonl"}) EXPECT_TRUE(fs::exists(dir / "qa" / f)) << f;
  generate_data(TaskId::reading, 7, dir / "rd", {0, 40});
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "test_oov40.jsonl"}) {
    EXPECT_TRUE(fs::exists(dir / "rd" / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir / "rd" / "test_oov0.jsonl"));
  // same seed, same bytes
  generate_data(TaskId::structured_qa, 7, dir / "qa2");
  EXPECT_EQ(dataset_hashes(dir / "qa"), dataset_hashes(dir / "qa2"));
  EXPECT_THROW(dataset_hashes(dir / "nothing"), DataError);
  fs::remove_all(dir);
}

TEST(Experiment, TrainWithoutDataIsDataError) {
  const auto out = scratch("nodata");
  EXPECT_THROW(train_run(quick_qa(), 1, out), DataError);
  fs::remove_all(out);
}

// Full pipeline: rerunning train reproduces metrics and checkpoint bytes; eval
// is repeatable and leaves the checkpoint untouched.
TEST(Experiment, TrainIsBitIdenticalAndEvalIsPure) {
  const auto out = scratch("determinism");
  const auto c = quick_qa();
  generate_data(c.task, 3, default_data_dir(out, c.task, 3));
  const auto a = train_run(c, 3, out);
  const std::string ck_a = read_file(a.checkpoint);
  const auto b = train_run(c, 3, out, {2, false});
  EXPECT_EQ(a.metrics.dump(), b.metrics.dump());
  EXPECT_EQ(read_file(b.checkpoint), ck_a);
  EXPECT_EQ(a.train.epochs.size(), b.train.epochs.size());

  const auto e1 = evaluate_checkpoint(a.checkpoint, {"test"});
  const auto e2 = evaluate_checkpoint(a.checkpoint, {"test"}, std::nullopt, 3);
  EXPECT_EQ(e1.dump(), e2.dump());
  EXPECT_EQ(e1["test"].dump(), a.metrics["test"].dump());
  EXPECT_EQ(file_sha256(a.checkpoint), sha256_hex(ck_a));

  const auto m = load_manifest(manifest_path(a));
  EXPECT_EQ(m.metrics.dump(), a.metrics.dump());
  EXPECT_EQ(m.datasets, a.datasets);

  // dataset edited after training
  write_file(fs::path(a.data_dir) / "test.jsonl", read_file(fs::path(a.data_dir) / "test.jsonl") + "\n");
  EXPECT_THROW(evaluate_checkpoint(a.checkpoint, {"test"}), DataError);
  fs::remove_all(out);
}

TEST(Experiment, UnknownSplitRejected) {
  const auto out = scratch("split");
  const auto c = quick_qa();
  generate_data(c.task, 2, default_data_dir(out, c.task, 2));
  const auto a = train_run(c, 2, out);
  EXPECT_THROW(evaluate_checkpoint(a.checkpoint, {"oov40"}), UsageError);
  fs::remove_all(out);
}

TEST(Report, ThreeSeedsBecomeOneRowWithRange) {
  std::vector<RunManifest> runs;
  std::uint64_t s = 1;
  for (double acc : {0.9, 1.0, 0.8}) runs.push_back(fake_run(TaskId::structured_qa, nn::NeMode::with_ne, s++, acc));
  const auto rep = aggregate(runs);
  const auto* row = rep.find("structured-qa_with-ne", "test", "accuracy");
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(row->n, 3u);
  EXPECT_NEAR(row->mean, 0.9, 1e-12);
  EXPECT_DOUBLE_EQ(row->min, 0.8);
  EXPECT_DOUBLE_EQ(row->max, 1.0);
  EXPECT_EQ(rep.find("structured-qa_with-ne", "test", "count"), nullptr);
  const auto csv = to_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "task,label,split,metric,n,mean,min,max");
  EXPECT_NE(csv.find("structured-qa,structured-qa_with-ne,test,accuracy,3,0.9,0.8,1"), std::string::npos);
}

TEST(Report, MixedTasksRejected) {
  EXPECT_THROW(aggregate({fake_run(TaskId::structured_qa, nn::NeMode::with_ne, 1, 1.0),
                          fake_run(TaskId::reading, nn::NeMode::with_ne, 1, 1.0)}),
               UsageError);
  EXPECT_THROW(aggregate({}), UsageError);
}

TEST(Report, ReadingSvgDrawsOovCurve) {
  std::vector<RunManifest> runs;
  for (auto mode : {nn::NeMode::with_ne, nn::NeMode::without_ne}) {
    auto m = fake_run(TaskId::reading, mode, 1, 0.7);
    for (unsigned p : reading::oov_percents()) m.metrics[reading::oov_split_name(p)] = {{"accuracy", 0.7 - p / 200.0}};
    runs.push_back(m);
  }
  const auto svg = to_svg(aggregate(runs));
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("OOV entities in test"), std::string::npos);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), 'M') >= 2, true);  // one path per label
  EXPECT_NE(svg.find("reading_without-ne_bow"), std::string::npos);
}

TEST(Report, DialogGridHasOneRowPerTaskAndMode) {
  std::vector<RunManifest> runs;
  for (auto t : {TaskId::dialog1, TaskId::dialog2, TaskId::dialog4}) {
    for (auto mode : {nn::NeMode::with_ne, nn::NeMode::without_ne}) {
      auto m = fake_run(t, mode, 1, 0);
      m.metrics = json{{"test", {{"per_dialog_plus_db", 0.5}, {"db_retrieval", 0.6}}},
                       {"test_oov", {{"per_dialog_plus_db", 0.4}}}};
      runs.push_back(m);
    }
  }
  const auto dir = scratch("report");
  const auto files = write_reports(runs, dir);
  EXPECT_EQ(files.size(), 3u * 2u + 1u);
  const auto grid = read_file(dir / "dialog_grid.csv");
  EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 7);
  EXPECT_NE(grid.find("dialog-4,dialog-4_without-ne,1,,,0.6,0.5,,,,0.4"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Selftest, AllChecksPass) {
  const auto dir = scratch("selftest");
  for (const auto& line : run_selftest(dir)) EXPECT_TRUE(line.passed) << line.name << ": " << line.detail;
  fs::remove_all(dir);
}

TEST(Selftest, ModuleGradientsCoverEachModule) {
  Rng rng(1);
  std::set<std::string> names;
  for (const auto& r : module_gradient_suite(rng)) names.insert(r.name);
  for (const char* n : {"f_phi", "g_theta", "h_psi", "rnn_encoder", "lstm_encoder"}) EXPECT_TRUE(names.contains(n)) << n;
}
