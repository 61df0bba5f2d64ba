#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "netable/tasks/structured_qa.hpp"

using namespace netable;

namespace fs = std::filesystem;

TEST(QaData, CourseTableShape) {
  const auto ds = qa::generate_dataset(7);
  EXPECT_EQ(ds.db.num_rows(), 100u);
  EXPECT_EQ(ds.db.num_columns(), 4u);
  EXPECT_EQ(ds.db.column_values(0).size(), 100u);  // unique course numbers
  EXPECT_EQ(ds.db.column_values(1).size(), 96u);   // 96 distinct names, 4 repeated
  EXPECT_TRUE(ds.db.is_ne(0));
  EXPECT_TRUE(ds.db.is_ne(1));
  EXPECT_FALSE(ds.db.is_ne(2));
}

TEST(QaData, SplitSizesAndDistinctQuestions) {
  const auto ds = qa::generate_dataset(7);
  EXPECT_EQ(ds.train.size(), 400u);
  EXPECT_EQ(ds.test.size(), 100u);
  std::set<std::string> qs;
  for (const auto* split : {&ds.train, &ds.test}) {
    for (const auto& q : *split) EXPECT_TRUE(qs.insert(text::join(q.question)).second);
  }
}

// Gold answers equal a brute-force scan of the table.
TEST(QaData, GoldAnswerEqualsBruteForce) {
  const auto ds = qa::generate_dataset(3);
  for (const auto& q : ds.train) {
    std::vector<db::Cell> want;
    for (std::size_t r = 0; r < ds.db.num_rows(); ++r) {
      if (ds.db.cell(r, q.key_column) == q.key_value) want.emplace_back(r, q.answer_column);
    }
    EXPECT_EQ(q.answer, want);
    EXPECT_FALSE(q.answer.empty());
    ASSERT_EQ(q.question.size(), ds.db.heading_tokens(q.key_column).size() + 1 +
                                     ds.db.heading_tokens(q.answer_column).size() + 1);
    EXPECT_NE(q.key_column, q.answer_column);
  }
}

TEST(QaData, QuestionCarriesExactlyOneTypedEntity) {
  const auto ds = qa::generate_dataset(3);
  for (const auto& q : ds.test) {
    std::size_t n = 0;
    for (const auto& t : q.question) {
      if (!t.is_ne) continue;
      ++n;
      EXPECT_EQ(t.text, q.key_value);
      EXPECT_EQ(t.ne_type, ds.db.ne_type(q.key_column));
    }
    EXPECT_EQ(n, 1u);
  }
}

TEST(QaData, DeterministicPerSeed) {
  const auto a = qa::generate_dataset(11), b = qa::generate_dataset(11), c = qa::generate_dataset(12);
  EXPECT_EQ(a.db, b.db);
  EXPECT_FALSE(a.db == c.db);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(text::join(a.train[i].question), text::join(b.train[i].question));
}

TEST(QaData, SaveLoadRoundTrip) {
  const auto ds = qa::generate_dataset(5);
  const auto dir = fs::temp_directory_path() / "netable_qa_roundtrip";
  fs::remove_all(dir);
  qa::save_dataset(ds, dir);
  EXPECT_TRUE(fs::exists(dir / "db.tsv"));
  const auto back = qa::load_dataset(dir);
  EXPECT_EQ(back.db, ds.db);
  ASSERT_EQ(back.train.size(), ds.train.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    EXPECT_EQ(back.train[i].question, ds.train[i].question);
    EXPECT_EQ(back.train[i].answer, ds.train[i].answer);
  }
  fs::remove_all(dir);
}

// A question about an entity the model has never seen: with the NE-Table no NE
// string reaches any embedding table; without it, the string is looked up.
TEST(QaModel, UnseenEntityNeverEmbeddedWithNe) {
  const auto ds = qa::generate_dataset(5);
  qa::QaPair q = ds.test.front();
  for (auto& t : q.question) {
    if (t.is_ne) t.text = "UNSEEN_000";
  }
  q.key_value = "UNSEEN_000";
  for (auto mode : {nn::NeMode::with_ne, nn::NeMode::without_ne}) {
    qa::QaConfig cfg;
    cfg.mode = mode;
    qa::QaModel model(ds.db, cfg, 1);
    nn::LookupProbe probe;
    model.predict(q);
    bool any_ne = probe.saw("UNSEEN_000");
    for (const auto& row : ds.db.rows()) any_ne = any_ne || probe.saw(row[0]) || probe.saw(row[1]);
    EXPECT_EQ(any_ne, mode == nn::NeMode::without_ne) << nn::to_string(mode);
  }
}

TEST(QaModel, WithNeVocabularyExcludesEntities) {
  const auto ds = qa::generate_dataset(5);
  qa::QaModel with(ds.db, qa::QaConfig{}, 1);
  for (const auto& row : ds.db.rows()) EXPECT_FALSE(with.vocabulary().contains(row[0]));
  qa::QaConfig wo;
  wo.mode = nn::NeMode::without_ne;
  qa::QaModel without(ds.db, wo, 1);
  EXPECT_TRUE(without.vocabulary().contains(ds.db.cell(0, 0)));
}

TEST(QaMetrics, JsonKeys) {
  qa::QaMetrics m;
  m.count = 4;
  m.accuracy = 0.5;
  const auto j = qa::to_json(m);
  for (const char* k : {"accuracy", "acc", "acr", "arr_ne", "arr_non_ne", "oov_accuracy", "count"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
}

TEST(QaTraining, RunsAreBitIdentical) {
  const auto ds = qa::generate_dataset(21);
  qa::QaConfig cfg;
  cfg.max_epochs = 3;
  qa::QaModel a(ds.db, cfg, 5), b(ds.db, cfg, 5);
  const auto ra = qa::train_and_evaluate(a, ds, 9), rb = qa::train_and_evaluate(b, ds, 9, 2);
  EXPECT_EQ(qa::to_json(ra.test_metrics).dump(), qa::to_json(rb.test_metrics).dump());
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
}
