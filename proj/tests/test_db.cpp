#include <gtest/gtest.h>

#include <filesystem>

#include "netable/db/db_table.hpp"
#include "netable/db/retrieval.hpp"
#include "netable/db/toy_oracle.hpp"

using namespace netable;
using netable::ad::Graph;
using netable::ad::Var;

namespace {

db::DbTable courses() {
  return db::DbTable({"Course Number", "Department", "Level"}, {true, false, false},
                     {{"EECS_281", "eecs", "undergrad"},
                      {"EECS_545", "eecs", "grad"},
                      {"MATH_217", "math", "undergrad"},
                      {"EECS_281", "eecs", "grad"}});
}

// Random table of printable cells drawn from a small alphabet so repeats occur.
db::DbTable random_table(Rng& rng) {
  const std::size_t cols = 1 + uniform_index(rng, 5), rows = uniform_index(rng, 8);
  std::vector<std::string> headings;
  std::vector<bool> flags;
  for (std::size_t c = 0; c < cols; ++c) {
    headings.push_back("Col " + std::to_string(c));
    flags.push_back(coin(rng));
  }
  const std::vector<std::string> alphabet{"a", "b", "Ko_Bar", "x y", "3.5", "é", "", "a-b"};
  std::vector<std::vector<std::string>> cells(rows);
  for (auto& r : cells) {
    for (std::size_t c = 0; c < cols; ++c) r.push_back(pick(rng, alphabet));
  }
  return db::DbTable(headings, flags, cells);
}

}  // namespace

TEST(DbTable, HeadingTokensAndTypes) {
  const auto db = courses();
  EXPECT_EQ(db.heading_tokens(0), (std::vector<std::string>{"course", "number"}));
  EXPECT_EQ(db.ne_type(0), "NE_course_number");
  EXPECT_EQ(db.find_column_by_type("NE_course_number"), std::optional<std::size_t>(0));
  EXPECT_EQ(db.classify("EECS_545"), std::optional<std::string>("NE_course_number"));
  EXPECT_FALSE(db.classify("eecs").has_value());
  EXPECT_EQ(db.column_index("Level"), 2u);
  EXPECT_THROW(db.column_index("Credits"), DataError);
}

TEST(DbTable, ExactMatchIsByteForByte) {
  const auto db = courses();
  EXPECT_EQ(db.match(0, "EECS_281"), (std::vector<std::size_t>{0, 3}));
  EXPECT_TRUE(db.match(0, "eecs_281").empty());
  EXPECT_EQ(db.filter({{0, "EECS_281"}, {2, "grad"}}), std::vector<std::size_t>{3});
  EXPECT_EQ(db.filter({}), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(DbTable, RejectsMalformedTables) {
  EXPECT_THROW(db::DbTable({}, {}, {}), DataError);
  EXPECT_THROW(db::DbTable({"A", "A"}, {false, false}, {}), DataError);
  EXPECT_THROW(db::DbTable({"A", "B"}, {false, false}, {{"x"}}), DataError);
  EXPECT_THROW(db::DbTable({"A"}, {false}, {{"tab\there"}}), DataError);
  EXPECT_THROW(db::DbTable::from_tsv("A\tB\nNE\tMAYBE\n"), DataError);
  EXPECT_THROW(db::DbTable::from_tsv("A\n"), DataError);
}

// Property: TSV serialisation round-trips for random tables.
TEST(DbTableProperty, TsvRoundTrip) {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = random_table(rng);
    EXPECT_EQ(db::DbTable::from_tsv(t.to_tsv()), t);
  }
  const auto path = std::filesystem::temp_directory_path() / "netable_db_roundtrip.tsv";
  courses().save(path);
  EXPECT_EQ(db::DbTable::load(path), courses());
  std::filesystem::remove(path);
}

// Property: filter equals a brute-force row scan over random constraints.
TEST(DbTableProperty, FilterEqualsBruteForce) {
  Rng rng(32);
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = random_table(rng);
    if (t.num_rows() == 0) continue;
    std::vector<std::pair<std::size_t, std::string>> cons;
    const std::size_t k = uniform_index(rng, t.num_columns() + 1);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t c = uniform_index(rng, t.num_columns());
      cons.emplace_back(c, t.cell(uniform_index(rng, t.num_rows()), c));
    }
    std::vector<std::size_t> want;
    for (std::size_t r = 0; r < t.num_rows(); ++r) {
      bool ok = true;
      for (const auto& [c, v] : cons) ok = ok && t.rows()[r][c] == v;
      if (ok) want.push_back(r);
    }
    EXPECT_EQ(t.filter(cons), want);
  }
}

TEST(Oracle, ProjectIsSortedCrossProduct) {
  EXPECT_EQ(db::project({2, 0}, {1, 0}), (std::vector<db::Cell>{{0, 0}, {0, 1}, {2, 0}, {2, 1}}));
  const auto db = courses();
  const db::DbQuery q{{{1, "eecs"}, {2, "grad"}}, {0}};
  EXPECT_EQ(db::oracle_cells(db, q), (std::vector<db::Cell>{{1, 0}, {3, 0}}));
  EXPECT_EQ(q.row_columns(), (std::vector<std::size_t>{1, 2}));
}

// 1000 random toy tables with planted attention: cells equal the filter-project oracle.
TEST(Oracle, ToyDbEquivalence1000Cases) {
  const auto rep = db::toy_oracle_check(2024, 1000);
  EXPECT_EQ(rep.cases, 1000u);
  EXPECT_EQ(rep.mismatches, 0u) << rep.first_mismatch;
}

TEST(Oracle, ToyDbEquivalenceOtherSeeds) {
  for (std::uint64_t s : {1u, 7u, 99u}) EXPECT_TRUE(db::toy_oracle_check(s, 200).passed()) << "seed " << s;
}

// Planted inputs on the course table: ACR picks Department (word path) and
// Course Number (NE path); the NE query points at the EECS_281 key.
TEST(RunSteps, PlantedKeysCombineWordAndNePaths) {
  const auto db = courses();
  Graph g;
  // 3-dim one-hot headings; cell embeddings: 0 pad, 1 eecs, 2 math, 3 grad, 4 undergrad
  db::StepInputs in;
  in.db = &db;
  in.headings = {g.constant_vector({1, 0, 0}), g.constant_vector({0, 1, 0}), g.constant_vector({0, 0, 1})};
  const double big = 10.0;
  in.acc_keys = {g.constant_vector({0, 0, 0}), g.constant_vector({0, 0, 0}), g.constant_vector({0, 0, big})};
  in.acr_keys = {g.constant_vector({big, 0, 0}), g.constant_vector({0, big, 0}), g.constant_vector({0, 0, -big})};
  in.cell_table = g.constant(ad::Tensor(ad::Shape{5, 3}, std::vector<double>{0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0}));
  const std::vector<std::vector<std::size_t>> ids{{}, {1, 1, 2, 1}, {3, 3, 4, 3}};
  in.cell_ids = &ids;
  in.arr_word_key = g.constant_vector({big, 0, 0});
  ne::NeTable table(2);
  table.insert(g, g.constant_vector({1, 0}), "EECS_281", "NE_course_number", "q:0");
  table.insert(g, g.constant_vector({0, 1}), "EECS_545", "NE_course_number", "q:1");
  in.ne_table = &table;
  in.arr_ne_query = [&](std::size_t) { return g.constant_vector({big, 0}); };
  const auto r = db::run_steps(g, in, nullptr);
  EXPECT_EQ(r.acr_selected, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(r.ne_columns, std::vector<std::size_t>{0});
  EXPECT_EQ(r.word_columns, std::vector<std::size_t>{1});
  EXPECT_EQ(r.rows, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(r.cells, (std::vector<db::Cell>{{0, 2}, {3, 2}}));
  const db::DbQuery gold{{{0, "EECS_281"}, {1, "eecs"}}, {2}};
  EXPECT_EQ(r.cells, db::oracle_cells(db, gold));
}

TEST(RunSteps, EmptyAcrSelectionIsRetrievalError) {
  const auto db = courses();
  Graph g;
  db::StepInputs in;
  in.db = &db;
  in.headings = {g.constant_vector({1}), g.constant_vector({1}), g.constant_vector({1})};
  in.acr_keys = {g.constant_vector({-5}), g.constant_vector({-5}), g.constant_vector({-5})};
  EXPECT_THROW(db::run_steps(g, in, nullptr), RetrievalError);
}

TEST(DbRetriever, WithNeModeNeverEmbedsNeCells) {
  const auto db = courses();
  text::Vocabulary vocab;
  for (const char* w : {"course", "number", "department", "level", "eecs", "math", "grad", "undergrad"}) vocab.add(w);
  ad::ParameterStore ps;
  Rng rng(3);
  nn::EmbeddingTable words(ps, "words", vocab, 4, rng);
  nn::LookupProbe probe;
  db::DbRetriever h(ps, "h", db, words, db::DbRetrieverConfig{4, 4, true, nn::NeMode::with_ne}, rng);
  Graph g;
  ne::NeTable table(4);
  table.insert(g, g.constant_vector({1, 0, 0, 0}), "EECS_281", "NE_course_number", "q:0");
  const auto p = h.predict(g, g.constant_vector({0.1, 0.2, 0.3, 0.4}), &table, {{{0, "EECS_281"}}, {2}});
  for (const auto& row : db.rows()) EXPECT_FALSE(probe.saw(row[0])) << row[0];
  EXPECT_TRUE(p.acc_ok.has_value());
  EXPECT_THROW(db::DbRetriever(ps, "bad", db, words, db::DbRetrieverConfig{4, 5}, rng), ConfigError);
}
