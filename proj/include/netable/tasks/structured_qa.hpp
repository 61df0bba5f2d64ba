#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/optimizer.hpp"
#include "netable/core/random.hpp"
#include "netable/db/retrieval.hpp"
#include "netable/harness/io.hpp"
#include "netable/harness/train_loop.hpp"
#include "netable/ne/ne_table.hpp"
#include "netable/nn/embedding.hpp"
#include "netable/nn/rnn.hpp"
#include "netable/text/vocabulary.hpp"

namespace netable::qa {

using ad::Graph;
using ad::Var;
using harness::json;

inline constexpr std::size_t course_number_col = 0;
inline constexpr std::size_t course_name_col = 1;
inline constexpr std::size_t department_col = 2;
inline constexpr std::size_t credits_col = 3;

struct QaPair {
  text::TokenSeq question;
  std::size_t key_column = 0;
  std::string key_value;
  std::size_t answer_column = 0;
  std::vector<db::Cell> answer;

  db::DbQuery query() const { return db::DbQuery{{{key_column, key_value}}, {answer_column}}; }
};

struct QaDataset {
  db::DbTable db;
  std::vector<QaPair> train;
  std::vector<QaPair> test;
};

namespace detail {

struct Department {
  const char* word;
  const char* code;
};

inline const std::vector<Department>& departments() {
  static const std::vector<Department> d{{"eecs", "EECS"},      {"mathematics", "MATH"}, {"physics", "PHYS"},
                                         {"chemistry", "CHEM"}, {"biology", "BIOL"},     {"economics", "ECON"},
                                         {"history", "HIST"},   {"psychology", "PSYC"},  {"linguistics", "LING"},
                                         {"statistics", "STAT"}};
  return d;
}

inline const std::vector<std::string>& name_prefixes() {
  static const std::vector<std::string> p{"Intro_to",     "Advanced",     "Topics_in",  "Seminar_in",
                                          "Applied",      "Foundations_of", "Methods_in", "Principles_of",
                                          "Theory_of",    "Computational"};
  return p;
}

inline const std::vector<std::string>& name_subjects() {
  static const std::vector<std::string> s{
      "Machine_Learning", "Operating_Systems", "Algebra",      "Topology",       "Optics",     "Mechanics",
      "Thermodynamics",   "Organic_Synthesis", "Genetics",     "Ecology",        "Macroeconomics",
      "Game_Theory",      "Medieval_Europe",   "Archaeology",  "Cognition",      "Perception", "Syntax",
      "Phonology",        "Inference",         "Sampling",     "Databases",      "Compilers",  "Robotics",
      "Number_Theory",    "Astrophysics",      "Biochemistry", "Neuroscience",   "Econometrics"};
  return s;
}

inline text::TokenSeq heading_words(const db::DbTable& db, std::size_t c) {
  text::TokenSeq out;
  for (const auto& t : db.heading_tokens(c)) out.push_back(text::word(t));
  return out;
}

}  // namespace detail

inline db::DbTable generate_course_db(Rng& rng) {
  const auto& depts = detail::departments();
  std::vector<std::string> names;
  for (const auto& p : detail::name_prefixes()) {
    for (const auto& s : detail::name_subjects()) names.push_back(p + "_" + s);
  }
  std::shuffle(names.begin(), names.end(), rng);
  if (names.size() < 96) throw GenerationError("course name lexicon too small");
  names.resize(96);

  std::set<std::string> numbers;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 0; r < 100; ++r) {
    const auto& d = depts[r % depts.size()];
    std::string num;
    for (int attempt = 0; attempt < 1000 && (num.empty() || numbers.contains(num)); ++attempt) {
      num = std::string(d.code) + std::to_string(100 + uniform_index(rng, 800));
    }
    if (numbers.contains(num)) throw GenerationError("cannot draw 100 unique course numbers");
    numbers.insert(num);
    // Rows 96..99 repeat names of earlier rows: 96 unique names in total.
    const std::string name = r < 96 ? names[r] : names[uniform_index(rng, 96)];
    rows.push_back({num, name, d.word, std::to_string(1 + uniform_index(rng, 4))});
  }
  std::shuffle(rows.begin(), rows.end(), rng);
  return db::DbTable({"Course Number", "Course Name", "Department", "Credits"}, {true, true, false, false},
                     std::move(rows));
}

inline QaPair make_pair(const db::DbTable& db, std::size_t row, std::size_t key_col, std::size_t answer_col) {
  QaPair q;
  q.key_column = key_col;
  q.key_value = db.cell(row, key_col);
  q.answer_column = answer_col;
  q.question = detail::heading_words(db, key_col);
  q.question.push_back(text::entity(q.key_value, db.ne_type(key_col)));
  for (auto& t : detail::heading_words(db, answer_col)) q.question.push_back(t);
  q.question.push_back(text::word("?"));
  q.answer = db::oracle_cells(db, q.query());
  return q;
}

// 500 distinct questions over a fresh course table, split 400/100 at random.
inline QaDataset generate_dataset(std::uint64_t seed, std::size_t total = 500, std::size_t train_size = 400) {
  Rng rng(seed);
  QaDataset ds;
  ds.db = generate_course_db(rng);
  std::vector<QaPair> all;
  std::set<std::string> seen;
  for (std::size_t attempt = 0; all.size() < total; ++attempt) {
    if (attempt > 100 * total) throw GenerationError("cannot sample enough distinct questions");
    const std::size_t key_col = coin(rng) ? course_number_col : course_name_col;
    const std::size_t row = uniform_index(rng, ds.db.num_rows());
    std::vector<std::size_t> others;
    for (std::size_t c = 0; c < ds.db.num_columns(); ++c) {
      if (c != key_col) others.push_back(c);
    }
    const std::size_t ans = pick(rng, others);
    QaPair q = make_pair(ds.db, row, key_col, ans);
    if (!seen.insert(text::join(q.question)).second) continue;
    if (q.answer.empty()) throw GenerationError("question with no answer");
    all.push_back(std::move(q));
  }
  std::shuffle(all.begin(), all.end(), rng);
  ds.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(train_size));
  ds.test.assign(all.begin() + static_cast<std::ptrdiff_t>(train_size), all.end());
  return ds;
}

// ---- files ------------------------------------------------------------------

inline json pair_to_json(const db::DbTable& db, const QaPair& q) {
  json j;
  harness::tokens_to_json(q.question, j);
  j["key_column"] = q.key_column;
  j["key_value"] = q.key_value;
  j["answer_column"] = q.answer_column;
  j["gold_masks"] = {{"acc", db::column_mask(db.num_columns(), {q.answer_column})},
                     {"acr", db::column_mask(db.num_columns(), {q.key_column})},
                     {"ne_value", q.key_value}};
  json ans = json::array();
  for (auto [r, c] : q.answer) ans.push_back(json::array({r, c, db.cell(r, c)}));
  j["answer"] = std::move(ans);
  return j;
}

inline QaPair pair_from_json(const db::DbTable& db, const json& j) {
  QaPair q;
  try {
    q.question = harness::tokens_from_json(j);
    q.key_column = j.at("key_column").get<std::size_t>();
    q.key_value = j.at("key_value").get<std::string>();
    q.answer_column = j.at("answer_column").get<std::size_t>();
    for (const auto& a : j.at("answer")) q.answer.emplace_back(a.at(0).get<std::size_t>(), a.at(1).get<std::size_t>());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed QA record: ") + e.what());
  }
  if (q.key_column >= db.num_columns() || q.answer_column >= db.num_columns()) throw DataError("QA column out of range");
  if (q.answer != db::oracle_cells(db, q.query())) throw DataError("QA answer disagrees with the DB");
  return q;
}

inline void save_dataset(const QaDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ds.db.save(dir / "db.tsv");
  for (auto [name, split] : {std::pair{"train", &ds.train}, std::pair{"test", &ds.test}}) {
    std::vector<json> rows;
    for (const auto& q : *split) rows.push_back(pair_to_json(ds.db, q));
    harness::write_jsonl(dir / (std::string(name) + ".jsonl"), rows);
  }
}

inline QaDataset load_dataset(const std::filesystem::path& dir) {
  QaDataset ds;
  ds.db = db::DbTable::load(dir / "db.tsv");
  for (const auto& j : harness::read_jsonl(dir / "train.jsonl")) ds.train.push_back(pair_from_json(ds.db, j));
  for (const auto& j : harness::read_jsonl(dir / "test.jsonl")) ds.test.push_back(pair_from_json(ds.db, j));
  return ds;
}

// ---- model ------------------------------------------------------------------

struct QaConfig {
  nn::NeMode mode = nn::NeMode::with_ne;
  std::size_t embedding_size = 20;
  ad::OptimizerConfig optimizer{.kind = ad::OptimizerKind::adam, .learning_rate = 0.01, .epsilon = 1e-8};
  std::size_t batch_size = 16;
  std::size_t max_epochs = 200;
  std::size_t perfect_streak = 5;
  ne::NeAttention ne_attention = ne::NeAttention::softmax;
};

struct QaMetrics {
  std::size_t count = 0;
  double accuracy = 0.0;  // exact answer-cell set match
  double acc = 0.0;
  double acr = 0.0;
  double arr_ne = 0.0;    // NE-Table retrieval under gold ACR (with-NE only)
  double arr_word = 0.0;  // row-embedding selection under gold ACR (without-NE only)
  std::size_t failures = 0;
  std::size_t oov_count = 0;     // questions whose NE never appears in a training question
  double oov_accuracy = 0.0;
};

inline json to_json(const QaMetrics& m) {
  return {{"count", m.count},   {"accuracy", m.accuracy}, {"acc", m.acc},
          {"acr", m.acr},       {"arr_ne", m.arr_ne},     {"arr_non_ne", m.arr_word},
          {"failures", m.failures}, {"oov_count", m.oov_count}, {"oov_accuracy", m.oov_accuracy}};
}

class QaModel {
 public:
  QaModel(const db::DbTable& db, QaConfig cfg, std::uint64_t init_seed) : db_(db), cfg_(cfg) {
    const bool with_ne = cfg.mode == nn::NeMode::with_ne;
    for (std::size_t c = 0; c < db_.num_columns(); ++c) {
      for (const auto& t : db_.heading_tokens(c)) vocab_.add(t);
    }
    vocab_.add("?");
    for (std::size_t c = 0; c < db_.num_columns(); ++c) {
      if (db_.is_ne(c) && with_ne) continue;
      for (const auto& v : db_.column_values(c)) vocab_.add(v);
    }
    for (std::size_t c = 0; c < db_.num_columns(); ++c) {
      if (db_.is_ne(c)) types_.add(db_.ne_type(c));
    }
    Rng rng(init_seed);
    const std::size_t e = cfg.embedding_size;
    words_ = std::make_unique<nn::EmbeddingTable>(params_, "words", vocab_, e, rng);
    type_emb_ = std::make_unique<nn::EmbeddingTable>(params_, "ne_types", types_, e, rng);
    rnn_ = std::make_unique<nn::RnnEncoder>(params_, "question_rnn", e, e, rng);
    f_phi_ = std::make_unique<ne::NeGenerator>(params_, "f_phi", e, e, rng);
    retriever_ = std::make_unique<db::DbRetriever>(
        params_, "h_psi", db_, *words_,
        db::DbRetrieverConfig{e, e, true, cfg.mode, cfg.ne_attention}, rng);
  }

  ad::ParameterStore& params() noexcept { return params_; }
  const ad::ParameterStore& params() const noexcept { return params_; }
  const text::Vocabulary& vocabulary() const noexcept { return vocab_; }
  const QaConfig& config() const noexcept { return cfg_; }
  const db::DbTable& table() const noexcept { return db_; }
  const ne::NeGenerator& f_phi() const noexcept { return *f_phi_; }
  const db::DbRetriever& h_psi() const noexcept { return *retriever_; }

  // Question state; in with-NE mode also fills `table` with one entry per NE.
  Var encode(Graph& g, const QaPair& q, ne::NeTable& table) const {
    nn::TokenInputs in{words_.get(), type_emb_.get(), false};
    nn::NeHook hook = [&](Graph& gg, const text::Token& t, std::size_t pos, Var context) {
      Var key = f_phi_->generate(gg, context);
      table.insert(gg, key, t.text, t.ne_type, "q:" + std::to_string(pos));
      return key;
    };
    return rnn_->encode(g, q.question, cfg_.mode, in, hook).final;
  }

  Var loss(Graph& g, const QaPair& q) const {
    ne::NeTable table(cfg_.embedding_size);
    Var state = encode(g, q, table);
    return retriever_->loss(g, state, &table, q.query());
  }

  db::DbPrediction predict(const QaPair& q) const {
    Graph g;
    ne::NeTable table(cfg_.embedding_size);
    Var state = encode(g, q, table);
    return retriever_->predict(g, state, &table, q.query());
  }

 private:
  const db::DbTable& db_;
  QaConfig cfg_;
  text::Vocabulary vocab_;
  text::Vocabulary types_;
  ad::ParameterStore params_;
  std::unique_ptr<nn::EmbeddingTable> words_;
  std::unique_ptr<nn::EmbeddingTable> type_emb_;
  std::unique_ptr<nn::RnnEncoder> rnn_;
  std::unique_ptr<ne::NeGenerator> f_phi_;
  std::unique_ptr<db::DbRetriever> retriever_;
};

inline std::set<std::string> training_entities(const std::vector<QaPair>& train) {
  std::set<std::string> s;
  for (const auto& q : train) s.insert(q.key_value);
  return s;
}

inline QaMetrics evaluate(const QaModel& model, const std::vector<QaPair>& split,
                          const std::set<std::string>& seen_entities = {}, std::size_t jobs = 1) {
  auto preds = harness::parallel_map<db::DbPrediction>(split.size(), jobs,
                                                        [&](std::size_t i) { return model.predict(split[i]); });
  QaMetrics m;
  m.count = split.size();
  std::size_t correct = 0, acc = 0, acr = 0, arr_ne = 0, arr_word = 0, oov_correct = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& p = preds[i];
    correct += p.correct;
    acc += p.acc_ok.value_or(false);
    acr += p.acr_ok;
    arr_ne += p.arr_ne_ok.value_or(false);
    arr_word += p.arr_word_ok.value_or(false);
    m.failures += p.failed;
    if (!seen_entities.empty() && !seen_entities.contains(split[i].key_value)) {
      ++m.oov_count;
      oov_correct += p.correct;
    }
  }
  const double n = split.empty() ? 1.0 : static_cast<double>(split.size());
  m.accuracy = correct / n;
  m.acc = acc / n;
  m.acr = acr / n;
  m.arr_ne = arr_ne / n;
  m.arr_word = arr_word / n;
  m.oov_accuracy = m.oov_count ? static_cast<double>(oov_correct) / static_cast<double>(m.oov_count) : 0.0;
  return m;
}

struct QaRun {
  harness::TrainResult train;
  QaMetrics train_metrics;
  QaMetrics test_metrics;
};

inline QaRun train_and_evaluate(QaModel& model, const QaDataset& ds, std::uint64_t shuffle_seed,
                                std::size_t jobs = 1, bool verbose = false) {
  const QaConfig& cfg = model.config();
  ad::Optimizer opt(model.params(), cfg.optimizer);
  harness::LoopOptions lo;
  lo.max_epochs = cfg.max_epochs;
  lo.batch_size = cfg.batch_size;
  lo.shuffle_seed = shuffle_seed;
  lo.rule = harness::StopRule::perfect_streak;
  lo.patience = cfg.perfect_streak;
  lo.verbose = verbose;
  lo.label = "structured-qa/" + nn::to_string(cfg.mode);
  QaRun run;
  run.train = harness::run_training<QaPair>(
      model.params(), opt, ds.train, [&](Graph& g, const QaPair& q) { return model.loss(g, q); },
      [&] { return evaluate(model, ds.train, {}, jobs).accuracy; }, lo);
  const auto seen = training_entities(ds.train);
  run.train_metrics = evaluate(model, ds.train, seen, jobs);
  run.test_metrics = evaluate(model, ds.test, seen, jobs);
  return run;
}

}  // namespace netable::qa
