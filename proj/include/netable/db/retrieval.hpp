#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/graph.hpp"
#include "netable/db/db_table.hpp"
#include "netable/ne/ne_table.hpp"
#include "netable/nn/embedding.hpp"
#include "netable/nn/mlp.hpp"
#include "netable/nn/rnn.hpp"

namespace netable::db {

using ad::Graph;
using ad::Var;
using Constraint = std::pair<std::size_t, std::string>;  // (column, required value)

// Gold description of one retrieval: rows are those satisfying every
// constraint; the answer is those rows projected on `answer_columns`. An empty
// `answer_columns` means whole rows are wanted and ACC is not exercised.
struct DbQuery {
  std::vector<Constraint> constraints;
  std::vector<std::size_t> answer_columns;

  std::vector<std::size_t> row_columns() const {
    std::vector<std::size_t> out;
    for (const auto& [c, v] : constraints) out.push_back(c);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

inline bool threshold_selected(double score) { return score > 0.5; }

inline std::vector<double> column_mask(std::size_t n, const std::vector<std::size_t>& cols) {
  std::vector<double> m(n, 0.0);
  for (auto c : cols) m.at(c) = 1.0;
  return m;
}

inline std::vector<Cell> project(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  std::vector<Cell> out;
  for (auto r : rows) {
    for (auto c : cols) out.emplace_back(r, c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::size_t> intersect(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Declarative answer: σ(constraints) projected on the answer columns.
inline std::vector<Cell> oracle_cells(const DbTable& db, const DbQuery& q) {
  return project(db.filter(q.constraints), q.answer_columns);
}

struct ColumnRetrieval {
  std::size_t column = 0;
  ne::Retrieval retrieval;
  std::vector<std::size_t> rows;
};

// Everything one pass of the three steps produced.
struct StepResult {
  Var acc_logits;
  Var acr_logits;
  std::vector<double> acc_scores;
  std::vector<double> acr_scores;
  std::vector<std::size_t> acc_selected;
  std::vector<std::size_t> acr_selected;  // by threshold
  std::vector<std::size_t> row_columns;   // columns actually used to pick rows
  std::vector<std::size_t> word_columns;  // subset handled by row embeddings
  std::vector<std::size_t> ne_columns;    // subset handled by NE-Table exact match
  Var row_logits;
  std::vector<double> row_scores;
  std::optional<std::vector<std::size_t>> word_rows;
  std::vector<ColumnRetrieval> ne;
  std::vector<std::size_t> rows;
  std::vector<Cell> cells;
};

// Attention keys and inputs for the three steps, already placed in a graph.
// Learned keys come from DbRetriever; planted keys let tests bypass learning.
struct StepInputs {
  const DbTable* db = nullptr;
  std::vector<Var> headings;  // heading embedding per column
  std::vector<Var> acc_keys;  // empty: ACC skipped
  std::vector<Var> acr_keys;
  Var arr_word_key;
  std::function<Var(std::size_t column)> arr_ne_query;
  Var cell_table;  // embedding matrix the word-path cell ids index into
  const std::vector<std::vector<std::size_t>>* cell_ids = nullptr;  // per column; empty when unprepared
  const ne::NeTable* ne_table = nullptr;
  ne::NeAttention ne_attention = ne::NeAttention::softmax;
  bool ne_path = true;  // false: every column is represented through row embeddings
};

namespace detail {

inline Var column_logits(Graph& g, const std::vector<Var>& keys, const std::vector<Var>& headings) {
  std::vector<Var> parts;
  parts.reserve(keys.size());
  for (std::size_t c = 0; c < keys.size(); ++c) parts.push_back(g.dot(keys[c], headings[c]));
  return g.concat(parts);
}

inline std::vector<double> sigmoid_values(const Graph& g, Var logits) {
  std::vector<double> out;
  for (double z : g.value(logits).data()) out.push_back(ad::sigmoid(z));
  return out;
}

inline std::vector<std::size_t> above_threshold(const std::vector<double>& scores) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (threshold_selected(scores[i])) out.push_back(i);
  }
  return out;
}

}  // namespace detail

// Runs the three steps. `row_columns` overrides the ACR selection (teacher
// forcing or gold-upstream evaluation); otherwise the thresholded ACR choice is
// used and an empty choice is an error. With `compute_rows` false only the
// scores needed for the loss are produced.
inline StepResult run_steps(Graph& g, const StepInputs& in, const std::vector<std::size_t>* row_columns,
                            bool compute_rows = true) {
  const DbTable& db = *in.db;
  StepResult r;
  if (!in.acc_keys.empty()) {
    r.acc_logits = detail::column_logits(g, in.acc_keys, in.headings);
    r.acc_scores = detail::sigmoid_values(g, r.acc_logits);
    r.acc_selected = detail::above_threshold(r.acc_scores);
  }
  r.acr_logits = detail::column_logits(g, in.acr_keys, in.headings);
  r.acr_scores = detail::sigmoid_values(g, r.acr_logits);
  r.acr_selected = detail::above_threshold(r.acr_scores);
  r.row_columns = row_columns ? *row_columns : r.acr_selected;
  if (r.row_columns.empty()) {
    throw RetrievalError("no row representation: ACR selected no column");
  }
  for (auto c : r.row_columns) {
    if (in.ne_path && db.is_ne(c)) r.ne_columns.push_back(c);
    else r.word_columns.push_back(c);
  }

  if (!r.word_columns.empty()) {
    const std::size_t k = r.word_columns.size();
    std::vector<std::size_t> ids;
    ids.reserve(db.num_rows() * k);
    for (std::size_t row = 0; row < db.num_rows(); ++row) {
      for (auto c : r.word_columns) {
        const auto& col = (*in.cell_ids)[c];
        if (col.empty()) throw ContractError("cell ids for column '" + db.heading(c) + "' were not prepared");
        ids.push_back(col[row]);
      }
    }
    // Column selection is hard: a row is the sum of its cells in the chosen
    // columns. ACR is trained by its own target only.
    Var weights = g.constant_vector(std::vector<double>(k, 1.0));
    Var row_emb = g.weighted_rows(in.cell_table, ids, k, weights);
    r.row_logits = g.matvec(row_emb, in.arr_word_key);
    r.row_scores = detail::sigmoid_values(g, r.row_logits);
    r.word_rows = detail::above_threshold(r.row_scores);
  }

  if (!r.ne_columns.empty()) {
    if (!in.ne_table) throw ContractError("NE columns selected without an NE-Table");
    for (auto c : r.ne_columns) {
      ColumnRetrieval cr;
      cr.column = c;
      cr.retrieval = ne::retrieve(g, *in.ne_table, in.arr_ne_query(c), in.ne_attention);
      if (compute_rows) cr.rows = db.match(c, cr.retrieval.value);
      r.ne.push_back(std::move(cr));
    }
  }

  if (!compute_rows) return r;
  std::optional<std::vector<std::size_t>> rows = r.word_rows;
  for (const auto& cr : r.ne) rows = rows ? intersect(*rows, cr.rows) : cr.rows;
  r.rows = rows.value_or(std::vector<std::size_t>{});
  if (!in.acc_keys.empty()) r.cells = project(r.rows, r.acc_selected);
  return r;
}

// Outcome of one retrieval at evaluation time, judged against the gold query.
struct DbPrediction {
  bool failed = false;  // retrieval raised (e.g. empty NE-Table)
  std::string failure;
  std::vector<std::size_t> rows;
  std::vector<Cell> cells;
  bool correct = false;  // rows (no ACC) or cells (ACC) equal the gold
  // Sub-attention correctness; ARR parts are judged with the gold ACR choice.
  std::optional<bool> acc_ok;
  bool acr_ok = false;
  std::optional<bool> arr_word_ok;
  std::optional<bool> arr_ne_ok;
};

struct DbRetrieverConfig {
  std::size_t state_dim = 20;
  std::size_t dim = 20;
  bool use_acc = true;
  nn::NeMode mode = nn::NeMode::with_ne;
  ne::NeAttention ne_attention = ne::NeAttention::softmax;
  double row_loss_weight = 1.0;  // multiplies the summed per-row cross-entropy
};

// h_ψ with a tanh trunk on the state vector and one linear head per key family.
// ARR-NE queries come from g_θ applied to [state; heading embedding].
class DbRetriever {
 public:
  DbRetriever(ad::ParameterStore& ps, const std::string& name, const DbTable& db, const nn::EmbeddingTable& words,
              DbRetrieverConfig cfg, Rng& rng)
      : db_(&db), words_(&words), cfg_(cfg),
        trunk_(ps, name + ".trunk", cfg.state_dim, cfg.dim, rng),
        acc_head_(cfg.use_acc ? std::optional<nn::Linear>(std::in_place, ps, name + ".acc", cfg.dim,
                                                           cfg.dim * db.num_columns(), rng)
                              : std::nullopt),
        acr_head_(ps, name + ".acr", cfg.dim, cfg.dim * db.num_columns(), rng),
        arr_word_head_(ps, name + ".arr_word", cfg.dim, cfg.dim, rng),
        g_theta_(ps, name + ".g_theta", cfg.state_dim + cfg.dim, cfg.dim, rng) {
    if (words.dim() != cfg.dim) throw ConfigError("db retriever: embedding size differs from key size");
    // Only columns that can be represented through embeddings get ids, so in
    // with-NE mode no NE cell is ever looked up in the word table.
    cell_ids_.resize(db.num_columns());
    for (std::size_t c = 0; c < db.num_columns(); ++c) {
      if (cfg.mode == nn::NeMode::with_ne && db.is_ne(c)) continue;
      for (std::size_t r = 0; r < db.num_rows(); ++r) cell_ids_[c].push_back(words.id(db.cell(r, c)));
    }
    for (std::size_t c = 0; c < db.num_columns(); ++c) heading_tokens_.push_back(db.heading_tokens(c));
  }

  const DbTable& table() const noexcept { return *db_; }
  const DbRetrieverConfig& config() const noexcept { return cfg_; }
  const ne::NeRetriever& g_theta() const noexcept { return g_theta_; }

  std::vector<Var> heading_embeddings(Graph& g) const {
    std::vector<Var> out;
    for (const auto& toks : heading_tokens_) {
      std::vector<Var> xs;
      for (const auto& t : toks) xs.push_back(words_->lookup(g, t));
      out.push_back(xs.size() == 1 ? xs[0] : g.sum(xs));
    }
    return out;
  }

  StepInputs inputs(Graph& g, Var state, const ne::NeTable* table) const {
    if (g.value(state).size() != cfg_.state_dim) {
      throw ShapeError("db retriever: state of size " + std::to_string(g.value(state).size()) + ", expected " +
                       std::to_string(cfg_.state_dim));
    }
    StepInputs in;
    in.db = db_;
    in.headings = heading_embeddings(g);
    Var t = g.tanh(trunk_.forward(g, state));
    const std::size_t n = db_->num_columns(), d = cfg_.dim;
    if (acc_head_) {
      Var k = acc_head_->forward(g, t);
      for (std::size_t c = 0; c < n; ++c) in.acc_keys.push_back(g.slice(k, c * d, d));
    }
    Var k = acr_head_.forward(g, t);
    for (std::size_t c = 0; c < n; ++c) in.acr_keys.push_back(g.slice(k, c * d, d));
    in.arr_word_key = arr_word_head_.forward(g, t);
    auto headings = in.headings;
    in.arr_ne_query = [this, &g, state, headings](std::size_t c) {
      return g_theta_.query(g, g.concat({state, headings[c]}));
    };
    in.cell_table = words_->table(g);
    in.cell_ids = &cell_ids_;
    in.ne_table = table;
    in.ne_attention = cfg_.ne_attention;
    in.ne_path = cfg_.mode == nn::NeMode::with_ne;
    return in;
  }

  // Sum of the per-step cross-entropies, with gold ACR columns feeding the
  // row steps. NE steps whose gold value is absent from the table contribute nothing.
  Var loss(Graph& g, Var state, const ne::NeTable* table, const DbQuery& gold) const {
    StepInputs in = inputs(g, state, table);
    const std::vector<std::size_t> gold_cols = gold.row_columns();
    const std::size_t n = db_->num_columns();

    std::vector<Var> terms;
    auto acr_mask = column_mask(n, gold_cols);
    if (acc_head_ && !gold.answer_columns.empty()) {
      Var acc = detail::column_logits(g, in.acc_keys, in.headings);
      auto m = column_mask(n, gold.answer_columns);
      terms.push_back(g.sigmoid_cross_entropy(acc, m));
    }
    // run_steps recomputes ACC; skip it by clearing the keys.
    in.acc_keys.clear();
    const ne::NeTable* saved_table = in.ne_table;
    std::vector<std::size_t> ne_cols, word_cols;
    for (auto c : gold_cols) {
      if (in.ne_path && db_->is_ne(c)) ne_cols.push_back(c);
      else word_cols.push_back(c);
    }
    // NE retrievals are only scored when the table can answer them.
    auto gold_value = [&](std::size_t c) -> const std::string& {
      for (const auto& [col, v] : gold.constraints) {
        if (col == c) return v;
      }
      throw ContractError("no gold value for column");
    };
    std::vector<std::size_t> forced = word_cols;
    bool ne_answerable = saved_table && !saved_table->empty();
    if (ne_answerable) {
      for (auto c : ne_cols) {
        if (saved_table->contains_value(gold_value(c))) forced.push_back(c);
      }
    }
    std::sort(forced.begin(), forced.end());
    if (forced.empty()) {
      Var acr = detail::column_logits(g, in.acr_keys, in.headings);
      terms.push_back(g.sigmoid_cross_entropy(acr, acr_mask));
      return terms.size() == 1 ? terms[0] : g.sum(terms);
    }
    StepResult r = run_steps(g, in, &forced, false);
    terms.push_back(g.sigmoid_cross_entropy(r.acr_logits, acr_mask));
    if (!r.word_columns.empty()) {
      std::vector<Constraint> word_constraints;
      for (const auto& con : gold.constraints) {
        if (std::find(r.word_columns.begin(), r.word_columns.end(), con.first) != r.word_columns.end()) {
          word_constraints.push_back(con);
        }
      }
      std::vector<double> row_mask(db_->num_rows(), 0.0);
      for (auto row : db_->filter(word_constraints)) row_mask[row] = 1.0;
      Var rows = g.sigmoid_cross_entropy(r.row_logits, row_mask);
      terms.push_back(cfg_.row_loss_weight == 1.0 ? rows : g.scale(rows, cfg_.row_loss_weight));
    }
    for (const auto& cr : r.ne) {
      terms.push_back(ne::retrieval_loss(g, cr.retrieval, *saved_table, gold_value(cr.column), cfg_.ne_attention));
    }
    return g.sum(terms);
  }

  DbPrediction predict(Graph& g, Var state, const ne::NeTable* table, const DbQuery& gold) const {
    DbPrediction p;
    StepInputs in = inputs(g, state, table);
    const auto gold_cols = gold.row_columns();
    const auto gold_rows = db_->filter(gold.constraints);
    const bool rows_only = !acc_head_ || gold.answer_columns.empty();
    std::vector<std::size_t> acc_selected;
    if (!rows_only) {
      acc_selected = detail::above_threshold(
          detail::sigmoid_values(g, detail::column_logits(g, in.acc_keys, in.headings)));
      p.acc_ok = acc_selected == gold.answer_columns;
    }
    in.acc_keys.clear();

    // Gold-upstream pass for the ARR sub-metrics.
    std::optional<StepResult> gold_pass;
    try {
      gold_pass = run_steps(g, in, &gold_cols, true);
    } catch (const RetrievalError&) {
      gold_pass.reset();
    }
    const auto acr_selected =
        detail::above_threshold(detail::sigmoid_values(g, detail::column_logits(g, in.acr_keys, in.headings)));
    p.acr_ok = acr_selected == gold_cols;
    if (gold_pass) {
      if (!gold_pass->word_columns.empty()) {
        std::vector<Constraint> wc;
        for (const auto& con : gold.constraints) {
          const auto& cols = gold_pass->word_columns;
          if (std::find(cols.begin(), cols.end(), con.first) != cols.end()) wc.push_back(con);
        }
        p.arr_word_ok = *gold_pass->word_rows == db_->filter(wc);
      }
      if (!gold_pass->ne_columns.empty()) {
        bool ok = true;
        for (const auto& cr : gold_pass->ne) {
          for (const auto& [c, v] : gold.constraints) {
            if (c == cr.column) ok = ok && cr.retrieval.value == v;
          }
        }
        p.arr_ne_ok = ok;
      }
    } else {
      bool any_ne = false, any_word = false;
      for (auto c : gold_cols) (in.ne_path && db_->is_ne(c) ? any_ne : any_word) = true;
      if (any_ne) p.arr_ne_ok = false;
      if (any_word) p.arr_word_ok = false;
    }

    // End-to-end pass with the model's own selections.
    try {
      if (gold_pass && acr_selected == gold_cols) p.rows = gold_pass->rows;
      else p.rows = run_steps(g, in, nullptr, true).rows;
      if (!rows_only) p.cells = project(p.rows, acc_selected);
    } catch (const RetrievalError& e) {
      p.failed = true;
      p.failure = e.what();
    }
    if (!p.failed) {
      p.correct = rows_only ? p.rows == gold_rows : p.cells == project(gold_rows, gold.answer_columns);
    }
    return p;
  }

 private:
  const DbTable* db_;
  const nn::EmbeddingTable* words_;
  DbRetrieverConfig cfg_;
  nn::Linear trunk_;
  std::optional<nn::Linear> acc_head_;
  nn::Linear acr_head_;
  nn::Linear arr_word_head_;
  ne::NeRetriever g_theta_;
  std::vector<std::vector<std::size_t>> cell_ids_;
  std::vector<std::vector<std::string>> heading_tokens_;
};

}  // namespace netable::db
