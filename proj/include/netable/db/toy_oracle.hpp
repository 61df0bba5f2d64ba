#pragma once

#include <string>
#include <vector>

#include "netable/core/random.hpp"
#include "netable/db/retrieval.hpp"

namespace netable::db {

struct ToyOracleReport {
  std::size_t cases = 0;
  std::size_t mismatches = 0;
  std::size_t empty_answers = 0;
  std::size_t multi_cell_answers = 0;
  std::string first_mismatch;
  bool passed() const { return cases > 0 && mismatches == 0; }
};

// Runs the three retrieval steps on random 5x4 tables with attention keys
// planted from the gold query instead of learned, and compares the cells
// against the declarative filter-project answer.
inline ToyOracleReport toy_oracle_check(std::uint64_t seed, std::size_t cases, double lambda = 10.0) {
  constexpr std::size_t rows = 5, cols = 4;
  const std::vector<bool> is_ne{true, false, true, false};
  // Embedding layout: dims 0-3 headings, 4-11 word values (4 per word column), 12-31 NE keys.
  constexpr std::size_t dim = 32, word_base = 4, ne_base = 12, values_per_col = 4;
  const std::vector<std::string> ne_values{"Ann_Ko", "Bo_Li", "Cy_Ma", "Di_Nu", "Ed_Ox",
                                           "Fa_Pi", "Gu_Qa", "Ha_Ru", "Io_Sa", "Ju_Te"};
  Rng rng(seed);
  ToyOracleReport rep;

  auto onehot = [](std::size_t i, double scale = 1.0) {
    ad::Tensor t(ad::Shape{dim});
    t[i] = scale;
    return t;
  };

  for (std::size_t n = 0; n < cases; ++n) {
    // Word column j (1 or 3) uses vocabulary ids 1..4 of its own block; NE columns draw from ne_values.
    std::vector<std::vector<std::string>> cells(rows, std::vector<std::string>(cols));
    std::vector<std::vector<std::size_t>> ids(cols);
    const std::size_t ne_pool = 2 + uniform_index(rng, 4);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (is_ne[c]) {
          cells[r][c] = ne_values[(c == 0 ? 0 : 5) + uniform_index(rng, ne_pool)];
        } else {
          const std::size_t v = uniform_index(rng, 3);
          cells[r][c] = "w" + std::to_string(c) + "_" + std::to_string(v);
          ids[c].push_back((c == 1 ? 0 : values_per_col) + v);
        }
      }
    }
    DbTable db({"Alpha Name", "Beta", "Gamma Name", "Delta"}, is_ne, cells);

    DbQuery q;
    std::vector<std::size_t> constraint_cols;
    while (constraint_cols.empty()) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (coin(rng, 0.45)) constraint_cols.push_back(c);
      }
    }
    const std::size_t anchor = uniform_index(rng, rows);
    for (auto c : constraint_cols) {
      // Mostly values from one row so answers are usually non-empty.
      q.constraints.emplace_back(c, coin(rng, 0.85) ? cells[anchor][c] : cells[uniform_index(rng, rows)][c]);
    }
    while (q.answer_columns.empty()) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (coin(rng, 0.4)) q.answer_columns.push_back(c);
      }
    }

    Graph g;
    StepInputs in;
    in.db = &db;
    for (std::size_t c = 0; c < cols; ++c) in.headings.push_back(g.constant(onehot(c)));
    for (std::size_t c = 0; c < cols; ++c) {
      const bool ans = std::find(q.answer_columns.begin(), q.answer_columns.end(), c) != q.answer_columns.end();
      in.acc_keys.push_back(g.constant(onehot(c, ans ? lambda : -lambda)));
      const bool row = std::find(constraint_cols.begin(), constraint_cols.end(), c) != constraint_cols.end();
      in.acr_keys.push_back(g.constant(onehot(c, row ? lambda : -lambda)));
    }

    // Word-value embedding table: 8 one-hot rows.
    ad::Tensor table(ad::Shape{2 * values_per_col, dim});
    for (std::size_t v = 0; v < 2 * values_per_col; ++v) table.at(v, word_base + v) = 1.0;
    in.cell_table = g.constant(table);
    in.cell_ids = &ids;

    // ARR-non-NE key: +1 on each required value, -k on every other value of that column.
    std::size_t k = 0;
    for (const auto& [c, v] : q.constraints) k += db.is_ne(c) ? 0 : 1;
    ad::Tensor word_key(ad::Shape{dim});
    for (const auto& [c, v] : q.constraints) {
      if (db.is_ne(c)) continue;
      const std::size_t base = word_base + (c == 1 ? 0 : values_per_col);
      for (std::size_t w = 0; w < values_per_col; ++w) {
        const bool want = v == "w" + std::to_string(c) + "_" + std::to_string(w);
        word_key[base + w] += want ? lambda : -lambda * static_cast<double>(k);
      }
    }
    in.arr_word_key = g.constant(word_key);

    // NE-Table: one entry per distinct NE value of the table, one-hot keys;
    // the query for a column is the planted key of its gold value.
    ne::NeTable ne_table(dim);
    std::vector<std::string> inserted;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!is_ne[c]) continue;
      for (const auto& v : db.column_values(c)) {
        if (std::find(inserted.begin(), inserted.end(), v) != inserted.end()) continue;
        ne_table.insert(g, g.constant(onehot(ne_base + inserted.size())), v, db.ne_type(c), "toy");
        inserted.push_back(v);
      }
    }
    for (const auto& [c, v] : q.constraints) {
      if (db.is_ne(c) && std::find(inserted.begin(), inserted.end(), v) == inserted.end()) {
        ne_table.insert(g, g.constant(onehot(ne_base + inserted.size())), v, db.ne_type(c), "toy");
        inserted.push_back(v);
      }
    }
    in.ne_table = &ne_table;
    in.arr_ne_query = [&](std::size_t c) {
      for (const auto& [col, v] : q.constraints) {
        if (col == c) {
          const auto pos = static_cast<std::size_t>(std::find(inserted.begin(), inserted.end(), v) - inserted.begin());
          return g.constant(onehot(ne_base + pos, lambda));
        }
      }
      return g.zeros(dim);
    };

    StepResult r = run_steps(g, in, nullptr, true);
    const auto expected = oracle_cells(db, q);
    ++rep.cases;
    if (expected.empty()) ++rep.empty_answers;
    if (expected.size() > 1) ++rep.multi_cell_answers;
    if (r.cells != expected) {
      if (rep.mismatches == 0) {
        rep.first_mismatch = "case " + std::to_string(n) + ": got " + std::to_string(r.cells.size()) +
                             " cells, expected " + std::to_string(expected.size());
      }
      ++rep.mismatches;
    }
  }
  return rep;
}

}  // namespace netable::db
