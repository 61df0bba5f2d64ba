#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/text/token.hpp"

namespace netable::db {

using Cell = std::pair<std::size_t, std::size_t>;  // (row, column)

// A single relation. Cells of NE columns are verbatim strings; cells of WORD
// columns are vocabulary tokens.
class DbTable {
 public:
  DbTable() = default;
  DbTable(std::vector<std::string> headings, std::vector<bool> is_ne, std::vector<std::vector<std::string>> rows)
      : headings_(std::move(headings)), is_ne_(std::move(is_ne)), rows_(std::move(rows)) {
    validate();
    build_ne_index();
  }

  std::size_t num_rows() const noexcept { return rows_.size(); }
  std::size_t num_columns() const noexcept { return headings_.size(); }
  const std::vector<std::string>& headings() const noexcept { return headings_; }
  const std::string& heading(std::size_t c) const { return headings_.at(c); }
  bool is_ne(std::size_t c) const { return is_ne_.at(c); }
  const std::vector<bool>& ne_flags() const noexcept { return is_ne_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
  const std::string& cell(std::size_t r, std::size_t c) const { return rows_.at(r).at(c); }

  // Heading words as vocabulary tokens: "Course Number" -> {"course", "number"}.
  std::vector<std::string> heading_tokens(std::size_t c) const {
    std::vector<std::string> out;
    for (const auto& t : text::tokenize(heading(c))) out.push_back(t.text);
    return out;
  }

  // NE-type tag of a column: "Course Number" -> "NE_course_number".
  std::string ne_type(std::size_t c) const {
    std::string out = "NE";
    for (const auto& t : heading_tokens(c)) out += "_" + t;
    return out;
  }

  std::size_t column_index(const std::string& heading) const {
    for (std::size_t c = 0; c < headings_.size(); ++c) {
      if (headings_[c] == heading) return c;
    }
    throw DataError("no column '" + heading + "'");
  }

  std::optional<std::size_t> find_column_by_type(const std::string& type) const {
    for (std::size_t c = 0; c < headings_.size(); ++c) {
      if (ne_type(c) == type) return c;
    }
    return std::nullopt;
  }

  // Rows whose cell in column c equals `value` byte for byte.
  std::vector<std::size_t> match(std::size_t c, const std::string& value) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      if (rows_[r][c] == value) out.push_back(r);
    }
    return out;
  }

  // Conjunctive exact-match filter.
  std::vector<std::size_t> filter(const std::vector<std::pair<std::size_t, std::string>>& constraints) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      bool ok = true;
      for (const auto& [c, v] : constraints) ok = ok && rows_[r][c] == v;
      if (ok) out.push_back(r);
    }
    return out;
  }

  // DB-membership NE rule: a string found in an NE column is an NE whose type
  // is that column's (first such column wins).
  std::optional<std::string> classify(std::string_view token) const {
    auto it = ne_index_.find(std::string(token));
    if (it == ne_index_.end()) return std::nullopt;
    return ne_type(it->second);
  }

  std::vector<std::string> column_values(std::size_t c) const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& row : rows_) {
      if (seen.insert(row[c]).second) out.push_back(row[c]);
    }
    return out;
  }

  std::string to_tsv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += '\t';
        out += v[i];
      }
      out += '\n';
    };
    line(headings_);
    std::vector<std::string> flags;
    for (bool f : is_ne_) flags.push_back(f ? "NE" : "WORD");
    line(flags);
    for (const auto& r : rows_) line(r);
    return out;
  }

  static DbTable from_tsv(const std::string& text) {
    std::vector<std::vector<std::string>> lines;
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      std::vector<std::string> fields;
      std::size_t f = start;
      while (true) {
        std::size_t tab = text.find('\t', f);
        if (tab == std::string::npos || tab > end) {
          fields.push_back(text.substr(f, end - f));
          break;
        }
        fields.push_back(text.substr(f, tab - f));
        f = tab + 1;
      }
      lines.push_back(std::move(fields));
      start = end + 1;
    }
    if (lines.size() < 2) throw DataError("DB TSV needs a heading row and a flag row");
    std::vector<bool> flags;
    for (const auto& f : lines[1]) {
      if (f == "NE") flags.push_back(true);
      else if (f == "WORD") flags.push_back(false);
      else throw DataError("DB TSV flag must be NE or WORD, got '" + f + "'");
    }
    std::vector<std::vector<std::string>> rows(lines.begin() + 2, lines.end());
    return DbTable(lines[0], flags, std::move(rows));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_tsv();
  }

  static DbTable load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read DB " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_tsv(ss.str());
  }

  friend bool operator==(const DbTable& a, const DbTable& b) {
    return a.headings_ == b.headings_ && a.is_ne_ == b.is_ne_ && a.rows_ == b.rows_;
  }

 private:
  static void check_field(const std::string& s, const char* what) {
    if (s.find_first_of("\t\n\r") != std::string::npos) {
      throw DataError(std::string(what) + " contains a tab or newline: '" + s + "'");
    }
  }

  void validate() const {
    if (headings_.empty()) throw DataError("DB has no columns");
    if (is_ne_.size() != headings_.size()) throw DataError("DB flag count differs from heading count");
    std::unordered_set<std::string> seen;
    for (const auto& h : headings_) {
      check_field(h, "heading");
      if (h.empty()) throw DataError("empty DB heading");
      if (!seen.insert(h).second) throw DataError("duplicate DB heading '" + h + "'");
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      if (rows_[r].size() != headings_.size()) {
        throw DataError("DB row " + std::to_string(r) + " has " + std::to_string(rows_[r].size()) + " cells, expected " +
                        std::to_string(headings_.size()));
      }
      for (const auto& c : rows_[r]) check_field(c, "cell");
    }
  }

  void build_ne_index() {
    for (std::size_t c = 0; c < headings_.size(); ++c) {
      if (!is_ne_[c]) continue;
      for (const auto& row : rows_) ne_index_.emplace(row[c], c);
    }
  }

  std::vector<std::string> headings_;
  std::vector<bool> is_ne_;
  std::vector<std::vector<std::string>> rows_;
  std::unordered_map<std::string, std::size_t> ne_index_;
};

}  // namespace netable::db
