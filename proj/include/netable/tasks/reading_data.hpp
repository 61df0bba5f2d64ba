#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/random.hpp"
#include "netable/harness/io.hpp"
#include "netable/text/token.hpp"

namespace netable::reading {

using harness::json;

inline constexpr std::size_t story_sentences = 20;
inline constexpr std::size_t candidate_count = 10;
inline constexpr const char* blank_token = "XXXXX";
inline constexpr const char* person_type = "PERSON";

struct ClozeQuestion {
  std::vector<text::TokenSeq> story;  // 20 sentences
  text::TokenSeq query;               // contains exactly one blank_token
  std::string answer;
  std::vector<std::string> candidates;

  text::TokenSeq flat_story() const {
    text::TokenSeq out;
    for (const auto& s : story) out.insert(out.end(), s.begin(), s.end());
    return out;
  }

  // Distinct NE surface forms in order of first appearance, story then query.
  std::vector<std::string> entities() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    auto scan = [&](const text::TokenSeq& seq) {
      for (const auto& t : seq) {
        if (t.is_ne && seen.insert(t.text).second) out.push_back(t.text);
      }
    };
    for (const auto& s : story) scan(s);
    scan(query);
    return out;
  }

  friend bool operator==(const ClozeQuestion&, const ClozeQuestion&) = default;
};

// Throws DataError unless the question has the documented shape.
inline void validate(const ClozeQuestion& q) {
  if (q.story.size() != story_sentences) {
    throw DataError("story has " + std::to_string(q.story.size()) + " sentences, expected 20");
  }
  if (q.candidates.size() != candidate_count) {
    throw DataError("question has " + std::to_string(q.candidates.size()) + " candidates, expected 10");
  }
  std::set<std::string> cands(q.candidates.begin(), q.candidates.end());
  if (cands.size() != q.candidates.size()) throw DataError("duplicate candidate");
  if (!cands.contains(q.answer)) throw DataError("answer '" + q.answer + "' is not a candidate");
  std::set<std::string> present;
  for (const auto& s : q.story) {
    for (const auto& t : s) present.insert(t.text);
  }
  for (const auto& t : q.query) present.insert(t.text);
  for (const auto& c : q.candidates) {
    if (!present.contains(c)) throw DataError("candidate '" + c + "' occurs in neither story nor query");
  }
  if (std::count_if(q.query.begin(), q.query.end(), [](const text::Token& t) { return t.text == blank_token; }) != 1) {
    throw DataError("query must contain exactly one blank");
  }
}

// ---- lexicons ---------------------------------------------------------------

namespace detail {

inline std::vector<std::string> syllable_names(const std::string& consonants, const std::string& vowels,
                                               const std::string& codas) {
  std::vector<std::string> syl;
  for (char c : consonants) {
    for (char v : vowels) syl.push_back(std::string{c, v});
  }
  std::vector<std::string> out;
  for (const auto& a : syl) {
    for (const auto& b : syl) {
      for (char k : codas) {
        std::string n = a + b + std::string(1, k);
        n[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(n[0])));
        out.push_back(n);
      }
    }
  }
  return out;
}

inline const std::vector<std::string>& roles() {
  static const std::vector<std::string> r{
      "baker",    "farmer",  "sailor",   "miller",  "weaver",   "hunter",  "tailor",  "smith",  "fisher", "shepherd",
      "potter",   "carpenter", "knight", "king",    "queen",    "prince",  "princess", "merchant", "soldier",
      "doctor",   "teacher", "painter",  "poet",    "gardener", "cook",    "judge",   "captain", "priest", "wizard",
      "giant"};
  return r;
}

inline const std::vector<std::string>& objects() {
  static const std::vector<std::string> o{
      "apples",  "lanterns", "baskets", "ribbons", "kettles", "drums",  "flutes",  "hammers", "mirrors", "candles",
      "blankets", "cloaks",  "shovels", "ropes",   "bells",   "coins",  "feathers", "shells", "stones",  "ladders",
      "spoons",  "buckets",  "maps",    "keys",    "crowns",  "swords", "harps",   "needles", "pipes",   "wheels"};
  return o;
}

inline const std::vector<std::string>& places() {
  static const std::vector<std::string> p{"river", "garden", "market", "castle", "forest", "village", "meadow",
                                          "harbor", "mill",  "bridge", "church", "hill",   "cottage", "well",
                                          "orchard"};
  return p;
}

}  // namespace detail

// Names used by the generator for train, valid and the p=0 test split.
inline const std::vector<std::string>& corpus_names() {
  static const std::vector<std::string> n = [] {
    auto all = detail::syllable_names("bdgklmn", "aeiou", "ny");
    Rng rng(7);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(500);
    return all;
  }();
  return n;
}

// Replacement names; built from a consonant set disjoint from corpus_names().
inline const std::vector<std::string>& default_oov_lexicon() {
  static const std::vector<std::string> n = detail::syllable_names("prstvz", "aeiou", "lr");
  return n;
}

// ---- generation -------------------------------------------------------------

struct ReadingSizes {
  std::size_t train = 1000;
  std::size_t valid = 200;
  std::size_t test = 500;
};

struct ReadingCorpus {
  std::vector<ClozeQuestion> train, valid, test;
};

namespace detail {

inline text::TokenSeq words_of(const std::string& s) {
  text::TokenSeq out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(text::word(w));
  return out;
}

// Template with {A} and {B} standing for person slots.
inline text::TokenSeq fill(const std::string& tmpl, const std::string& a, const std::string& b = {}) {
  text::TokenSeq out;
  for (auto& t : words_of(tmpl)) {
    if (t.text == "{A}") out.push_back(text::entity(a, person_type));
    else if (t.text == "{B}") out.push_back(text::entity(b, person_type));
    else out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

// Recovers the answer the templates encode: the person right after the role
// word in "the ROLE X lived ..." for role cues, or the subject of
// "X carried OBJECT ..." for object cues. nullopt when absent or ambiguous.
inline std::optional<std::string> template_oracle(const ClozeQuestion& q) {
  std::size_t blank = 0;
  while (blank < q.query.size() && q.query[blank].text != blank_token) ++blank;
  if (blank == q.query.size()) return std::nullopt;
  std::set<std::string> found;
  if (blank == 0 && q.query.size() > 2 && q.query[1].text == "carried") {
    const std::string& obj = q.query[2].text;
    for (const auto& s : q.story) {
      if (s.size() > 3 && s[0].is_ne && s[1].text == "carried" && s[2].text == obj) found.insert(s[0].text);
    }
  } else if (blank >= 1) {
    const std::string& role = q.query[blank - 1].text;
    for (const auto& s : q.story) {
      if (s.size() > 3 && s[0].text == "the" && s[1].text == role && s[2].is_ne && s[3].text == "lived") {
        found.insert(s[2].text);
      }
    }
  }
  if (found.size() != 1) return std::nullopt;
  return *found.begin();
}

// One question: ten characters, each with a role, six of them carrying an
// object, two meetings, two bystanders who are not candidates, and a query
// blanking the character named by either a role or an object cue.
inline ClozeQuestion generate_question(std::uint64_t seed, const std::vector<std::string>& names = corpus_names()) {
  Rng rng(seed);
  if (names.size() < candidate_count + 2) throw GenerationError("name lexicon too small for a story");
  std::vector<std::string> pool = names;
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::string> chars(pool.begin(), pool.begin() + candidate_count);
  std::vector<std::string> extras(pool.begin() + candidate_count, pool.begin() + candidate_count + 2);
  std::vector<std::string> roles = detail::roles(), objects = detail::objects();
  std::shuffle(roles.begin(), roles.end(), rng);
  std::shuffle(objects.begin(), objects.end(), rng);
  const auto& places = detail::places();

  std::vector<text::TokenSeq> sentences;
  for (std::size_t i = 0; i < candidate_count; ++i) {
    sentences.push_back(detail::fill("the " + roles[i] + " {A} lived near the " + pick(rng, places) + " .", chars[i]));
  }
  std::vector<std::size_t> order(candidate_count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t carriers = 6;
  for (std::size_t k = 0; k < carriers; ++k) {
    sentences.push_back(
        detail::fill("{A} carried " + objects[k] + " to the " + pick(rng, places) + " .", chars[order[k]]));
  }
  for (int k = 0; k < 2; ++k) {
    const std::size_t a = uniform_index(rng, candidate_count);
    std::size_t b = uniform_index(rng, candidate_count - 1);
    if (b >= a) ++b;
    sentences.push_back(detail::fill("{A} met {B} by the " + pick(rng, places) + " .", chars[a], chars[b]));
  }
  for (const auto& x : extras) {
    sentences.push_back(detail::fill("{A} sang quietly near the " + pick(rng, places) + " .", x));
  }
  if (sentences.size() != story_sentences) throw GenerationError("story template produced wrong sentence count");
  std::shuffle(sentences.begin(), sentences.end(), rng);

  ClozeQuestion q;
  q.story = std::move(sentences);
  const std::size_t kind = uniform_index(rng, 3);
  std::size_t who = 0;
  if (kind == 1) {
    const std::size_t k = uniform_index(rng, carriers);
    who = order[k];
    q.query = detail::fill(std::string(blank_token) + " carried " + objects[k] + " home .", "");
  } else {
    who = uniform_index(rng, candidate_count);
    if (kind == 0) {
      q.query = detail::fill("the " + roles[who] + " " + blank_token + " was happy .", "");
    } else {
      std::size_t other = uniform_index(rng, candidate_count - 1);
      if (other >= who) ++other;
      q.query = detail::fill("{A} thanked the " + roles[who] + " " + blank_token + " .", chars[other]);
    }
  }
  q.answer = chars[who];
  q.candidates = chars;
  std::shuffle(q.candidates.begin(), q.candidates.end(), rng);
  validate(q);
  if (template_oracle(q) != q.answer) throw GenerationError("template oracle disagrees with the generated answer");
  return q;
}

inline ReadingCorpus generate_corpus(std::uint64_t seed, const ReadingSizes& sizes = {}) {
  ReadingCorpus c;
  std::size_t split = 0;
  for (auto [out, n] : {std::pair{&c.train, sizes.train}, std::pair{&c.valid, sizes.valid},
                        std::pair{&c.test, sizes.test}}) {
    const std::uint64_t split_seed = derive_seed(seed, 200 + split++);
    out->reserve(n);
    for (std::size_t i = 0; i < n; ++i) out->push_back(generate_question(derive_seed(split_seed, i)));
  }
  return c;
}

// ---- OOV test sets ----------------------------------------------------------

struct OovSpec {
  unsigned percent = 0;              // 0..100
  std::vector<std::string> lexicon;  // replacement names
};

inline const std::vector<unsigned>& oov_percents() {
  static const std::vector<unsigned> p{0, 20, 40, 60, 80, 100};
  return p;
}

inline std::size_t renamed_count(unsigned percent, std::size_t distinct) {
  return (static_cast<std::size_t>(percent) * distinct + 99) / 100;
}

using Rename = std::map<std::string, std::string>;

inline Rename invert(const Rename& r) {
  Rename out;
  for (const auto& [a, b] : r) {
    if (!out.emplace(b, a).second) throw InvariantError("rename is not injective");
  }
  return out;
}

// Renames NE tokens, answer and candidates; other tokens stay as they are.
inline ClozeQuestion apply_rename(const ClozeQuestion& q, const Rename& r) {
  auto map = [&](const std::string& s) {
    auto it = r.find(s);
    return it == r.end() ? s : it->second;
  };
  ClozeQuestion out = q;
  for (auto& s : out.story) {
    for (auto& t : s) {
      if (t.is_ne) t.text = map(t.text);
    }
  }
  for (auto& t : out.query) {
    if (t.is_ne) t.text = map(t.text);
  }
  out.answer = map(out.answer);
  for (auto& c : out.candidates) c = map(c);
  return out;
}

inline std::set<std::string> entity_set(const std::vector<ClozeQuestion>& qs) {
  std::set<std::string> s;
  for (const auto& q : qs) {
    for (const auto& e : q.entities()) s.insert(e);
  }
  return s;
}

// Picks ceil(p% of the distinct NEs) of question `q` and maps each to its own
// lexicon name. `seed` fixes the choice.
inline Rename draw_rename(const ClozeQuestion& q, const OovSpec& spec, std::uint64_t seed) {
  std::vector<std::string> ents = q.entities();
  const std::size_t k = renamed_count(spec.percent, ents.size());
  if (spec.lexicon.size() < k) {
    throw GenerationError("replacement lexicon has " + std::to_string(spec.lexicon.size()) + " names, a question needs " +
                          std::to_string(k));
  }
  Rng rng(seed);
  std::shuffle(ents.begin(), ents.end(), rng);
  std::vector<std::string> lex = spec.lexicon;
  std::shuffle(lex.begin(), lex.end(), rng);
  Rename r;
  for (std::size_t i = 0; i < k; ++i) r[ents[i]] = lex[i];
  return r;
}

// One renamed copy of `test`. Throws GenerationError when the lexicon is too
// small or shares a name with train/valid.
inline std::vector<ClozeQuestion> make_oov_testset(const std::vector<ClozeQuestion>& test, const OovSpec& spec,
                                                   const std::set<std::string>& seen_entities,
                                                   std::uint64_t seed = 0) {
  if (spec.percent > 100) throw UsageError("OOV percentage must be in [0, 100], got " + std::to_string(spec.percent));
  for (const auto& n : spec.lexicon) {
    if (seen_entities.contains(n)) {
      throw GenerationError("replacement name '" + n + "' already occurs in train or valid");
    }
  }
  std::set<std::string> uniq(spec.lexicon.begin(), spec.lexicon.end());
  if (uniq.size() != spec.lexicon.size()) throw GenerationError("replacement lexicon has duplicate names");
  std::vector<ClozeQuestion> out;
  out.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (spec.percent == 0) {
      out.push_back(test[i]);
      continue;
    }
    out.push_back(apply_rename(test[i], draw_rename(test[i], spec, derive_seed(seed, i * 131 + spec.percent))));
  }
  return out;
}

// ---- files ------------------------------------------------------------------

inline json question_to_json(const ClozeQuestion& q) {
  json j;
  json story = json::array();
  for (const auto& s : q.story) {
    json js;
    harness::tokens_to_json(s, js);
    story.push_back(std::move(js));
  }
  j["story"] = std::move(story);
  json jq;
  harness::tokens_to_json(q.query, jq);
  j["query"] = std::move(jq);
  j["answer"] = q.answer;
  j["candidates"] = q.candidates;
  return j;
}

inline ClozeQuestion question_from_json(const json& j) {
  ClozeQuestion q;
  try {
    for (const auto& s : j.at("story")) q.story.push_back(harness::tokens_from_json(s));
    q.query = harness::tokens_from_json(j.at("query"));
    q.answer = j.at("answer").get<std::string>();
    q.candidates = j.at("candidates").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed cloze record: ") + e.what());
  }
  validate(q);
  return q;
}

inline void save_questions(const std::vector<ClozeQuestion>& qs, const std::filesystem::path& p) {
  std::vector<json> rows;
  rows.reserve(qs.size());
  for (const auto& q : qs) rows.push_back(question_to_json(q));
  harness::write_jsonl(p, rows);
}

inline std::vector<ClozeQuestion> load_questions(const std::filesystem::path& p) {
  std::vector<ClozeQuestion> out;
  for (const auto& j : harness::read_jsonl(p)) out.push_back(question_from_json(j));
  return out;
}

inline void save_corpus(const ReadingCorpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_questions(c.train, dir / "train.jsonl");
  save_questions(c.valid, dir / "valid.jsonl");
  save_questions(c.test, dir / "test.jsonl");
}

inline ReadingCorpus load_corpus(const std::filesystem::path& dir) {
  return ReadingCorpus{load_questions(dir / "train.jsonl"), load_questions(dir / "valid.jsonl"),
                       load_questions(dir / "test.jsonl")};
}

// Standard children's-book block format: lines "1 ..." to "20 ..." and a line
// "21 query<TAB>answer<TAB><TAB>c1|c2|...", blocks separated by blank lines.
// Tokens equal to a candidate are marked as NEs.
inline std::vector<ClozeQuestion> parse_cbt(std::istream& in) {
  std::vector<ClozeQuestion> out;
  std::vector<std::string> block;
  std::size_t line_no = 0;
  auto split_ws = [](const std::string& s) {
    std::vector<std::string> w;
    std::istringstream is(s);
    for (std::string t; is >> t;) w.push_back(t);
    return w;
  };
  auto flush = [&] {
    if (block.empty()) return;
    if (block.size() != story_sentences + 1) {
      throw DataError("CBT block ending at line " + std::to_string(line_no) + " has " + std::to_string(block.size()) +
                      " lines, expected 21");
    }
    ClozeQuestion q;
    std::vector<std::vector<std::string>> sents;
    for (std::size_t i = 0; i < story_sentences; ++i) {
      const std::string& l = block[i];
      const auto sp = l.find(' ');
      if (sp == std::string::npos || l.substr(0, sp) != std::to_string(i + 1)) {
        throw DataError("CBT line '" + l.substr(0, 30) + "' is not numbered " + std::to_string(i + 1));
      }
      sents.push_back(split_ws(l.substr(sp + 1)));
    }
    const std::string& last = block.back();
    const auto sp = last.find(' ');
    if (sp == std::string::npos || last.substr(0, sp) != "21") throw DataError("CBT query line is not numbered 21");
    std::vector<std::string> fields;
    std::string rest = last.substr(sp + 1), f;
    std::istringstream fs(rest);
    while (std::getline(fs, f, '\t')) fields.push_back(f);
    if (fields.size() < 4) throw DataError("CBT query line needs query, answer and candidates separated by tabs");
    q.answer = fields[1];
    std::set<std::string> cands;
    std::istringstream cs(fields.back());
    for (std::string c; std::getline(cs, c, '|');) {
      if (!c.empty()) {
        q.candidates.push_back(c);
        cands.insert(c);
      }
    }
    auto tokens = [&](const std::vector<std::string>& ws) {
      text::TokenSeq seq;
      for (const auto& w : ws) seq.push_back(cands.contains(w) ? text::entity(w, "NE") : text::word(w));
      return seq;
    };
    for (const auto& s : sents) q.story.push_back(tokens(s));
    q.query = tokens(split_ws(fields[0]));
    validate(q);
    out.push_back(std::move(q));
    block.clear();
  };
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    block.push_back(line);
  }
  flush();
  return out;
}

inline std::vector<ClozeQuestion> load_cbt(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  return parse_cbt(in);
}

}  // namespace netable::reading
