#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/random.hpp"
#include "netable/db/retrieval.hpp"
#include "netable/harness/io.hpp"

namespace netable::dialog {

using harness::json;

namespace col {
inline constexpr std::size_t name = 0;
inline constexpr std::size_t cuisine = 1;
inline constexpr std::size_t location = 2;
inline constexpr std::size_t price = 3;
inline constexpr std::size_t people = 4;
inline constexpr std::size_t rating = 5;
inline constexpr std::size_t phone = 6;
inline constexpr std::size_t address = 7;
inline constexpr std::size_t availability = 8;
}  // namespace col

struct Lexicons {
  std::vector<std::string> cuisines, oov_cuisines;
  std::vector<std::string> locations, oov_locations;
  std::vector<std::string> prices{"cheap", "moderate", "expensive"};
  std::vector<std::string> party_sizes{"two", "four", "six", "eight"};
};

inline const Lexicons& lexicons() {
  static const Lexicons lex{
      {"british", "french", "italian", "indian", "spanish", "thai", "japanese", "korean", "chinese",
       "mexican", "greek", "turkish", "lebanese", "vietnamese", "german", "polish", "russian", "brazilian",
       "peruvian", "moroccan", "ethiopian", "portuguese", "swedish", "hungarian", "cuban"},
      {"nepalese", "filipino", "malaysian", "argentinian", "jamaican", "georgian", "persian", "afghan", "tibetan",
       "icelandic"},
      {"london", "paris", "rome", "madrid", "tokyo", "seoul", "bombay", "beijing", "hanoi", "bangkok", "berlin",
       "warsaw", "moscow", "lisbon", "athens", "istanbul", "beirut", "cairo", "lima", "rio", "havana", "vienna",
       "prague", "oslo", "dublin"},
      {"nairobi", "lagos", "quito", "manila", "jakarta", "tbilisi", "tehran", "kabul", "lhasa", "reykjavik"},
  };
  return lex;
}

// System responses shared by all three tasks. Task-4 answers carry NE-type tags.
inline const std::vector<std::string>& candidate_texts() {
  static const std::vector<std::string> c{
      "hello what can i help you with today",
      "i'm on it",
      "any preference on a type of cuisine",
      "where should it be",
      "how many people would be in your party",
      "which price range are looking for",
      "ok let me look into some options for you",
      "api_call",
      "sure is there anything else to update",
      "great let me do the reservation",
      "here it is NE_phone",
      "here it is NE_address",
      "you're welcome",
  };
  return c;
}

namespace cand {
inline constexpr std::size_t hello = 0, on_it = 1, ask_cuisine = 2, ask_location = 3, ask_people = 4,
                             ask_price = 5, look = 6, api_call = 7, anything_else = 8, reserve = 9,
                             phone = 10, address = 11, welcome = 12;
}

inline text::TokenSeq split_words(const std::string& s) {
  text::TokenSeq out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = s.find(' ', i);
    if (j == std::string::npos) j = s.size();
    if (j > i) out.push_back(text::word(s.substr(i, j - i)));
    i = j + 1;
  }
  return out;
}

struct Turn {
  char speaker = 'u';  // 'u' user, 's' system
  text::TokenSeq tokens;
  std::optional<std::size_t> candidate;  // gold response index on system turns
  std::optional<db::DbQuery> db;         // gold retrieval issued at this system turn
};

struct Dialog {
  int task = 1;
  std::vector<Turn> turns;

  std::size_t system_turns() const {
    return static_cast<std::size_t>(std::count_if(turns.begin(), turns.end(), [](const Turn& t) { return t.speaker == 's'; }));
  }
};

enum class Split { train, valid, test, test_oov };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    case Split::test_oov: return "test_oov";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  for (Split x : {Split::train, Split::valid, Split::test, Split::test_oov}) {
    if (to_string(x) == s) return x;
  }
  throw UsageError("unknown split '" + s + "'");
}

struct DialogSizes {
  std::size_t train = 1000, valid = 500, test = 1000, test_oov = 1000;
  std::size_t of(Split s) const {
    switch (s) {
      case Split::train: return train;
      case Split::valid: return valid;
      case Split::test: return test;
      case Split::test_oov: return test_oov;
    }
    return 0;
  }
};

// ---- restaurant table -----------------------------------------------------

namespace detail {

inline std::string pseudo_word(Rng& rng, const std::string& consonants, const std::string& vowels, std::size_t syl) {
  std::string w;
  for (std::size_t i = 0; i < syl; ++i) {
    w += consonants[uniform_index(rng, consonants.size())];
    w += vowels[uniform_index(rng, vowels.size())];
  }
  w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

// Train and OOV names use disjoint syllable inventories, so no OOV name can
// coincide with a training name.
inline std::string restaurant_name(Rng& rng, bool oov) {
  const std::string cons = oov ? "prstv" : "bdklm";
  const std::string vow = oov ? "eiu" : "ao";
  return pseudo_word(rng, cons, vow, 2) + "_" + pseudo_word(rng, cons, vow, 2);
}

}  // namespace detail

inline db::DbTable generate_restaurant_db(Rng& rng) {
  const Lexicons& lex = lexicons();
  std::vector<std::string> cuisines = lex.cuisines, locations = lex.locations;
  cuisines.insert(cuisines.end(), lex.oov_cuisines.begin(), lex.oov_cuisines.end());
  locations.insert(locations.end(), lex.oov_locations.begin(), lex.oov_locations.end());
  const std::set<std::string> train_c(lex.cuisines.begin(), lex.cuisines.end());
  const std::set<std::string> train_l(lex.locations.begin(), lex.locations.end());

  std::set<std::string> used;
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : cuisines) {
    for (const auto& l : locations) {
      const bool oov = !train_c.contains(c) || !train_l.contains(l);
      std::vector<std::string> names;
      if (c == "british" && l == "london") names = {"The_Place", "The_Fancy_Pub"};
      const std::size_t n = std::max<std::size_t>(names.size(), 1 + uniform_index(rng, 3));
      while (names.size() < n) {
        std::string nm;
        for (int attempt = 0; attempt < 1000 && (nm.empty() || used.contains(nm)); ++attempt) {
          nm = detail::restaurant_name(rng, oov);
        }
        if (used.contains(nm)) throw GenerationError("restaurant name lexicon exhausted");
        names.push_back(nm);
        used.insert(nm);
      }
      for (const auto& nm : names) {
        used.insert(nm);
        rows.push_back({nm, c, l, pick(rng, lex.prices), pick(rng, lex.party_sizes),
                        std::to_string(1 + uniform_index(rng, 8)), nm + "_phone", nm + "_address",
                        coin(rng) ? "available" : "full"});
      }
    }
  }
  return db::DbTable({"Restaurant Name", "Cuisine", "Location", "Price Range", "Number of People", "Rating", "Phone",
                      "Address", "Availability"},
                     {true, true, true, false, false, false, true, true, false}, std::move(rows));
}

inline bool is_oov_row(const db::DbTable& db, std::size_t r) {
  const Lexicons& lex = lexicons();
  auto in = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  return !in(lex.cuisines, db.cell(r, col::cuisine)) || !in(lex.locations, db.cell(r, col::location));
}

// Rows whose cuisine and location both come from the OOV lexicons (tasks 1/2)
// or from the training lexicons.
inline bool fully_oov_row(const db::DbTable& db, std::size_t r) {
  const Lexicons& lex = lexicons();
  auto in = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  return in(lex.oov_cuisines, db.cell(r, col::cuisine)) && in(lex.oov_locations, db.cell(r, col::location));
}

// ---- dialog scripts -------------------------------------------------------

class DialogGenerator {
 public:
  explicit DialogGenerator(const db::DbTable& db) : db_(db) {
    for (std::size_t r = 0; r < db.num_rows(); ++r) {
      if (fully_oov_row(db, r)) oov_rows_.push_back(r);
      if (!is_oov_row(db, r)) train_rows_.push_back(r);
      if (is_oov_row(db, r)) oov_name_rows_.push_back(r);
    }
  }

  Dialog generate(int task, Split split, std::uint64_t seed) const {
    Rng rng(seed);
    switch (task) {
      case 1: return task12(rng, split, false);
      case 2: return task12(rng, split, true);
      case 4: return task4(rng, split);
      default: throw UsageError("dialog task must be 1, 2 or 4");
    }
  }

 private:
  struct Prefs {
    std::string cuisine, location, people, price;
  };

  text::Token ne(const std::string& v, std::size_t c) const {
    // DB-membership rule: the column holding the string gives the type.
    auto type = db_.classify(v);
    if (!type) throw GenerationError("'" + v + "' is not in an NE column");
    (void)c;
    return text::entity(v, *type);
  }

  static text::TokenSeq words(const std::string& s) { return split_words(s); }

  static void append(text::TokenSeq& a, const text::TokenSeq& b) { a.insert(a.end(), b.begin(), b.end()); }

  void user(Dialog& d, text::TokenSeq t) const { d.turns.push_back(Turn{'u', std::move(t), std::nullopt, std::nullopt}); }

  void system(Dialog& d, std::size_t c, std::optional<db::DbQuery> q = std::nullopt) const {
    d.turns.push_back(Turn{'s', split_words(candidate_texts()[c]), c, std::move(q)});
  }

  text::TokenSeq cuisine_phrase(Rng& rng, const std::string& c, bool answer) const {
    text::TokenSeq t;
    const std::size_t form = uniform_index(rng, answer ? 3 : 2);
    if (form == 0) {
      t = words("with");
      t.push_back(ne(c, col::cuisine));
      append(t, words("food"));
    } else if (form == 1) {
      t = words(answer ? "i love" : "serving");
      t.push_back(ne(c, col::cuisine));
      append(t, words("food"));
    } else {
      t.push_back(ne(c, col::cuisine));
    }
    return t;
  }

  text::TokenSeq location_phrase(Rng& rng, const std::string& l, bool answer) const {
    text::TokenSeq t;
    const std::size_t form = uniform_index(rng, answer ? 3 : 2);
    if (form == 2) {
      t.push_back(ne(l, col::location));
    } else {
      t = words("in");
      t.push_back(ne(l, col::location));
      if (answer && form == 1) append(t, words("please"));
    }
    return t;
  }

  static text::TokenSeq people_phrase(Rng& rng, const std::string& n, bool answer) {
    switch (uniform_index(rng, 2)) {
      case 0: return words((answer ? "we will be " : "for ") + n + (answer ? "" : " people"));
      default: return words("for " + n + " please");
    }
  }

  static text::TokenSeq price_phrase(Rng& rng, const std::string& p, bool answer) {
    if (!answer) return words("in a " + p + " price range");
    switch (uniform_index(rng, 2)) {
      case 0: return words("i am looking for a " + p + " restaurant");
      default: return words(p + " please");
    }
  }

  db::DbQuery rows_query(const Prefs& p) const {
    return db::DbQuery{{{col::cuisine, p.cuisine}, {col::location, p.location}, {col::price, p.price}, {col::people, p.people}},
                       {}};
  }

  const std::vector<std::size_t>& anchors(Split split, bool by_name) const {
    if (split == Split::test_oov) return by_name ? oov_name_rows_ : oov_rows_;
    return train_rows_;
  }

  Prefs prefs_of(std::size_t r) const {
    return {db_.cell(r, col::cuisine), db_.cell(r, col::location), db_.cell(r, col::people), db_.cell(r, col::price)};
  }

  void greet(Rng& rng, Dialog& d) const {
    static const std::vector<std::string> g{"hi", "hello", "good morning", "hello there"};
    user(d, words(pick(rng, g)));
    system(d, cand::hello);
  }

  Dialog task12(Rng& rng, Split split, bool update) const {
    Dialog d;
    d.task = update ? 2 : 1;
    Prefs p = prefs_of(pick(rng, anchors(split, false)));
    // Task 2 needs a preference change that still matches some restaurant;
    // anchors without one are redrawn.
    Prefs updated = p;
    text::TokenSeq update_utt;
    if (update) {
      std::size_t attempts = 0;
      while (!update_prefs(rng, split, updated, update_utt)) {
        if (++attempts > 1000) throw GenerationError("no preference update matches any restaurant");
        p = updated = prefs_of(pick(rng, anchors(split, false)));
      }
    }
    greet(rng, d);

    // Slots the user volunteers in the opening request.
    const bool s_c = coin(rng, 0.3), s_l = coin(rng, 0.3), s_n = coin(rng, 0.3), s_p = coin(rng, 0.3);
    static const std::vector<std::string> asks{"can you book a table", "may i have a table",
                                               "i'd like to book a table", "can you make a restaurant reservation"};
    text::TokenSeq req = words(pick(rng, asks));
    if (s_c) append(req, cuisine_phrase(rng, p.cuisine, false));
    if (s_l) append(req, location_phrase(rng, p.location, false));
    if (s_n) append(req, people_phrase(rng, p.people, false));
    if (s_p) append(req, price_phrase(rng, p.price, false));
    user(d, req);
    system(d, cand::on_it);

    text::TokenSeq next = words("<silence>");
    auto ask = [&](bool stated, std::size_t question, text::TokenSeq answer) {
      if (stated) return;
      user(d, next);
      system(d, question);
      next = std::move(answer);
    };
    ask(s_c, cand::ask_cuisine, cuisine_phrase(rng, p.cuisine, true));
    ask(s_l, cand::ask_location, location_phrase(rng, p.location, true));
    ask(s_n, cand::ask_people, people_phrase(rng, p.people, true));
    ask(s_p, cand::ask_price, price_phrase(rng, p.price, true));
    user(d, next);
    system(d, cand::look);
    user(d, words("<silence>"));
    system(d, cand::api_call, rows_query(p));

    if (update) {
      user(d, update_utt);
      system(d, cand::anything_else);
      user(d, words("no"));
      system(d, cand::look);
      user(d, words("<silence>"));
      system(d, cand::api_call, rows_query(updated));
    }
    return d;
  }

  // Changes one preference so the new set still matches at least one row.
  bool update_prefs(Rng& rng, Split split, Prefs& p, text::TokenSeq& utt) const {
    std::vector<int> slots{0, 1, 2, 3};
    std::shuffle(slots.begin(), slots.end(), rng);
    const auto& pool = anchors(split, false);
    for (int s : slots) {
      std::vector<std::string> options;
      for (auto r : pool) {
        Prefs o = prefs_of(r);
        const bool same_rest = (s == 0 || o.cuisine == p.cuisine) && (s == 1 || o.location == p.location) &&
                               (s == 2 || o.people == p.people) && (s == 3 || o.price == p.price);
        const std::string& v = s == 0 ? o.cuisine : s == 1 ? o.location : s == 2 ? o.people : o.price;
        const std::string& old = s == 0 ? p.cuisine : s == 1 ? p.location : s == 2 ? p.people : p.price;
        if (same_rest && v != old && std::find(options.begin(), options.end(), v) == options.end()) options.push_back(v);
      }
      if (options.empty()) continue;
      std::sort(options.begin(), options.end());
      const std::string v = pick(rng, options);
      if (s == 0) {
        p.cuisine = v;
        utt = words("instead could it be");
        utt.push_back(ne(v, col::cuisine));
        append(utt, words("cuisine"));
      } else if (s == 1) {
        p.location = v;
        utt = words("actually i would prefer in");
        utt.push_back(ne(v, col::location));
      } else if (s == 2) {
        p.people = v;
        utt = words("can you make it for " + v + " people");
      } else {
        p.price = v;
        utt = words("actually i would prefer a " + v + " price range");
      }
      return true;
    }
    return false;
  }

  Dialog task4(Rng& rng, Split split) const {
    Dialog d;
    d.task = 4;
    const std::size_t r = pick(rng, anchors(split, true));
    const std::string& name = db_.cell(r, col::name);
    greet(rng, d);
    static const std::vector<std::string> book{"can you make a restaurant reservation at",
                                               "i would like to book a table at", "please book a table at"};
    text::TokenSeq req = words(pick(rng, book));
    req.push_back(ne(name, col::name));
    user(d, req);
    system(d, cand::reserve);

    static const std::vector<std::string> ask_phone{"what is the phone number of the restaurant",
                                                    "do you have its phone number", "may i have the phone number"};
    static const std::vector<std::string> ask_addr{"may i have the address of the restaurant", "what is the address",
                                                   "can you provide the address"};
    const std::size_t requests = 1 + uniform_index(rng, 2);
    bool phone_first = coin(rng);
    for (std::size_t k = 0; k < requests; ++k) {
      const bool phone = (k == 0) == phone_first;
      user(d, words(pick(rng, phone ? ask_phone : ask_addr)));
      system(d, phone ? cand::phone : cand::address,
             db::DbQuery{{{col::name, name}}, {phone ? col::phone : col::address}});
    }
    static const std::vector<std::string> thanks{"thanks", "thank you", "that's all thanks"};
    user(d, words(pick(rng, thanks)));
    system(d, cand::welcome);
    return d;
  }

  const db::DbTable& db_;
  std::vector<std::size_t> train_rows_;
  std::vector<std::size_t> oov_rows_;
  std::vector<std::size_t> oov_name_rows_;
};

struct DialogData {
  int task = 1;
  db::DbTable db;
  std::vector<text::TokenSeq> candidates;
  std::map<Split, std::vector<Dialog>> splits;
};

inline std::vector<text::TokenSeq> candidate_set() {
  std::vector<text::TokenSeq> out;
  for (const auto& c : candidate_texts()) out.push_back(split_words(c));
  return out;
}

inline DialogData generate_task(int task, std::uint64_t seed, DialogSizes sizes = {}) {
  DialogData data;
  data.task = task;
  Rng rng(derive_seed(seed, 0));
  data.db = generate_restaurant_db(rng);
  data.candidates = candidate_set();
  DialogGenerator gen(data.db);
  for (Split s : {Split::train, Split::valid, Split::test, Split::test_oov}) {
    auto& out = data.splits[s];
    const std::uint64_t split_seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(s) + 10 * task);
    for (std::size_t i = 0; i < sizes.of(s); ++i) out.push_back(gen.generate(task, s, derive_seed(split_seed, i)));
  }
  return data;
}

// ---- files ------------------------------------------------------------------

inline json dialog_to_json(const Dialog& d) {
  json turns = json::array(), gold = json::array(), db_gold = json::array(), nes = json::array();
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Turn& t = d.turns[i];
    json jt{{"speaker", std::string(1, t.speaker)}};
    harness::tokens_to_json(t.tokens, jt);
    for (const auto& s : jt["ne_spans"]) nes.push_back(json::array({i, s[0], s[1]}));
    turns.push_back(std::move(jt));
    if (t.candidate) gold.push_back({{"turn", i}, {"candidate", *t.candidate}});
    if (t.db) {
      json cons = json::array();
      for (const auto& [c, v] : t.db->constraints) cons.push_back(json::array({c, v}));
      db_gold.push_back({{"turn", i}, {"constraints", cons}, {"answer_columns", t.db->answer_columns}});
    }
  }
  return {{"task", d.task},          {"turns", turns},       {"candidates_ref", "candidates.txt"},
          {"gold", gold},            {"db_gold", db_gold},   {"ne_annotations", nes}};
}

inline Dialog dialog_from_json(const json& j, std::size_t n_candidates) {
  Dialog d;
  try {
    d.task = j.at("task").get<int>();
    for (const auto& jt : j.at("turns")) {
      Turn t;
      const auto sp = jt.at("speaker").get<std::string>();
      if (sp != "u" && sp != "s") throw DataError("speaker must be u or s");
      t.speaker = sp[0];
      t.tokens = harness::tokens_from_json(jt);
      d.turns.push_back(std::move(t));
    }
    for (const auto& g : j.at("gold")) {
      const auto i = g.at("turn").get<std::size_t>();
      const auto c = g.at("candidate").get<std::size_t>();
      if (i >= d.turns.size() || c >= n_candidates) throw DataError("gold response out of range");
      d.turns[i].candidate = c;
    }
    for (const auto& g : j.at("db_gold")) {
      const auto i = g.at("turn").get<std::size_t>();
      if (i >= d.turns.size()) throw DataError("db gold turn out of range");
      db::DbQuery q;
      for (const auto& c : g.at("constraints")) q.constraints.emplace_back(c.at(0).get<std::size_t>(), c.at(1).get<std::string>());
      q.answer_columns = g.at("answer_columns").get<std::vector<std::size_t>>();
      d.turns[i].db = std::move(q);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed dialog record: ") + e.what());
  }
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const char want = i % 2 == 0 ? 'u' : 's';
    if (d.turns[i].speaker != want) throw DataError("dialog turns must alternate user/system");
    if (want == 's' && !d.turns[i].candidate) throw DataError("system turn without gold response");
  }
  return d;
}

inline void save_task(const DialogData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  data.db.save(dir / "db.tsv");
  std::string cands;
  for (const auto& c : data.candidates) cands += text::join(c) + "\n";
  harness::write_file(dir / "candidates.txt", cands);
  for (const auto& [split, dialogs] : data.splits) {
    std::vector<json> rows;
    for (const auto& d : dialogs) rows.push_back(dialog_to_json(d));
    harness::write_jsonl(dir / (to_string(split) + ".jsonl"), rows);
  }
}

inline DialogData load_task(const std::filesystem::path& dir) {
  DialogData data;
  data.db = db::DbTable::load(dir / "db.tsv");
  std::istringstream in(harness::read_file(dir / "candidates.txt"));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) data.candidates.push_back(split_words(line));
  }
  for (Split s : {Split::train, Split::valid, Split::test, Split::test_oov}) {
    const auto p = dir / (to_string(s) + ".jsonl");
    if (!std::filesystem::exists(p)) throw DataError("missing dialog split " + p.string());
    for (const auto& j : harness::read_jsonl(p)) data.splits[s].push_back(dialog_from_json(j, data.candidates.size()));
  }
  if (data.splits[Split::train].empty()) throw DataError("empty training split in " + dir.string());
  data.task = data.splits[Split::train].front().task;
  return data;
}

}  // namespace netable::dialog
