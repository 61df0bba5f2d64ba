#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "netable/core/optimizer.hpp"
#include "netable/db/retrieval.hpp"
#include "netable/harness/train_loop.hpp"
#include "netable/memory/memory_network.hpp"
#include "netable/ne/ne_table.hpp"
#include "netable/nn/embedding.hpp"
#include "netable/nn/rnn.hpp"
#include "netable/tasks/dialog_data.hpp"
#include "netable/text/vocabulary.hpp"

namespace netable::dialog {

using ad::Graph;
using ad::Var;

inline const std::string user_marker = "<u>";
inline const std::string system_marker = "<s>";

struct DialogConfig {
  nn::NeMode mode = nn::NeMode::with_ne;
  std::size_t embedding_size = 40;
  std::size_t hops = 3;
  std::size_t max_memory = 32;  // recency embeddings; older slots share the last one
  double recurrence_gain = 0.9;  // sentence RNN starts with Wh = gain * I
  double row_loss_weight = 0.1;  // row cross-entropy sums over every restaurant
  ad::OptimizerConfig optimizer{.kind = ad::OptimizerKind::adam, .learning_rate = 0.001, .epsilon = 1e-8};
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  std::size_t patience = 15;  // row attention sits on a plateau for the first 10-20 epochs
  ne::NeAttention ne_attention = ne::NeAttention::softmax;
};

// Per-split results. Response and dialog rates are over dialogs; the
// sub-attention rates are over individual retrievals.
struct DialogMetrics {
  std::size_t dialogs = 0;
  std::size_t responses = 0;
  std::size_t retrievals = 0;
  double per_response = 0.0;
  double per_dialog = 0.0;
  double db_retrieval = 0.0;  // dialogs whose every retrieval is right
  double per_dialog_plus_db = 0.0;
  std::optional<double> acc, acr, arr_ne, arr_word;
  std::size_t failures = 0;
};

inline json to_json(const DialogMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"dialogs", m.dialogs},
          {"responses", m.responses},
          {"retrievals", m.retrievals},
          {"per_response", m.per_response},
          {"per_dialog", m.per_dialog},
          {"db_retrieval", m.db_retrieval},
          {"per_dialog_plus_db", m.per_dialog_plus_db},
          {"acc", opt(m.acc)},
          {"acr", opt(m.acr)},
          {"arr_ne", opt(m.arr_ne)},
          {"arr_non_ne", opt(m.arr_word)},
          {"failures", m.failures}};
}

struct DialogOutcome {
  std::vector<std::size_t> responses;  // predicted candidate per system turn
  std::vector<bool> response_ok;
  std::vector<db::DbPrediction> retrievals;
  std::vector<std::string> rendered;  // predicted responses with NE tags filled in

  bool all_responses() const { return std::all_of(response_ok.begin(), response_ok.end(), [](bool b) { return b; }); }
  bool all_retrievals() const {
    return std::all_of(retrievals.begin(), retrievals.end(), [](const auto& r) { return r.correct; });
  }
};

class DialogModel {
 public:
  DialogModel(const DialogData& data, DialogConfig cfg, std::uint64_t init_seed)
      : db_(data.db), candidates_(data.candidates), cfg_(cfg) {
    const bool with_ne = cfg.mode == nn::NeMode::with_ne;
    vocab_.add(user_marker);
    vocab_.add(system_marker);
    for (std::size_t c = 0; c < db_.num_columns(); ++c) {
      for (const auto& t : db_.heading_tokens(c)) vocab_.add(t);
      if (db_.is_ne(c)) types_.add(db_.ne_type(c));
      if (db_.is_ne(c) && with_ne) continue;
      for (const auto& v : db_.column_values(c)) vocab_.add(v);
    }
    for (const auto& c : candidates_) vocab_.add_all(c, false);
    auto it = data.splits.find(Split::train);
    if (it != data.splits.end()) {
      for (const auto& d : it->second) {
        for (const auto& t : d.turns) vocab_.add_all(t.tokens, false);
      }
    }
    Rng rng(init_seed);
    const std::size_t e = cfg.embedding_size;
    words_ = std::make_unique<nn::EmbeddingTable>(params_, "words", vocab_, e, rng);
    type_emb_ = std::make_unique<nn::EmbeddingTable>(params_, "ne_types", types_, e, rng);
    time_ = &params_.add_zeros("memory.time", ad::Shape{cfg.max_memory, e});
    rnn_ = std::make_unique<nn::RnnEncoder>(params_, "sentence_rnn", e, e, rng, cfg.recurrence_gain);
    // Context for f_φ: last hidden state joined with the NE-type embedding, so
    // one-word answers of different types get distinguishable keys.
    f_phi_ = std::make_unique<ne::NeGenerator>(params_, "f_phi", 2 * e, e, rng);
    retriever_ = std::make_unique<db::DbRetriever>(params_, "h_psi", db_, *words_,
                                                   db::DbRetrieverConfig{e, e, data.task == 4, cfg.mode, cfg.ne_attention, cfg.row_loss_weight},
                                                   rng);
  }

  ad::ParameterStore& params() noexcept { return params_; }
  const DialogConfig& config() const noexcept { return cfg_; }
  const text::Vocabulary& vocabulary() const noexcept { return vocab_; }
  const db::DbTable& table() const noexcept { return db_; }
  const ne::NeGenerator& f_phi() const noexcept { return *f_phi_; }
  const db::DbRetriever& h_psi() const noexcept { return *retriever_; }

  Var loss(Graph& g, const Dialog& d) const {
    std::vector<Var> terms;
    walk(g, d, [&](const Turn& sys, Var logits, Var state, const ne::NeTable& table) {
      terms.push_back(g.softmax_cross_entropy(logits, *sys.candidate));
      if (sys.db) terms.push_back(retriever_->loss(g, state, &table, *sys.db));
    });
    return g.sum(terms);
  }

  DialogOutcome predict(const Dialog& d) const {
    Graph g;
    DialogOutcome out;
    walk(g, d, [&](const Turn& sys, Var logits, Var state, const ne::NeTable& table) {
      const std::size_t best = mem::argmax(g.value(logits));
      out.responses.push_back(best);
      out.response_ok.push_back(best == *sys.candidate);
      std::string text = text::join(candidates_[best]);
      if (sys.db) {
        out.retrievals.push_back(retriever_->predict(g, state, &table, *sys.db));
        const auto& p = out.retrievals.back();
        for (auto [r, c] : p.cells) {
          const std::string tag = db_.ne_type(c);
          if (auto pos = text.find(tag); pos != std::string::npos) text.replace(pos, tag.size(), db_.cell(r, c));
        }
      }
      out.rendered.push_back(std::move(text));
    });
    return out;
  }

 private:
  using SystemVisit = std::function<void(const Turn&, Var logits, Var state, const ne::NeTable&)>;

  Var encode(Graph& g, const text::TokenSeq& tokens, const std::string& marker, ne::NeTable* table,
             std::size_t turn) const {
    text::TokenSeq seq;
    if (!marker.empty()) seq.push_back(text::word(marker));
    seq.insert(seq.end(), tokens.begin(), tokens.end());
    nn::TokenInputs in{words_.get(), type_emb_.get(), true};
    nn::NeHook hook = [&](Graph& gg, const text::Token& t, std::size_t pos, Var context) {
      if (!table) throw DataError("NE in a candidate response");
      Var key = f_phi_->generate(gg, gg.concat({context, type_emb_->lookup(gg, t.ne_type)}));
      table->insert(gg, key, t.text, t.ne_type, "t" + std::to_string(turn) + ":" + std::to_string(pos));
      return key;
    };
    return rnn_->encode(g, seq, cfg_.mode, in, hook).final;
  }

  // Replays the gold history; at each system turn hands the response logits
  // and the memory-read state to `visit`.
  void walk(Graph& g, const Dialog& d, const SystemVisit& visit) const {
    std::vector<Var> cands;
    for (const auto& c : candidates_) cands.push_back(encode(g, c, "", nullptr, 0));
    ne::NeTable table(cfg_.embedding_size);
    std::vector<Var> history;
    Var time = g.parameter(*time_);
    for (std::size_t i = 0; i + 1 < d.turns.size(); i += 2) {
      const Turn& u = d.turns[i];
      const Turn& s = d.turns[i + 1];
      Var q = encode(g, u.tokens, user_marker, &table, i);
      mem::MemoryBank bank;
      for (std::size_t k = 0; k < history.size(); ++k) {
        const std::size_t age = std::min(history.size() - 1 - k, cfg_.max_memory - 1);
        bank.add(g.add(history[k], g.gather(time, age)), "turn " + std::to_string(k));
      }
      Var state = mem::read(g, q, bank, cfg_.hops);
      visit(s, mem::score_candidates(g, state, cands), state, table);
      history.push_back(q);
      history.push_back(encode(g, s.tokens, system_marker, &table, i + 1));
    }
  }

  const db::DbTable& db_;
  std::vector<text::TokenSeq> candidates_;
  DialogConfig cfg_;
  text::Vocabulary vocab_;
  text::Vocabulary types_;
  ad::ParameterStore params_;
  std::unique_ptr<nn::EmbeddingTable> words_;
  std::unique_ptr<nn::EmbeddingTable> type_emb_;
  ad::Parameter* time_ = nullptr;
  std::unique_ptr<nn::RnnEncoder> rnn_;
  std::unique_ptr<ne::NeGenerator> f_phi_;
  std::unique_ptr<db::DbRetriever> retriever_;
};

inline DialogMetrics summarize(const std::vector<DialogOutcome>& outcomes) {
  DialogMetrics m;
  m.dialogs = outcomes.size();
  std::size_t resp_ok = 0, dlg_ok = 0, db_ok = 0, both = 0;
  std::size_t n_acc = 0, acc = 0, acr = 0, n_ne = 0, ne_ok = 0, n_word = 0, word_ok = 0;
  for (const auto& o : outcomes) {
    m.responses += o.response_ok.size();
    resp_ok += static_cast<std::size_t>(std::count(o.response_ok.begin(), o.response_ok.end(), true));
    const bool r = o.all_responses(), b = o.all_retrievals();
    dlg_ok += r;
    db_ok += b;
    both += r && b;
    for (const auto& p : o.retrievals) {
      ++m.retrievals;
      m.failures += p.failed;
      acr += p.acr_ok;
      if (p.acc_ok) {
        ++n_acc;
        acc += *p.acc_ok;
      }
      if (p.arr_ne_ok) {
        ++n_ne;
        ne_ok += *p.arr_ne_ok;
      }
      if (p.arr_word_ok) {
        ++n_word;
        word_ok += *p.arr_word_ok;
      }
    }
  }
  auto rate = [](std::size_t k, std::size_t n) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; };
  m.per_response = rate(resp_ok, m.responses);
  m.per_dialog = rate(dlg_ok, m.dialogs);
  m.db_retrieval = rate(db_ok, m.dialogs);
  m.per_dialog_plus_db = rate(both, m.dialogs);
  if (m.retrievals) m.acr = rate(acr, m.retrievals);
  if (n_acc) m.acc = rate(acc, n_acc);
  if (n_ne) m.arr_ne = rate(ne_ok, n_ne);
  if (n_word) m.arr_word = rate(word_ok, n_word);
  return m;
}

inline DialogMetrics evaluate(const DialogModel& model, const std::vector<Dialog>& split, std::size_t jobs = 1) {
  return summarize(harness::parallel_map<DialogOutcome>(split.size(), jobs,
                                                        [&](std::size_t i) { return model.predict(split[i]); }));
}

// Entities mentioned by the user in a split.
inline std::set<std::string> mentioned_entities(const std::vector<Dialog>& dialogs) {
  std::set<std::string> s;
  for (const auto& d : dialogs) {
    for (const auto& t : d.turns) {
      for (const auto& tok : t.tokens) {
        if (tok.is_ne) s.insert(tok.text);
      }
    }
  }
  return s;
}

// Early-stopping monitor. The combined rate alone stays flat at zero for the
// without-NE model, so the response and retrieval rates are averaged in.
inline double validation_score(const DialogMetrics& m) {
  return (m.per_response + m.per_dialog + m.db_retrieval + m.per_dialog_plus_db) / 4.0;
}

struct DialogRun {
  harness::TrainResult train;
  std::map<Split, DialogMetrics> metrics;
};

inline DialogRun train_and_evaluate(DialogModel& model, const DialogData& data, std::uint64_t shuffle_seed,
                                    std::size_t jobs = 1, bool verbose = false) {
  const DialogConfig& cfg = model.config();
  ad::Optimizer opt(model.params(), cfg.optimizer);
  harness::LoopOptions lo;
  lo.max_epochs = cfg.max_epochs;
  lo.batch_size = cfg.batch_size;
  lo.shuffle_seed = shuffle_seed;
  lo.rule = harness::StopRule::validation_patience;
  lo.patience = cfg.patience;
  lo.verbose = verbose;
  lo.label = "dialog-" + std::to_string(data.task) + "/" + nn::to_string(cfg.mode);
  const auto& train = data.splits.at(Split::train);
  const auto& valid = data.splits.at(Split::valid);
  DialogRun run;
  run.train = harness::run_training<Dialog>(
      model.params(), opt, train, [&](Graph& g, const Dialog& d) { return model.loss(g, d); },
      [&] { return validation_score(evaluate(model, valid, jobs)); }, lo);
  for (Split s : {Split::valid, Split::test, Split::test_oov}) run.metrics[s] = evaluate(model, data.splits.at(s), jobs);
  return run;
}

}  // namespace netable::dialog
