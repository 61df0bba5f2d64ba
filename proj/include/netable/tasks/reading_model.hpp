#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/optimizer.hpp"
#include "netable/core/random.hpp"
#include "netable/harness/train_loop.hpp"
#include "netable/memory/memory_network.hpp"
#include "netable/ne/ne_table.hpp"
#include "netable/nn/bow.hpp"
#include "netable/nn/embedding.hpp"
#include "netable/nn/lstm.hpp"
#include "netable/nn/rnn.hpp"
#include "netable/tasks/reading_data.hpp"
#include "netable/text/vocabulary.hpp"

namespace netable::reading {

using ad::Graph;
using ad::Var;

inline constexpr const char* ne_placeholder = "<ne>";

enum class WindowEncoder { bow, lstm };

inline std::string to_string(WindowEncoder e) { return e == WindowEncoder::bow ? "bow" : "lstm"; }

inline WindowEncoder parse_window_encoder(const std::string& s) {
  if (s == "bow") return WindowEncoder::bow;
  if (s == "lstm") return WindowEncoder::lstm;
  throw UsageError("unknown encoder '" + s + "' (expected bow or lstm)");
}

struct ReaderConfig {
  WindowEncoder encoder = WindowEncoder::bow;
  nn::NeMode mode = nn::NeMode::with_ne;
  std::size_t window = 5;
  std::size_t embedding_size = 100;
  std::size_t hops = 1;
  std::size_t embedding_fan_in = 1;  // embeddings start uniform in ±1/sqrt(fan_in)
  ad::OptimizerConfig optimizer{.kind = ad::OptimizerKind::sgd, .learning_rate = 0.05};
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
};

struct ReaderPrediction {
  std::string masked;    // best table entry among candidate values (or best candidate without NE-Table)
  std::string unmasked;  // best entry over the whole table
  bool failed = false;
};

class Reader {
 public:
  Reader(const ReadingCorpus& corpus, ReaderConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg.window % 2 == 0) throw ConfigError("window size must be odd");
    if (cfg.hops == 0) throw ConfigError("hops must be positive");
    const bool with_ne = cfg.mode == nn::NeMode::with_ne;
    vocab_.add(ne_placeholder);
    vocab_.add(blank_token);
    for (const auto* split : {&corpus.train, &corpus.valid}) {
      for (const auto& q : *split) {
        for (const auto& s : q.story) vocab_.add_all(s, !with_ne);
        vocab_.add_all(q.query, !with_ne);
        if (!with_ne) {
          for (const auto& c : q.candidates) vocab_.add(c);
        }
      }
    }
    Rng rng(init_seed);
    const std::size_t e = cfg.embedding_size;
    words_ = std::make_unique<nn::EmbeddingTable>(params_, "words", vocab_, e, rng, cfg.embedding_fan_in);
    if (cfg.encoder == WindowEncoder::lstm) {
      window_lstm_ = std::make_unique<nn::LstmEncoder>(params_, "window_lstm", e, e, rng);
      query_lstm_ = std::make_unique<nn::LstmEncoder>(params_, "query_lstm", e, e, rng);
    }
    if (with_ne) {
      context_lstm_ = std::make_unique<nn::LstmEncoder>(params_, "context_lstm", e, e, rng);
      f_phi_ = std::make_unique<ne::NeGenerator>(params_, "f_phi", e, e, rng);
      g_theta_ = std::make_unique<ne::NeRetriever>(params_, "g_theta", e, e, rng);
    }
  }

  ad::ParameterStore& params() noexcept { return params_; }
  const ad::ParameterStore& params() const noexcept { return params_; }
  const ReaderConfig& config() const noexcept { return cfg_; }
  const text::Vocabulary& vocabulary() const noexcept { return vocab_; }
  bool with_ne() const noexcept { return cfg_.mode == nn::NeMode::with_ne; }

  Var loss(Graph& g, const ClozeQuestion& q) const {
    Forward f = forward(g, q);
    if (with_ne()) {
      if (!f.table.contains_value(q.answer)) return Var{};  // answer only in the blank: nothing to point at
      return ne::retrieval_loss(g, f.retrieval, f.table, q.answer);
    }
    std::vector<double> target(q.candidates.size(), 0.0);
    for (std::size_t i = 0; i < q.candidates.size(); ++i) target[i] = q.candidates[i] == q.answer ? 1.0 : 0.0;
    return g.softmax_cross_entropy(f.logits, target);
  }

  ReaderPrediction predict(const ClozeQuestion& q) const {
    Graph g;
    ReaderPrediction p;
    try {
      Forward f = forward(g, q);
      if (with_ne()) {
        p.masked = f.retrieval.value;
        p.unmasked = f.table[mem::argmax(g.value(f.retrieval.logits))].value;
      } else {
        p.masked = p.unmasked = q.candidates[mem::argmax(g.value(f.logits))];
      }
    } catch (const RetrievalError&) {
      p.failed = true;
    }
    return p;
  }

 private:
  struct Forward {
    ne::NeTable table;
    ne::Retrieval retrieval;
    Var logits;
  };

  Var word(Graph& g, const text::Token& t) const { return words_->lookup(g, t.text); }

  // Input vectors for a window of `seq` around `centre`; in with-NE mode NE
  // positions take the key generated for that occurrence.
  std::vector<Var> window_inputs(Graph& g, const text::TokenSeq& seq, std::size_t centre,
                                 const std::map<std::size_t, Var>& keys) const {
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(cfg_.window / 2);
    std::vector<Var> xs;
    xs.reserve(cfg_.window);
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(centre) + k;
      if (i < 0 || i >= static_cast<std::ptrdiff_t>(seq.size())) {
        xs.push_back(words_->lookup(g, text::pad_token));
        continue;
      }
      const text::Token& t = seq[static_cast<std::size_t>(i)];
      if (t.is_ne && with_ne()) xs.push_back(keys.at(static_cast<std::size_t>(i)));
      else xs.push_back(word(g, t));
    }
    return xs;
  }

  // Context for generating the key of the NE at `pos`: its window with every
  // NE replaced by a placeholder, read by the context LSTM.
  Var ne_context(Graph& g, const text::TokenSeq& seq, std::size_t pos) const {
    text::TokenSeq w = nn::window_extract(seq, pos, cfg_.window);
    std::vector<Var> xs;
    xs.reserve(w.size());
    for (const auto& t : w) xs.push_back(words_->lookup(g, t.is_ne ? std::string(ne_placeholder) : t.text));
    return context_lstm_->encode_vectors(g, xs);
  }

  std::map<std::size_t, Var> make_keys(Graph& g, const text::TokenSeq& seq, const std::string& tag,
                                       ne::NeTable& table) const {
    std::map<std::size_t, Var> keys;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (!seq[i].is_ne) continue;
      Var key = f_phi_->generate(g, ne_context(g, seq, i));
      table.insert(g, key, seq[i].text, seq[i].ne_type, tag + std::to_string(i));
      keys.emplace(i, key);
    }
    return keys;
  }

  Var encode_window(Graph& g, const std::vector<Var>& xs, const nn::LstmEncoder* lstm) const {
    if (cfg_.encoder == WindowEncoder::bow) return nn::bow_encode(g, xs, cfg_.embedding_size);
    return lstm->encode_vectors(g, xs);
  }

  Forward forward(Graph& g, const ClozeQuestion& q) const {
    Forward f{ne::NeTable(cfg_.embedding_size), {}, {}};
    const text::TokenSeq story = q.flat_story();
    std::map<std::size_t, Var> story_keys, query_keys;
    if (with_ne()) {
      story_keys = make_keys(g, story, "s:", f.table);
      query_keys = make_keys(g, q.query, "q:", f.table);
    }
    const std::set<std::string> cands(q.candidates.begin(), q.candidates.end());
    mem::MemoryBank bank;
    for (std::size_t i = 0; i < story.size(); ++i) {
      if (!story[i].is_ne || !cands.contains(story[i].text)) continue;
      bank.add(encode_window(g, window_inputs(g, story, i, story_keys), window_lstm_.get()), "s:" + std::to_string(i));
    }
    std::vector<Var> qx;
    qx.reserve(q.query.size());
    for (std::size_t i = 0; i < q.query.size(); ++i) {
      const text::Token& t = q.query[i];
      qx.push_back(t.is_ne && with_ne() ? query_keys.at(i) : word(g, t));
    }
    Var u = cfg_.encoder == WindowEncoder::bow ? nn::bow_encode(g, qx, cfg_.embedding_size)
                                               : query_lstm_->encode_vectors(g, qx);
    u = mem::read(g, u, bank, cfg_.hops);
    if (with_ne()) {
      const std::unordered_set<std::string> allowed(q.candidates.begin(), q.candidates.end());
      f.retrieval = ne::retrieve(g, f.table, g_theta_->query(g, u), ne::NeAttention::softmax, &allowed);
    } else {
      std::vector<Var> cv;
      cv.reserve(q.candidates.size());
      for (const auto& c : q.candidates) cv.push_back(words_->lookup(g, c));
      f.logits = mem::score_candidates(g, u, cv);
    }
    return f;
  }

  ReaderConfig cfg_;
  text::Vocabulary vocab_;
  ad::ParameterStore params_;
  std::unique_ptr<nn::EmbeddingTable> words_;
  std::unique_ptr<nn::LstmEncoder> window_lstm_, query_lstm_, context_lstm_;
  std::unique_ptr<ne::NeGenerator> f_phi_;
  std::unique_ptr<ne::NeRetriever> g_theta_;
};

struct ReadingMetrics {
  std::size_t count = 0;
  double accuracy = 0.0;           // masked to the candidate set
  double unmasked_accuracy = 0.0;  // any table entry may win
  std::size_t failures = 0;
};

inline json to_json(const ReadingMetrics& m) {
  return {{"count", m.count},
          {"accuracy", m.accuracy},
          {"unmasked_accuracy", m.unmasked_accuracy},
          {"failures", m.failures}};
}

inline ReadingMetrics evaluate(const Reader& model, const std::vector<ClozeQuestion>& split, std::size_t jobs = 1) {
  auto preds = harness::parallel_map<ReaderPrediction>(split.size(), jobs,
                                                        [&](std::size_t i) { return model.predict(split[i]); });
  ReadingMetrics m;
  m.count = split.size();
  std::size_t ok = 0, ok_unmasked = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    m.failures += preds[i].failed;
    ok += !preds[i].failed && preds[i].masked == split[i].answer;
    ok_unmasked += !preds[i].failed && preds[i].unmasked == split[i].answer;
  }
  const double n = split.empty() ? 1.0 : static_cast<double>(split.size());
  m.accuracy = ok / n;
  m.unmasked_accuracy = ok_unmasked / n;
  return m;
}

struct ReadingRun {
  harness::TrainResult train;
  std::map<std::string, ReadingMetrics> metrics;  // "train", "valid", "test", "oov20", ...
};

inline std::string oov_split_name(unsigned p) { return p == 0 ? "test" : "oov" + std::to_string(p); }

// Early stopping on validation accuracy; the best epoch's parameters are kept.
inline harness::TrainResult train(Reader& model, const ReadingCorpus& corpus, std::uint64_t shuffle_seed,
                                  std::size_t jobs = 1, bool verbose = false) {
  const ReaderConfig& cfg = model.config();
  ad::Optimizer opt(model.params(), cfg.optimizer);
  harness::LoopOptions lo;
  lo.max_epochs = cfg.max_epochs;
  lo.batch_size = cfg.batch_size;
  lo.shuffle_seed = shuffle_seed;
  lo.rule = harness::StopRule::validation_patience;
  lo.patience = cfg.patience;
  lo.verbose = verbose;
  lo.label = "reading/" + to_string(cfg.encoder) + "/" + nn::to_string(cfg.mode);
  return harness::run_training<ClozeQuestion>(
      model.params(), opt, corpus.train, [&](Graph& g, const ClozeQuestion& q) { return model.loss(g, q); },
      [&] { return evaluate(model, corpus.valid, jobs).accuracy; }, lo);
}

inline std::set<std::string> seen_entities(const ReadingCorpus& corpus) {
  std::set<std::string> seen = entity_set(corpus.train);
  for (const auto& n : entity_set(corpus.valid)) seen.insert(n);
  return seen;
}

// Trains, then scores the test set under every OOV percentage in `percents`.
inline ReadingRun train_and_evaluate(Reader& model, const ReadingCorpus& corpus, std::uint64_t shuffle_seed,
                                     const std::vector<unsigned>& percents = oov_percents(),
                                     const std::vector<std::string>& lexicon = default_oov_lexicon(),
                                     std::size_t jobs = 1, bool verbose = false) {
  ReadingRun run;
  run.train = train(model, corpus, shuffle_seed, jobs, verbose);
  run.metrics["train"] = evaluate(model, corpus.train, jobs);
  run.metrics["valid"] = evaluate(model, corpus.valid, jobs);
  const auto seen = seen_entities(corpus);
  for (unsigned p : percents) {
    const auto test = make_oov_testset(corpus.test, OovSpec{p, lexicon}, seen);
    run.metrics[oov_split_name(p)] = evaluate(model, test, jobs);
  }
  return run;
}

}  // namespace netable::reading
