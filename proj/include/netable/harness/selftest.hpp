#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "netable/core/checkpoint.hpp"
#include "netable/core/gradcheck.hpp"
#include "netable/db/retrieval.hpp"
#include "netable/db/toy_oracle.hpp"
#include "netable/harness/io.hpp"
#include "netable/ne/ne_table.hpp"
#include "netable/nn/lstm.hpp"
#include "netable/nn/rnn.hpp"
#include "netable/tasks/reading_data.hpp"

namespace netable::harness {

using ad::Graph;
using ad::Var;

// Finite-difference checks of the learned modules, each wired into the loss
// it is trained with: f_φ keys read by g_θ through retrieval, h_ψ through the
// three-step DB loss, plus both sentence encoders.
inline std::vector<ad::GradCheckResult> module_gradient_suite(Rng& rng, std::size_t probes = 20) {
  using ad::detail::random_tensor;
  std::vector<ad::GradCheckResult> out;
  const std::size_t d = 6;

  {  // f_φ alone
    ad::ParameterStore ps;
    ne::NeGenerator f(ps, "f_phi", d, d, rng);
    auto& ctx = ps.add("context", random_tensor({d}, rng));
    const ad::Tensor w = random_tensor({d}, rng);
    out.push_back(ad::check_gradients("f_phi", ps, [&](Graph& g) {
      return g.dot(f.generate(g, g.parameter(ctx)), g.constant(w));
    }, rng, probes));
  }
  {  // g_θ over an NE-Table whose keys come from f_φ
    ad::ParameterStore ps;
    ne::NeGenerator f(ps, "f_phi", d, d, rng);
    ne::NeRetriever gt(ps, "g_theta", d, d, rng);
    auto& state = ps.add("state", random_tensor({d}, rng));
    std::vector<ad::Parameter*> ctx;
    for (int i = 0; i < 4; ++i) ctx.push_back(&ps.add("context" + std::to_string(i), random_tensor({d}, rng)));
    const std::vector<std::string> values{"Ann_Ko", "Bo_Li", "Ann_Ko", "Cy_Ma"};
    out.push_back(ad::check_gradients("g_theta", ps, [&](Graph& g) {
      ne::NeTable table(d);
      for (std::size_t i = 0; i < ctx.size(); ++i) {
        table.insert(g, f.generate(g, g.parameter(*ctx[i])), values[i], "PERSON", "c" + std::to_string(i));
      }
      auto r = ne::retrieve(g, table, gt.query(g, g.parameter(state)));
      return ne::retrieval_loss(g, r, table, "Ann_Ko");
    }, rng, probes));
  }
  {  // h_ψ on a 5x4 table with one NE column
    ad::ParameterStore ps;
    std::vector<std::vector<std::string>> rows{{"Ann_Ko", "w1_0", "w2_1", "w3_0"},
                                               {"Bo_Li", "w1_1", "w2_0", "w3_1"},
                                               {"Cy_Ma", "w1_0", "w2_0", "w3_2"},
                                               {"Bo_Li", "w1_1", "w2_1", "w3_0"},
                                               {"Di_Nu", "w1_2", "w2_1", "w3_1"}};
    db::DbTable table({"Guest Name", "Beta", "Gamma", "Delta"}, {true, false, false, false}, rows);
    text::Vocabulary vocab;
    for (std::size_t c = 0; c < table.num_columns(); ++c) {
      for (const auto& t : table.heading_tokens(c)) vocab.add(t);
      if (!table.is_ne(c)) {
        for (const auto& v : table.column_values(c)) vocab.add(v);
      }
    }
    nn::EmbeddingTable words(ps, "words", vocab, d, rng);
    ne::NeGenerator f(ps, "f_phi", d, d, rng);
    db::DbRetriever h(ps, "h_psi", table, words, db::DbRetrieverConfig{d, d, true, nn::NeMode::with_ne,
                                                                       ne::NeAttention::softmax, 0.5}, rng);
    auto& state = ps.add("state", random_tensor({d}, rng));
    auto& ctx = ps.add("context", random_tensor({d}, rng));
    const db::DbQuery gold{{{0, "Bo_Li"}, {1, "w1_1"}}, {3}};
    out.push_back(ad::check_gradients("h_psi", ps, [&](Graph& g) {
      ne::NeTable ne_table(d);
      ne_table.insert(g, f.generate(g, g.parameter(ctx)), "Bo_Li", table.ne_type(0), "q:0");
      return h.loss(g, g.parameter(state), &ne_table, gold);
    }, rng, probes));
  }
  for (const bool lstm : {false, true}) {
    ad::ParameterStore ps;
    std::vector<ad::Parameter*> xs;
    for (int i = 0; i < 4; ++i) xs.push_back(&ps.add("x" + std::to_string(i), random_tensor({d}, rng)));
    const ad::Tensor w = random_tensor({d}, rng);
    if (lstm) {
      nn::LstmEncoder enc(ps, "lstm", d, d, rng);
      out.push_back(ad::check_gradients("lstm_encoder", ps, [&](Graph& g) {
        std::vector<Var> in;
        for (auto* p : xs) in.push_back(g.parameter(*p));
        return g.dot(enc.encode_vectors(g, in), g.constant(w));
      }, rng, probes));
    } else {
      nn::RnnEncoder enc(ps, "rnn", d, d, rng);
      out.push_back(ad::check_gradients("rnn_encoder", ps, [&](Graph& g) {
        std::vector<Var> in;
        for (auto* p : xs) in.push_back(g.parameter(*p));
        return g.dot(enc.encode_vectors(g, in), g.constant(w));
      }, rng, probes));
    }
  }
  return out;
}

struct OovRoundTripReport {
  std::size_t questions = 0;
  std::size_t failures = 0;
  std::string first_failure;
  bool passed() const { return questions > 0 && failures == 0; }
};

// For generated questions and every OOV percentage: the renamed question has
// exactly ceil(p% of its NEs) new names, none seen in `seen`, non-NE tokens
// untouched, and applying the inverse rename restores the original.
inline OovRoundTripReport oov_round_trip_check(std::uint64_t seed, std::size_t n) {
  OovRoundTripReport rep;
  const auto& lex = reading::default_oov_lexicon();
  std::set<std::string> seen(reading::corpus_names().begin(), reading::corpus_names().end());
  auto fail = [&](const std::string& why) {
    if (rep.failures++ == 0) rep.first_failure = why;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = reading::generate_question(derive_seed(seed, i));
    for (unsigned p : reading::oov_percents()) {
      ++rep.questions;
      const auto r = reading::draw_rename(q, reading::OovSpec{p, lex}, derive_seed(seed, 1000 + i));
      const auto renamed = reading::apply_rename(q, r);
      const auto ents = q.entities();
      if (r.size() != reading::renamed_count(p, ents.size())) fail("wrong number of renamed entities");
      for (const auto& [from, to] : r) {
        if (seen.contains(to)) fail("replacement '" + to + "' is a corpus name");
      }
      for (std::size_t s = 0; s < q.story.size(); ++s) {
        for (std::size_t k = 0; k < q.story[s].size(); ++k) {
          if (!q.story[s][k].is_ne && q.story[s][k] != renamed.story[s][k]) fail("non-NE token changed");
        }
      }
      if (reading::apply_rename(renamed, reading::invert(r)) != q) fail("inverse rename does not restore");
      reading::validate(renamed);
    }
  }
  return rep;
}

// A truncated checkpoint must be refused on load.
inline bool corrupted_checkpoint_detected(const std::filesystem::path& scratch) {
  ad::ParameterStore ps;
  Rng rng(1);
  ps.add_uniform("w", ad::Shape{3, 3}, 3, rng);
  const auto path = scratch / "selftest_checkpoint.json";
  ad::save_checkpoint(path, ad::make_checkpoint(ps, nullptr, 1, json::object()));
  std::string bytes = read_file(path);
  write_file(path, bytes.substr(0, bytes.size() / 2));
  bool detected = false;
  try {
    ad::load_checkpoint(path);
  } catch (const CheckpointError&) {
    detected = true;
  }
  std::filesystem::remove(path);
  return detected;
}

namespace detail {
inline std::string sci(const char* what, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s %.2e", what, v);
  return buf;
}
}  // namespace detail

struct SelftestLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline std::vector<SelftestLine> run_selftest(const std::filesystem::path& scratch, std::uint64_t seed = 2024) {
  std::vector<SelftestLine> out;
  Rng rng(seed);
  auto grads = ad::op_gradient_suite(rng);
  for (auto& r : module_gradient_suite(rng)) grads.push_back(r);
  for (const auto& r : grads) {
    out.push_back({"gradcheck " + r.name, r.passed(1e-4),
                   detail::sci("max relative error", r.max_rel_error) + " at " + r.worst});
  }
  const auto toy = db::toy_oracle_check(seed, 1000);
  out.push_back({"toy DB oracle equivalence", toy.passed(),
                 std::to_string(toy.cases) + " cases, " + std::to_string(toy.mismatches) + " mismatches" +
                     (toy.first_mismatch.empty() ? "" : " (" + toy.first_mismatch + ")")});
  const auto oov = oov_round_trip_check(seed, 50);
  out.push_back({"OOV rename round-trip", oov.passed(),
                 std::to_string(oov.questions) + " renames" + (oov.first_failure.empty() ? "" : ", " + oov.first_failure)});
  std::filesystem::create_directories(scratch);
  out.push_back({"corrupted checkpoint refused", corrupted_checkpoint_detected(scratch), ""});
  return out;
}

}  // namespace netable::harness
