#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "netable/nn/bow.hpp"
#include "netable/nn/embedding.hpp"
#include "netable/nn/lstm.hpp"
#include "netable/nn/rnn.hpp"
#include "netable/text/token.hpp"
#include "netable/text/vocabulary.hpp"

using namespace netable;
using netable::ad::Graph;
using netable::ad::Var;

namespace {

struct Fixture {
  text::Vocabulary vocab;
  ad::ParameterStore ps;
  Rng rng{11};
  std::unique_ptr<nn::EmbeddingTable> words;

  explicit Fixture(std::size_t dim = 6) {
    for (const char* w : {"the", "cat", "sat", "on", "mat", "a", "dog", "ran"}) vocab.add(w);
    words = std::make_unique<nn::EmbeddingTable>(ps, "words", vocab, dim, rng);
  }

  text::TokenSeq random_sentence(Rng& r, std::size_t len) const {
    text::TokenSeq s;
    for (std::size_t i = 0; i < len; ++i) s.push_back(text::word(vocab.token(2 + uniform_index(r, vocab.size() - 2))));
    return s;
  }
};

std::vector<double> values(const Graph& g, Var v) { const auto d = g.value(v).data();
  return {d.begin(), d.end()}; }

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Tokenize, SplitsPunctuationAndLowercasesWords) {
  auto classify = [](std::string_view s) -> std::optional<std::string> {
    if (s == "Resto_Paris") return std::string("NE_name");
    return std::nullopt;
  };
  const auto t = text::tokenize("Book Resto_Paris now, please!", classify);
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t[0].text, "book");
  EXPECT_TRUE(t[1].is_ne);
  EXPECT_EQ(t[1].text, "Resto_Paris");
  EXPECT_EQ(t[1].ne_type, "NE_name");
  EXPECT_EQ(t[3].text, ",");
  EXPECT_EQ(t[5].text, "!");
}

TEST(Vocabulary, UnknownMapsToUnkAndRoundTrips) {
  text::Vocabulary v;
  v.add("alpha");
  EXPECT_EQ(v.id("never-seen"), text::Vocabulary::unk_id);
  EXPECT_EQ(v.token(v.id("alpha")), "alpha");
  const auto dir = std::filesystem::temp_directory_path() / "netable_vocab_test.txt";
  v.save(dir);
  const auto w = text::Vocabulary::load(dir);
  EXPECT_EQ(w.size(), v.size());
  EXPECT_EQ(w.id("alpha"), v.id("alpha"));
  std::filesystem::remove(dir);
}

TEST(Embedding, PadRowIsZeroAndRangeFollowsFanIn) {
  Fixture f;
  const auto& w = f.words->weights().value;
  for (double v : w.row(text::Vocabulary::pad_id)) EXPECT_EQ(v, 0.0);
  for (double v : w.data()) EXPECT_LE(std::abs(v), 1.0);

  ad::ParameterStore ps;
  Rng rng(3);
  nn::EmbeddingTable narrow(ps, "n", f.vocab, 4, rng, 100);
  for (double v : narrow.weights().value.data()) EXPECT_LE(std::abs(v), 0.1 + 1e-12);
}

TEST(Embedding, ProbeRecordsEveryLookup) {
  Fixture f;
  Graph g;
  nn::LookupProbe probe;
  f.words->lookup(g, "cat");
  f.words->lookup(g, "Zed_Unknown");
  EXPECT_TRUE(probe.saw("cat"));
  EXPECT_TRUE(probe.saw("Zed_Unknown"));
  EXPECT_FALSE(probe.saw("dog"));
}

TEST(Bow, EqualsSumOfEmbeddings) {
  Fixture f;
  Graph g;
  const text::TokenSeq s{text::word("the"), text::word("cat"), text::word("the")};
  const auto enc = values(g, nn::bow_encode(g, s, *f.words));
  const auto& w = f.words->weights().value;
  std::vector<double> want(f.words->dim(), 0.0);
  for (const auto& t : s) {
    const auto row = w.row(f.vocab.id(t.text));
    for (std::size_t k = 0; k < want.size(); ++k) want[k] += row[k];
  }
  expect_close(enc, want, 1e-12);
}

TEST(Bow, EmptyInputIsZeroVector) {
  Fixture f;
  Graph g;
  const auto z = values(g, nn::bow_encode(g, text::TokenSeq{}, *f.words));
  EXPECT_EQ(z, std::vector<double>(f.words->dim(), 0.0));
}

// Property: BoW is invariant to any permutation of its input.
TEST(BowProperty, PermutationInvariant) {
  Fixture f;
  Rng r(101);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = f.random_sentence(r, 1 + uniform_index(r, 9));
    Graph g;
    const auto a = values(g, nn::bow_encode(g, s, *f.words));
    std::shuffle(s.begin(), s.end(), r);
    const auto b = values(g, nn::bow_encode(g, s, *f.words));
    expect_close(a, b, 1e-12);
  }
}

// Property: recurrent encoders see order. Reversing a sentence with at least
// two distinct words changes the LSTM and RNN final state.
TEST(RecurrentProperty, OrderSensitive) {
  Fixture f;
  nn::LstmEncoder lstm(f.ps, "lstm", 6, 6, f.rng);
  nn::RnnEncoder rnn(f.ps, "rnn", 6, 6, f.rng);
  const nn::TokenInputs in{f.words.get()};
  Rng r(202);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto s = f.random_sentence(r, 2 + uniform_index(r, 6));
    auto rev = s;
    std::reverse(rev.begin(), rev.end());
    if (rev == s) continue;
    Graph g;
    EXPECT_GT(max_abs_diff(values(g, lstm.encode(g, s, *f.words)), values(g, lstm.encode(g, rev, *f.words))), 1e-9);
    EXPECT_GT(max_abs_diff(values(g, rnn.encode(g, s, nn::NeMode::without_ne, in).final),
                           values(g, rnn.encode(g, rev, nn::NeMode::without_ne, in).final)),
              1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

// Hand-computed single LSTM step against the library.
TEST(Lstm, SingleStepMatchesScalarOracle) {
  ad::ParameterStore ps;
  Rng rng(5);
  nn::LstmEncoder lstm(ps, "l", 2, 1, rng);
  // W is [4h, x+h] = [4, 3], b is [4]
  auto& W = ps.get("l.W").value;
  auto& b = ps.get("l.b").value;
  const std::vector<double> wv{0.1, -0.2, 0.3, 0.4, 0.5, -0.6, -0.7, 0.8, 0.9, 0.2, 0.1, -0.3};
  const std::vector<double> bv{0.05, -0.05, 0.1, 0.0};
  std::copy(wv.begin(), wv.end(), W.data().begin());
  std::copy(bv.begin(), bv.end(), b.data().begin());
  const double x0 = 0.7, x1 = -1.1;
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  auto pre = [&](int k) { return wv[3 * k] * x0 + wv[3 * k + 1] * x1 + bv[k]; };
  const double c = sig(pre(0)) * std::tanh(pre(3));
  const double h = sig(pre(2)) * std::tanh(c);
  Graph g;
  const Var out = lstm.encode_vectors(g, {g.constant_vector({x0, x1})});
  EXPECT_NEAR(g.value(out)[0], h, 1e-14);
}

TEST(Rnn, IdentityGainInitialisesRecurrence) {
  ad::ParameterStore ps;
  Rng rng(5);
  nn::RnnEncoder rnn(ps, "r", 3, 3, rng, 0.9);
  const auto& wh = ps.get("r.Wh").value;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(wh.data()[i * 3 + j], i == j ? 0.9 : 0.0);
  }
}

TEST(Rnn, WithNeModeRoutesEntitiesThroughHook) {
  Fixture f;
  nn::RnnEncoder rnn(f.ps, "rnn", 6, 6, f.rng);
  const nn::TokenInputs in{f.words.get()};
  const text::TokenSeq s{text::word("the"), text::entity("Ko_Bar", "NE_name"), text::word("sat")};
  std::vector<std::size_t> hook_positions;
  nn::NeHook hook = [&](Graph& g, const text::Token& t, std::size_t pos, Var) {
    EXPECT_EQ(t.text, "Ko_Bar");
    hook_positions.push_back(pos);
    return g.zeros(6);
  };
  Graph g;
  nn::LookupProbe probe;
  const auto enc = rnn.encode(g, s, nn::NeMode::with_ne, in, hook);
  EXPECT_EQ(hook_positions, std::vector<std::size_t>{1});
  EXPECT_EQ(enc.ne_positions, std::vector<std::size_t>{1});
  EXPECT_FALSE(probe.saw("Ko_Bar"));
  EXPECT_THROW(rnn.encode(g, s, nn::NeMode::with_ne, in), ContractError);
}

TEST(Rnn, WithoutNeModeLooksEntitiesUp) {
  Fixture f;
  nn::RnnEncoder rnn(f.ps, "rnn", 6, 6, f.rng);
  const nn::TokenInputs in{f.words.get()};
  const text::TokenSeq s{text::entity("Ko_Bar", "NE_name")};
  Graph g;
  nn::LookupProbe probe;
  rnn.encode(g, s, nn::NeMode::without_ne, in);
  EXPECT_TRUE(probe.saw("Ko_Bar"));
}

TEST(Window, CentredAndPadded) {
  text::TokenSeq s;
  for (const char* w : {"a", "b", "c", "d"}) s.push_back(text::word(w));
  const auto w0 = nn::window_extract(s, 0, 5);
  ASSERT_EQ(w0.size(), 5u);
  EXPECT_EQ(text::join(w0), "<pad> <pad> a b c");
  EXPECT_EQ(text::join(nn::window_extract(s, 3, 3)), "c d <pad>");
  EXPECT_THROW(nn::window_extract(s, 0, 4), ConfigError);
  EXPECT_THROW(nn::window_extract(s, 4, 3), ContractError);
}

// Property: every window has length b and its middle token is the centre.
TEST(WindowProperty, LengthAndCentre) {
  Fixture f;
  Rng r(303);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = f.random_sentence(r, 1 + uniform_index(r, 12));
    const std::size_t b = 1 + 2 * uniform_index(r, 5);
    const std::size_t pos = uniform_index(r, s.size());
    const auto w = nn::window_extract(s, pos, b);
    ASSERT_EQ(w.size(), b);
    EXPECT_EQ(w[b / 2], s[pos]);
  }
}
