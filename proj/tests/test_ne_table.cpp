#include <gtest/gtest.h>

#include <cmath>
#include <unordered_set>

#include "netable/core/gradcheck.hpp"
#include "netable/ne/ne_table.hpp"

using namespace netable;
using netable::ad::Graph;
using netable::ad::Var;

namespace {

ne::NeTable table_of(Graph& g, const std::vector<std::vector<double>>& keys, const std::vector<std::string>& values) {
  ne::NeTable t(keys.front().size());
  for (std::size_t i = 0; i < keys.size(); ++i) t.insert(g, g.constant_vector(keys[i]), values[i], "PERSON", "c" + std::to_string(i));
  return t;
}

}  // namespace

TEST(NeTable, InsertChecksKeySize) {
  Graph g;
  ne::NeTable t(3);
  EXPECT_THROW(t.insert(g, g.constant_vector({1, 2}), "Ann", "PERSON", "x"), ShapeError);
  t.insert(g, g.constant_vector({1, 2, 3}), "Ann", "PERSON", "x");
  EXPECT_EQ(t.size(), 1u);
  EXPECT_TRUE(t.contains_value("Ann"));
  EXPECT_FALSE(t.contains_value("ann"));
}

TEST(NeTable, ValueMaskMarksEveryOccurrence) {
  Graph g;
  auto t = table_of(g, {{1, 0}, {0, 1}, {1, 1}}, {"Ann", "Bo", "Ann"});
  EXPECT_EQ(t.value_mask("Ann"), (std::vector<double>{1, 0, 1}));
  EXPECT_EQ(t.value_mask("Cy"), (std::vector<double>{0, 0, 0}));
}

TEST(Retrieve, EmptyTableIsRetrievalError) {
  Graph g;
  ne::NeTable t(2);
  EXPECT_THROW(ne::retrieve(g, t, g.constant_vector({1, 0})), RetrievalError);
}

TEST(Retrieve, QuerySizeChecked) {
  Graph g;
  auto t = table_of(g, {{1, 0}}, {"Ann"});
  EXPECT_THROW(ne::retrieve(g, t, g.constant_vector({1, 0, 0})), ShapeError);
}

// Softmax weights and the picked value against a scalar oracle.
TEST(Retrieve, SoftmaxMatchesOracle) {
  Graph g;
  const std::vector<std::vector<double>> keys{{0.5, -1.0}, {2.0, 0.25}, {-0.5, 1.5}};
  auto t = table_of(g, keys, {"Ann", "Bo", "Cy"});
  const std::vector<double> q{0.8, -0.4};
  auto r = ne::retrieve(g, t, g.constant_vector(q));
  std::vector<double> s;
  for (const auto& k : keys) s.push_back(k[0] * q[0] + k[1] * q[1]);
  double z = 0.0;
  for (double v : s) z += std::exp(v);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g.value(r.attention)[i], std::exp(s[i]) / z, 1e-14);
  EXPECT_EQ(r.value, "Bo");
  EXPECT_EQ(r.best, 1u);
}

TEST(Retrieve, AllowedSetRestrictsInference) {
  Graph g;
  auto t = table_of(g, {{1, 0}, {0.5, 0}, {0, 1}}, {"Ann", "Bo", "Cy"});
  const std::unordered_set<std::string> allowed{"Bo", "Cy"};
  auto r = ne::retrieve(g, t, g.constant_vector({1, 0}), ne::NeAttention::softmax, &allowed);
  EXPECT_EQ(r.value, "Bo");
  EXPECT_EQ(g.value(r.attention).size(), 3u);
  const std::unordered_set<std::string> none{"Zed"};
  EXPECT_THROW(ne::retrieve(g, t, g.constant_vector({1, 0}), ne::NeAttention::softmax, &none), RetrievalError);
}

TEST(Retrieve, SigmoidSelectsAboveHalf) {
  Graph g;
  auto t = table_of(g, {{3, 0}, {-3, 0}, {1, 0}}, {"Ann", "Bo", "Cy"});
  auto r = ne::retrieve(g, t, g.constant_vector({1, 0}), ne::NeAttention::sigmoid);
  EXPECT_EQ(r.selected, (std::vector<std::string>{"Ann", "Cy"}));
}

// Loss with a repeated gold value is -log of the summed softmax mass.
TEST(RetrievalLoss, SumsMassOfAllGoldEntries) {
  Graph g;
  const std::vector<std::vector<double>> keys{{1, 0}, {0, 1}, {0.5, 0.5}};
  auto t = table_of(g, keys, {"Ann", "Bo", "Ann"});
  const std::vector<double> q{0.3, 0.9};
  auto r = ne::retrieve(g, t, g.constant_vector(q));
  const Var loss = ne::retrieval_loss(g, r, t, "Ann");
  std::vector<double> e;
  double z = 0.0;
  for (const auto& k : keys) {
    e.push_back(std::exp(k[0] * q[0] + k[1] * q[1]));
    z += e.back();
  }
  EXPECT_NEAR(g.value(loss).item(), -std::log((e[0] + e[2]) / z), 1e-12);
}

// Property: scaling the query towards one key makes that key's value win, for
// random tables of distinct random keys.
TEST(RetrieveProperty, AlignedQueryRetrievesItsKey) {
  Rng rng(77);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + uniform_index(rng, 6), m = 1 + uniform_index(rng, 8);
    Graph g;
    ne::NeTable t(d);
    std::vector<std::vector<double>> keys;
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> k(d);
      double norm = 0.0;
      for (double& v : k) {
        v = n01(rng);
        norm += v * v;
      }
      for (double& v : k) v /= std::sqrt(norm);  // unit keys: the aligned one has the largest dot product
      keys.push_back(k);
      t.insert(g, g.constant_vector(k), "E" + std::to_string(i), "PERSON", "c");
    }
    const std::size_t target = uniform_index(rng, m);
    auto q = keys[target];
    for (double& v : q) v *= 5.0;
    const auto r = ne::retrieve(g, t, g.constant_vector(q));
    EXPECT_EQ(r.value, "E" + std::to_string(target));
  }
}

// f_φ and g_θ are MLPs; gradients through keys generated on the fly.
TEST(Modules, GeneratorAndRetrieverGradients) {
  Rng rng(9);
  ad::ParameterStore ps;
  const std::size_t d = 5;
  ne::NeGenerator f(ps, "f", d, d, rng);
  ne::NeRetriever q(ps, "g", d, d, rng);
  auto& s = ps.add("s", ad::detail::random_tensor({d}, rng));
  auto& c0 = ps.add("c0", ad::detail::random_tensor({d}, rng));
  auto& c1 = ps.add("c1", ad::detail::random_tensor({d}, rng));
  const auto res = ad::check_gradients("f+g", ps, [&](Graph& g) {
    ne::NeTable t(d);
    t.insert(g, f.generate(g, g.parameter(c0)), "Ann", "PERSON", "0");
    t.insert(g, f.generate(g, g.parameter(c1)), "Bo", "PERSON", "1");
    return ne::retrieval_loss(g, ne::retrieve(g, t, q.query(g, g.parameter(s))), t, "Bo");
  }, rng, 20);
  EXPECT_TRUE(res.passed(1e-4)) << res.max_rel_error << " at " << res.worst;
  Graph g;
  EXPECT_THROW(f.generate(g, g.constant_vector({1, 2})), ShapeError);
}

TEST(NeTable, DebugDumpListsValues) {
  Graph g;
  auto t = table_of(g, {{3, 4}}, {"Ann"});
  const auto j = t.debug_dump(g);
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["value"], "Ann");
  EXPECT_DOUBLE_EQ(j[0]["key_norm"].get<double>(), 5.0);
}

TEST(NeAttention, ParseRejectsUnknown) {
  EXPECT_EQ(ne::parse_ne_attention("sigmoid"), ne::NeAttention::sigmoid);
  EXPECT_THROW(ne::parse_ne_attention("hard"), ConfigError);
}
