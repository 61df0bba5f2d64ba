#include <gtest/gtest.h>

#include <cmath>

#include "netable/core/gradcheck.hpp"
#include "netable/memory/memory_network.hpp"

using namespace netable;
using netable::ad::Graph;
using netable::ad::Var;

namespace {

// u' = u + Σ softmax(u·m)_i m_i with plain doubles.
std::vector<double> hop_oracle(const std::vector<double>& u, const std::vector<std::vector<double>>& m) {
  std::vector<double> s;
  double mx = -1e300;
  for (const auto& r : m) {
    double d = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) d += u[k] * r[k];
    s.push_back(d);
    mx = std::max(mx, d);
  }
  double z = 0.0;
  for (double& v : s) {
    v = std::exp(v - mx);
    z += v;
  }
  std::vector<double> out = u;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t k = 0; k < u.size(); ++k) out[k] += s[i] / z * m[i][k];
  }
  return out;
}

}  // namespace

TEST(Memory, EmptyMemoryIsIdentity) {
  Graph g;
  mem::MemoryBank bank;
  const Var u = g.constant_vector({1, 2, 3});
  const auto r = mem::hop(g, u, bank);
  EXPECT_EQ(g.value(r.state), g.value(u));
  EXPECT_FALSE(r.attention.valid());
}

TEST(Memory, SlotSizeChecked) {
  Graph g;
  mem::MemoryBank bank;
  bank.add(g.constant_vector({1, 2}), "t0");
  EXPECT_THROW(mem::hop(g, g.constant_vector({1, 2, 3}), bank), ShapeError);
}

// Property: K hops equal K applications of the scalar oracle on random inputs.
TEST(MemoryProperty, HopsMatchOracle) {
  Rng rng(12);
  std::uniform_real_distribution<double> u01(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 6), n = 1 + uniform_index(rng, 7), hops = 1 + uniform_index(rng, 3);
    std::vector<double> u(d);
    for (double& v : u) v = u01(rng);
    std::vector<std::vector<double>> m(n, std::vector<double>(d));
    Graph g;
    mem::MemoryBank bank;
    for (auto& r : m) {
      for (double& v : r) v = u01(rng);
      bank.add(g.constant_vector(r), "slot");
    }
    auto want = u;
    for (std::size_t k = 0; k < hops; ++k) want = hop_oracle(want, m);
    const ad::Tensor got = g.value(mem::read(g, g.constant_vector(u), bank, hops));
    for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  }
}

TEST(Memory, AttentionSumsToOne) {
  Graph g;
  mem::MemoryBank bank;
  bank.add(g.constant_vector({1, 0}), "a");
  bank.add(g.constant_vector({0, 1}), "b");
  bank.add(g.constant_vector({1, 1}), "c");
  const auto r = mem::hop(g, g.constant_vector({0.2, -0.7}), bank);
  double s = 0.0;
  for (double v : g.value(r.attention).data()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_EQ(bank.provenance[2], "c");
}

TEST(Memory, ScoreCandidatesAndArgmax) {
  Graph g;
  const Var u = g.constant_vector({1, -1});
  const Var s = mem::score_candidates(g, u, {g.constant_vector({0, 1}), g.constant_vector({2, 0}), g.constant_vector({1, 1})});
  EXPECT_EQ(g.value(s), ad::Tensor::vector({-1, 2, 0}));
  EXPECT_EQ(mem::argmax(g.value(s)), 1u);
  EXPECT_THROW(mem::score_candidates(g, u, {}), ContractError);
}

TEST(Memory, MultiHopGradients) {
  Rng rng(4);
  ad::ParameterStore ps;
  auto& u = ps.add("u", ad::detail::random_tensor({4}, rng));
  std::vector<ad::Parameter*> slots;
  for (int i = 0; i < 3; ++i) slots.push_back(&ps.add("m" + std::to_string(i), ad::detail::random_tensor({4}, rng)));
  const auto res = ad::check_gradients("memory", ps, [&](Graph& g) {
    mem::MemoryBank bank;
    for (auto* p : slots) bank.add(g.parameter(*p), "s");
    Var out = mem::read(g, g.parameter(u), bank, 3);
    return g.dot(out, g.constant_vector({0.3, -0.2, 0.5, 0.1}));
  }, rng, 20);
  EXPECT_TRUE(res.passed(1e-4)) << res.max_rel_error;
}
