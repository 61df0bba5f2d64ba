#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "netable/core/checkpoint.hpp"
#include "netable/core/gradcheck.hpp"
#include "netable/core/graph.hpp"
#include "netable/core/optimizer.hpp"

using namespace netable;
using namespace netable::ad;

TEST(Tensor, RejectsSizeMismatch) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5, 0.0)), ShapeError);
  EXPECT_THROW(Tensor(Shape{0}), ShapeError);
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_TRUE(t.is_matrix());
}

TEST(Forward, SigmoidAtZero) {
  Graph g;
  Var y = g.sigmoid(g.constant_vector({0.0}));
  EXPECT_DOUBLE_EQ(g.value(y)[0], 0.5);
}

TEST(Forward, SoftmaxUniform) {
  Graph g;
  Var y = g.softmax(g.constant_vector({0.0, 0.0, 0.0}));
  for (double v : g.value(y).data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Forward, DotHandArithmetic) {
  Graph g;
  Var d = g.dot(g.constant_vector({1, 2, 3}), g.constant_vector({4, 5, 6}));
  EXPECT_DOUBLE_EQ(g.value(d).item(), 1 * 4 + 2 * 5 + 3 * 6);
}

TEST(Forward, ShapeErrorNamesOpAndShapes) {
  Graph g;
  try {
    g.dot(g.constant_vector({1, 2}), g.constant_vector({1, 2, 3}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("dot"), std::string::npos);
    EXPECT_NE(msg.find("[2]"), std::string::npos);
    EXPECT_NE(msg.find("[3]"), std::string::npos);
  }
}

TEST(Forward, ApplyDispatchesGenericOps) {
  Graph g;
  Var a = g.constant_vector({1, -2});
  Var b = g.constant_vector({3, 4});
  EXPECT_EQ(g.value(g.apply(OpKind::add, {a, b})), Tensor::vector({4, 2}));
  EXPECT_EQ(g.value(g.apply(OpKind::concat, {a, b})), Tensor::vector({1, -2, 3, 4}));
  EXPECT_THROW(g.apply(OpKind::add, {a}), ShapeError);
  EXPECT_THROW(g.apply(OpKind::gather, {a}), ContractError);
}

TEST(Backward, LinearGradient) {
  ParameterStore ps;
  Parameter& w = ps.add("w", Tensor::vector({0.3, -0.7}));
  Graph g;
  Var loss = g.dot(g.parameter(w), g.constant_vector({1, 2}));
  g.backward(loss);
  ASSERT_TRUE(w.grad);
  EXPECT_EQ(*w.grad, Tensor::vector({1, 2}));
}

TEST(Backward, NonScalarLossIsContractViolation) {
  ParameterStore ps;
  Parameter& w = ps.add("w", Tensor::vector({1, 2}));
  Graph g;
  Var y = g.tanh(g.parameter(w));
  EXPECT_THROW(g.backward(y), ContractError);
}

TEST(Backward, DisjointSubgraphGetsZeroGrad) {
  ParameterStore ps;
  Parameter& a = ps.add("a", Tensor::vector({1, 2}));
  Parameter& b = ps.add("b", Tensor::vector({3, 4}));
  Graph g;
  Var la = g.dot(g.parameter(a), g.parameter(a));
  Var lb = g.dot(g.parameter(b), g.parameter(b));
  (void)lb;
  g.backward(la);
  ASSERT_TRUE(b.grad);
  for (double v : b.grad->data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(*a.grad, Tensor::vector({2, 4}));
}

TEST(Backward, SigmoidCrossEntropyMatchesFiniteDifference) {
  Rng rng(11);
  ParameterStore ps;
  ps.add("w", detail::random_tensor(Shape{4}, rng));
  const Tensor x = detail::random_tensor(Shape{4}, rng);
  static const std::vector<double> target{1.0};
  LossBuilder build = [&](Graph& g) {
    Var w = g.parameter(ps.get("w"));
    Var m = g.stack(std::vector<Var>{w});
    Var z = g.matvec(m, g.constant(x));
    return g.sigmoid_cross_entropy(z, target);
  };
  auto r = check_gradients("sigmoid-xent", ps, build, rng, 20, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Backward, EveryOpPassesGradientCheck) {
  Rng rng(2024);
  for (const auto& r : op_gradient_suite(rng)) {
    EXPECT_EQ(r.probes, 20u) << r.name;
    EXPECT_LE(r.max_rel_error, 1e-4) << r.name << " worst " << r.worst;
  }
}

TEST(Backward, ReverseOrderAccumulatesSharedUse) {
  ParameterStore ps;
  Parameter& w = ps.add("w", Tensor::vector({2.0}));
  Graph g;
  Var v = g.parameter(w);
  Var y = g.mul(v, g.mul(v, v));  // w^3
  g.backward(g.dot(y, g.constant_vector({1.0})));
  EXPECT_DOUBLE_EQ((*w.grad)[0], 12.0);
}

TEST(CrossEntropy, UniformSoftmaxIsLn3) {
  Graph g;
  Var l = g.softmax_cross_entropy(g.constant_vector({0, 0, 0}), 0);
  EXPECT_NEAR(g.value(l).item(), std::log(3.0), 1e-15);
}

TEST(CrossEntropy, SigmoidZeroLogitsIsTwoLn2) {
  Graph g;
  const std::vector<double> mask{1, 0};
  Var l = g.sigmoid_cross_entropy(g.constant_vector({0, 0}), mask);
  EXPECT_NEAR(g.value(l).item(), 2.0 * std::log(2.0), 1e-15);
}

TEST(CrossEntropy, PerfectSigmoidLimitApproachesZero) {
  Graph g;
  const std::vector<double> mask{1, 0};
  Var l = g.sigmoid_cross_entropy(g.constant_vector({40, -40}), mask);
  EXPECT_LT(g.value(l).item(), 1e-15);
  EXPECT_GE(g.value(l).item(), 0.0);
}

TEST(CrossEntropy, RejectsBadTargets) {
  Graph g;
  Var z = g.constant_vector({0, 0, 0});
  EXPECT_THROW(g.softmax_cross_entropy(z, 3), ContractError);
  const std::vector<double> short_mask{1, 0};
  EXPECT_THROW(g.sigmoid_cross_entropy(z, short_mask), ContractError);
  const std::vector<double> empty_mask{0, 0, 0};
  EXPECT_THROW(g.softmax_cross_entropy(z, empty_mask), ContractError);
}

TEST(CrossEntropy, MaskedSoftmaxCreditsAnyGoldUnit) {
  Graph g;
  const std::vector<double> mask{1, 1, 0, 0};
  Var l = g.softmax_cross_entropy(g.constant_vector({0, 0, 0, 0}), mask);
  EXPECT_NEAR(g.value(l).item(), std::log(2.0), 1e-15);
}

TEST(Optimizer, SgdSingleStep) {
  ParameterStore ps;
  Parameter& w = ps.add("w", Tensor::vector({1.0}));
  w.ensure_grad()[0] = 2.0;
  Optimizer opt(ps, {.kind = OptimizerKind::sgd, .learning_rate = 0.05});
  opt.step();
  EXPECT_NEAR(w.value[0], 0.9, 1e-15);
  EXPECT_FALSE(w.grad);
}

TEST(Optimizer, AdamFirstStepMagnitudeIsLearningRate) {
  for (double gval : {1e-3, 0.5, -7.0}) {
    ParameterStore ps;
    Parameter& w = ps.add("w", Tensor::vector({0.25}));
    w.ensure_grad()[0] = gval;
    Optimizer opt(ps, {.kind = OptimizerKind::adam, .learning_rate = 0.001, .epsilon = 1e-8});
    opt.step();
    // m̂ = g, v̂ = g² after bias correction: Δ = lr·g/(|g|+ε).
    const double expected = 0.001 * std::abs(gval) / (std::abs(gval) + 1e-8);
    EXPECT_NEAR(std::abs(w.value[0] - 0.25), expected, 1e-15);
  }
}

TEST(Optimizer, ZeroGradLeavesSgdParameterAndDecaysAdamMoments) {
  ParameterStore ps;
  Parameter& w = ps.add("w", Tensor::vector({1.0}));
  w.ensure_grad()[0] = 0.0;
  Optimizer sgd(ps, {.kind = OptimizerKind::sgd, .learning_rate = 0.05});
  sgd.step();
  EXPECT_EQ(w.value[0], 1.0);

  Optimizer adam(ps, {.kind = OptimizerKind::adam, .learning_rate = 0.01});
  w.ensure_grad()[0] = 1.0;
  adam.step();
  const double m1 = adam.first_moments()[0][0];
  const double v1 = adam.second_moments()[0][0];
  w.ensure_grad()[0] = 0.0;
  adam.step();
  EXPECT_DOUBLE_EQ(adam.first_moments()[0][0], 0.9 * m1);
  EXPECT_DOUBLE_EQ(adam.second_moments()[0][0], 0.999 * v1);
  EXPECT_EQ(adam.steps(), 2u);
}

TEST(Optimizer, MissingGradIsContractViolation) {
  ParameterStore ps;
  ps.add("w", Tensor::vector({1.0}));
  Optimizer opt(ps, {.kind = OptimizerKind::sgd, .learning_rate = 0.05});
  EXPECT_THROW(opt.step(), ContractError);
}

TEST(Optimizer, ClippingBoundsUpdate) {
  ParameterStore ps;
  Parameter& w = ps.add("w", Tensor::vector({0.0, 0.0}));
  w.ensure_grad() = Tensor::vector({30.0, 40.0});
  Optimizer opt(ps, {.kind = OptimizerKind::sgd, .learning_rate = 1.0, .max_grad_norm = 5.0});
  opt.step();
  EXPECT_NEAR(w.value[0], -3.0, 1e-12);
  EXPECT_NEAR(w.value[1], -4.0, 1e-12);
}

TEST(Determinism, ForwardBackwardUpdateBitIdentical) {
  auto run = [] {
    Rng rng(5);
    ParameterStore ps;
    ps.add_uniform("W", Shape{4, 3}, 3, rng);
    ps.add_uniform("b", Shape{4}, 3, rng);
    Optimizer opt(ps, {.kind = OptimizerKind::adam, .learning_rate = 0.01});
    std::vector<double> trace;
    for (int step = 0; step < 5; ++step) {
      Graph g;
      Var h = g.tanh(g.affine(g.parameter(ps.get("W")), g.constant_vector({0.1, -0.2, 0.3}), g.parameter(ps.get("b"))));
      Var loss = g.softmax_cross_entropy(h, 1);
      trace.push_back(g.value(loss).item());
      g.backward(loss);
      opt.step();
    }
    for (double v : ps.get("W").value.data()) trace.push_back(v);
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(Invariants, SoftmaxSumsToOneAndSigmoidInOpenInterval) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 12);
    Tensor x = detail::random_tensor(Shape{n}, rng, -30, 30);
    Graph g;
    Var s = g.softmax(g.constant(x));
    double total = 0;
    for (double v : g.value(s).data()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
    Tensor small = detail::random_tensor(Shape{n}, rng, -20, 20);
    Var sg = g.sigmoid(g.constant(small));
    for (double v : g.value(sg).data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Checkpoint, RoundTripAndShapeRejection) {
  const auto dir = std::filesystem::temp_directory_path() / "netable_ckpt_test";
  std::filesystem::create_directories(dir);
  Rng rng(9);
  ParameterStore ps;
  ps.add_uniform("E", Shape{5, 3}, 3, rng);
  ps.add_uniform("b", Shape{3}, 3, rng);
  Optimizer opt(ps, {.kind = OptimizerKind::adam, .learning_rate = 0.01});
  ps.zero_grad();
  ps.get("b").grad->fill(0.3);
  opt.step();
  save_checkpoint(dir / "a.json", make_checkpoint(ps, &opt, 9, {{"task", "unit"}}));

  ParameterStore other;
  other.add_zeros("E", Shape{5, 3});
  other.add_zeros("b", Shape{3});
  auto loaded = load_checkpoint(dir / "a.json");
  apply_parameters(loaded, other);
  EXPECT_EQ(other.get("E").value, ps.get("E").value);
  Optimizer opt2(other, {.kind = OptimizerKind::adam, .learning_rate = 0.01});
  apply_optimizer_state(loaded, opt2);
  EXPECT_EQ(opt2.steps(), 1u);
  EXPECT_EQ(opt2.first_moments()[1], opt.first_moments()[1]);

  ParameterStore wrong;
  wrong.add_zeros("E", Shape{6, 3});
  wrong.add_zeros("b", Shape{3});
  EXPECT_THROW(apply_parameters(loaded, wrong), CheckpointError);

  std::ofstream(dir / "bad.json") << "{\"format\": \"netable-checkpoint\", \"ver";
  EXPECT_THROW(load_checkpoint(dir / "bad.json"), CheckpointError);
  std::filesystem::remove_all(dir);
}
