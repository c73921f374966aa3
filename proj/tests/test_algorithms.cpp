#include <gtest/gtest.h>

#include "pdqn/algorithms.hpp"
#include "pdqn/exchange.hpp"
#include "test_util.hpp"

using namespace pdqn;

namespace {

AlgorithmConfig make(Variant v, int K = 1, double alpha = 2.0, double eps_d = 0.5) {
  AlgorithmConfig c;
  c.variant = v;
  c.K = K;
  c.alpha = alpha;
  c.eps_d = eps_d;
  return c;
}

struct Small {
  Problem problem = generate_quadratic(6, 3, 0, 2);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(6, 2));
  ReferenceSolution ref = centralized_solution(problem);
};

}  // namespace

TEST(Config, RoundsPerIteration) {
  for (int K : {0, 1, 2, 3}) {
    EXPECT_EQ(rounds_per_iteration(make(Variant::pdqn, K)), K + 5);
    EXPECT_EQ(rounds_per_iteration(make(Variant::esom, K)), K + 3);
  }
  EXPECT_EQ(rounds_per_iteration(make(Variant::da)), 2);
  EXPECT_EQ(rounds_per_iteration(make(Variant::dgd)), 1);
  EXPECT_EQ(rounds_per_iteration(make(Variant::extra)), 1);
}

TEST(Config, ViolationsListed) {
  AlgorithmConfig c;
  c.Gamma = 1.5;
  c.alpha = -1;
  c.K = -1;
  auto v = c.violations();
  EXPECT_GE(v.size(), 3u);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  AlgorithmConfig ok;
  EXPECT_TRUE(ok.violations().empty());
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  AlgorithmConfig c = make(Variant::esom, 3, 1.5, 0.25);
  c.initial_curvature = 7.0;
  AlgorithmConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_THROW(config_from_json({{"variant", "pdqn"}, {"bogus", 1}}), std::invalid_argument);
  EXPECT_THROW(config_from_json({{"variant", "newton"}}), std::invalid_argument);
}

TEST(Engine, LedgerCountsEveryIteration) {
  Small s;
  for (Variant v : {Variant::pdqn, Variant::esom, Variant::da, Variant::dgd, Variant::extra}) {
    for (int K : {0, 1, 2, 3}) {
      AlgorithmConfig c = make(v, K);
      c.primal_step = 0.1;
      Engine e(s.problem, s.W, c);
      auto st = initial_states(s.problem, s.W, c);
      for (int t = 0; t < 7; ++t) e.step(st);
      const int expect = rounds_per_iteration(c);
      ASSERT_EQ(e.ledger().rounds_per_iteration().size(), 7u);
      for (int r : e.ledger().rounds_per_iteration()) EXPECT_EQ(r, expect) << variant_name(v) << " K=" << K;
      EXPECT_EQ(e.ledger().total_rounds(), 7LL * expect);
      for (long long per : e.ledger().per_node()) EXPECT_EQ(per, 7LL * expect);
      for (int d : e.ledger().payload_dims()) EXPECT_EQ(d, 3);
    }
  }
}

TEST(Engine, DualAscentNeedsClosedFormMinimizer) {
  Problem pr = generate_logistic(6, 2, 4, 3.0, 1.0, 1.0, 1e-4, 1);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(6, 2));
  EXPECT_THROW(Engine(pr, W, make(Variant::da)), std::invalid_argument);
}

TEST(Pdqn, FirstIterateMatchesDenseOracle) {
  // from x = 0, y = 0, B = I: x_1 = -G_K^{-1} grad f(0)
  Small s;
  for (int K : {0, 1, 2}) {
    AlgorithmConfig c = make(Variant::pdqn, K);
    auto st = initial_states(s.problem, s.W, c);
    StackedVector g(6, 3);
    for (int i = 0; i < 6; ++i) g.block(i) = local_gradient(s.problem, i, Vector::Zero(3));
    std::vector<Matrix> B(6, Matrix::Identity(3, 3));
    Vector expect = -assemble_truncated_primal_inverse(B, s.W, c.alpha, K) * g.flat();
    Engine e(s.problem, s.W, c);
    e.step(st);
    EXPECT_LT((gather_x(st).flat() - expect).norm(), 1e-13 * expect.norm()) << "K=" << K;
  }
}

TEST(FixedPoint, ExactVariantsStayAtSaddle) {
  Problem pr = generate_quadratic(20, 5, 1, 1);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(20, 4));
  ReferenceSolution ref = centralized_solution(pr);
  for (Variant v : {Variant::pdqn, Variant::esom, Variant::da, Variant::extra}) {
    AlgorithmConfig c = make(v, 2);
    Engine e(pr, W, c);
    auto st = saddle_states(pr, W, c, ref.x_star);
    for (int t = 0; t < 3; ++t) {
      e.step(st);
      for (const auto& n : st) EXPECT_LE(n.last_step, 1e-12) << variant_name(v);
    }
  }
}

TEST(FixedPoint, ConstantStepDgdLeavesSaddle) {
  Small s;
  AlgorithmConfig c = make(Variant::dgd);
  Engine e(s.problem, s.W, c);
  auto st = saddle_states(s.problem, s.W, c, s.ref.x_star);
  e.step(st);
  double worst = 0;
  for (const auto& n : st) worst = std::max(worst, n.last_step);
  EXPECT_GT(worst, 1e-6);
}

TEST(Locality, FarNodeCanaryInvisibleWithinOneIteration) {
  // ring of 20: node 10 is 10 hops from node 0, more than any schedule spans
  Problem pr = generate_quadratic(20, 3, 1, 4);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(20, 2));
  for (Variant v : {Variant::pdqn, Variant::esom, Variant::da, Variant::extra, Variant::dgd}) {
    AlgorithmConfig c = make(v, 2);
    c.primal_step = 0.1;
    // one warm-up step so lagged slots are populated, then plant at node 10
    auto base = initial_states(pr, W, c);
    Engine e3(pr, W, c), e4(pr, W, c);
    auto warm = initial_states(pr, W, c);
    e3.step(base);
    e4.step(warm);
    auto clean = base, planted = base;
    planted[10].x.setConstant(1e6);
    planted[10].y.setConstant(-1e6);
    planted[10].B *= 50.0;
    e3.step(clean);
    e4.step(planted);
    for (int i : {0, 1, 2, 18, 19}) {
      EXPECT_EQ(clean[static_cast<std::size_t>(i)].x, planted[static_cast<std::size_t>(i)].x) << variant_name(v);
      EXPECT_EQ(clean[static_cast<std::size_t>(i)].y, planted[static_cast<std::size_t>(i)].y) << variant_name(v);
    }
    EXPECT_NE(clean[10].x, planted[10].x);
  }
}

TEST(Locality, MailboxRejectsNonNeighbors) {
  Topology t = build_d_regular_cycle(6, 2);
  Mailbox box(0, t.neighborhood(0));
  box.deliver(1, Vector::Ones(2));
  EXPECT_NO_THROW(box.from(1));
  EXPECT_THROW(box.from(3), LocalityViolation);
  EXPECT_THROW(box.from(5), LocalityViolation);  // neighbor, but nothing arrived
  EXPECT_THROW(box.deliver(3, Vector::Ones(2)), LocalityViolation);
}

TEST(Determinism, ParallelRoundsMatchSerialBitwise) {
  Problem pr = generate_quadratic(20, 5, 1, 3);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(20, 4));
  for (Variant v : {Variant::pdqn, Variant::esom, Variant::extra}) {
    AlgorithmConfig c = make(v, 2, 2.0, 0.25);
    c.primal_step = 0.2;
    Engine serial(pr, W, c, false), parallel(pr, W, c, true, 4);
    auto a = initial_states(pr, W, c), b = a;
    for (int t = 0; t < 15; ++t) {
      serial.step(a);
      parallel.step(b);
    }
    for (int i = 0; i < 20; ++i) {
      EXPECT_EQ(a[static_cast<std::size_t>(i)].x, b[static_cast<std::size_t>(i)].x);
      EXPECT_EQ(a[static_cast<std::size_t>(i)].B, b[static_cast<std::size_t>(i)].B);
      EXPECT_EQ(a[static_cast<std::size_t>(i)].C, b[static_cast<std::size_t>(i)].C);
    }
  }
}

TEST(Divergence, NonFiniteIterateRaised) {
  Small s;
  AlgorithmConfig c = make(Variant::dgd);
  c.primal_step = 1e3;
  Engine e(s.problem, s.W, c);
  auto st = initial_states(s.problem, s.W, c);
  EXPECT_THROW(
      {
        for (int t = 0; t < 2000; ++t) e.step(st);
      },
      NonFiniteState);
}

TEST(Convergence, ExactMethodsReachTightError) {
  Problem pr = generate_quadratic(20, 5, 0, 1);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(20, 4));
  ReferenceSolution ref = centralized_solution(pr);
  struct Case {
    AlgorithmConfig c;
    int T;
  };
  std::vector<Case> cases{{make(Variant::pdqn, 2, 2.0, 0.5), 60}, {make(Variant::esom, 2, 2.0, 2.0), 60},
                          {make(Variant::da, 0, 1.0, 1.0), 200}};
  AlgorithmConfig extra = make(Variant::extra);
  extra.primal_step = 1.0;
  cases.push_back({extra, 300});
  for (auto& k : cases) {
    Engine e(pr, W, k.c);
    auto st = initial_states(pr, W, k.c);
    for (int t = 0; t < k.T; ++t) e.step(st);
    EXPECT_LT(relative_error(gather_x(st), ref.x_star), 1e-8) << variant_name(k.c.variant);
  }
}

TEST(Tuning, LargestConvergingValueChosen) {
  Small s;
  AlgorithmConfig c = make(Variant::extra);
  TuneResult r = tune_stepsize(c, s.problem, s.W, s.ref.x_star, power_of_two_grid(-4, 4), 100);
  EXPECT_EQ(r.field, "primal_step");
  EXPECT_EQ(r.value, r.config.primal_step);
  bool seen = false;
  for (const auto& cand : r.candidates) {
    if (cand.value > r.value) {
      EXPECT_FALSE(cand.accepted);
    }
    if (cand.value == r.value) seen = cand.accepted;
  }
  EXPECT_TRUE(seen);
}

TEST(Tuning, FieldSelectionAndFailures) {
  Small s;
  EXPECT_EQ(tuned_field(Variant::pdqn), "eps_d");
  EXPECT_EQ(tuned_field(Variant::dgd), "primal_step");
  AlgorithmConfig c = make(Variant::pdqn);
  EXPECT_THROW(tune_stepsize(c, s.problem, s.W, s.ref.x_star, {1.0}, 50, "gamma"), std::invalid_argument);
  AlgorithmConfig d = make(Variant::dgd);
  EXPECT_THROW(tune_stepsize(d, s.problem, s.W, s.ref.x_star, {1e4}, 50), TuningFailed);
  AlgorithmConfig a = make(Variant::esom, 1);
  TuneResult r = tune_stepsize(a, s.problem, s.W, s.ref.x_star, power_of_two_grid(-2, 2), 60, "alpha");
  EXPECT_EQ(r.field, "alpha");
  EXPECT_EQ(r.config.alpha, r.value);
  EXPECT_EQ(r.config.eps_d, a.eps_d);
}

TEST(ErrorMetric, OriginHasUnitError) {
  Small s;
  StackedVector zero(6, 3);
  EXPECT_DOUBLE_EQ(relative_error(zero, s.ref.x_star), 1.0);
}
