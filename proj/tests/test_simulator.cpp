#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "pdqn/diagnostics.hpp"
#include "pdqn/simulator.hpp"
#include "pdqn/svg.hpp"
#include "pdqn/trace_io.hpp"

using namespace pdqn;

namespace {

AlgorithmConfig pdqn_cfg(int K = 2, double alpha = 2.0, double eps_d = 0.5) {
  AlgorithmConfig c;
  c.K = K;
  c.alpha = alpha;
  c.eps_d = eps_d;
  return c;
}

struct Setup20 {
  Problem problem = generate_quadratic(20, 5, 0, 1);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(20, 4));
  ReferenceSolution ref = centralized_solution(problem);
};

}  // namespace

TEST(Run, TraceStartsAtUnitErrorAndCountsExchanges) {
  Setup20 s;
  RunOptions o;
  o.iterations = 30;
  ConvergenceTrace t = run(s.problem, s.W, pdqn_cfg(), s.ref, o);
  ASSERT_EQ(t.rows.size(), 31u);
  EXPECT_DOUBLE_EQ(t.rows[0].error, 1.0);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    EXPECT_EQ(t.rows[k].iteration, static_cast<int>(k));
    EXPECT_EQ(t.rows[k].exchanges, static_cast<long long>(k) * 7);
  }
  EXPECT_EQ(t.iterations_to(1.0), 0);
  EXPECT_EQ(t.exchanges_to(1.0), 0);
}

TEST(Run, ThresholdQueriesMatchRows) {
  Setup20 s;
  RunOptions o;
  o.iterations = 60;
  ConvergenceTrace t = run(s.problem, s.W, pdqn_cfg(), s.ref, o);
  for (double thr : {1e-2, 1e-5, 1e-8}) {
    auto it = t.iterations_to(thr);
    ASSERT_TRUE(it.has_value());
    EXPECT_LE(t.rows[static_cast<std::size_t>(*it)].error, thr);
    for (int k = 0; k < *it; ++k) EXPECT_GT(t.rows[static_cast<std::size_t>(k)].error, thr);
    EXPECT_EQ(*t.exchanges_to(thr), t.rows[static_cast<std::size_t>(*it)].exchanges);
  }
  EXPECT_FALSE(t.iterations_to(0.0).has_value());
}

TEST(Run, StopBelowEndsEarly) {
  Setup20 s;
  RunOptions o;
  o.iterations = 500;
  o.stop_below = 1e-5;
  ConvergenceTrace t = run(s.problem, s.W, pdqn_cfg(), s.ref, o);
  EXPECT_LE(t.final_error(), 1e-5);
  EXPECT_LT(t.rows.size(), 100u);
}

TEST(Run, AbortRecordsSnapshot) {
  Setup20 s;
  AlgorithmConfig c;
  c.variant = Variant::dgd;
  c.primal_step = 1e3;
  RunOptions o;
  o.iterations = 3000;
  ConvergenceTrace t = run(s.problem, s.W, c, s.ref, o);
  EXPECT_TRUE(t.aborted);
  EXPECT_FALSE(t.abort_reason.empty());
  EXPECT_TRUE(t.snapshot.is_array() || t.snapshot.is_object());
}

TEST(Run, DiagnosticsRefusedAboveDeskScale) {
  Problem pr = generate_quadratic(41, 5, 0, 1);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(41, 4));
  RunOptions o;
  o.diagnostics = true;
  EXPECT_THROW(run(pr, W, pdqn_cfg(), centralized_solution(pr), o), std::invalid_argument);
}

TEST(ErrorMetric, IndependentRecomputation) {
  Setup20 s;
  AlgorithmConfig c = pdqn_cfg();
  Engine e(s.problem, s.W, c);
  auto st = initial_states(s.problem, s.W, c);
  for (int t = 0; t < 12; ++t) {
    e.step(st);
    const double a = relative_error(gather_x(st), s.ref.x_star);
    const double b = error_from_states(st, s.ref.x_star);
    EXPECT_LE(std::abs(a - b), 1e-14 * b);
  }
}

TEST(TraceCsv, RoundTripIsByteExact) {
  Problem pr = generate_quadratic(6, 4, 0, 3);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(6, 2));
  ReferenceSolution ref = centralized_solution(pr);
  for (bool diag : {false, true}) {
    RunOptions o;
    o.iterations = 25;
    o.diagnostics = diag;
    o.seed = 3;
    ConvergenceTrace t = run(pr, W, pdqn_cfg(), ref, o);
    const std::string csv = trace_to_csv(t);
    EXPECT_EQ(csv.rfind(kTraceHeader, 0), 0u);
    std::istringstream in(csv);
    ConvergenceTrace back = read_trace_csv(in);
    EXPECT_EQ(trace_to_csv(back), csv);
    ASSERT_EQ(back.rows.size(), t.rows.size());
    for (std::size_t k = 0; k < t.rows.size(); ++k) EXPECT_EQ(back.rows[k].error, t.rows[k].error);
    EXPECT_EQ(back.rows.back().diagnostics.has_value(), diag);
  }
}

TEST(TraceCsv, RejectsForeignInput) {
  std::istringstream in("iteration,error\n0,1\n");
  EXPECT_THROW(read_trace_csv(in), std::runtime_error);
}

TEST(TraceCsv, SameSeedSameBytes) {
  Setup20 s;
  RunOptions o;
  o.iterations = 40;
  o.seed = 1;
  const std::string a = trace_to_csv(run(s.problem, s.W, pdqn_cfg(), s.ref, o));
  o.parallel = true;
  const std::string b = trace_to_csv(run(s.problem, s.W, pdqn_cfg(), s.ref, o));
  EXPECT_EQ(a, b);
}

TEST(Diagnostics, SaddlePointIsStationary) {
  Problem pr = generate_quadratic(6, 3, 1, 2);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(6, 2));
  ReferenceSolution ref = centralized_solution(pr);
  AlgorithmConfig c = pdqn_cfg();
  auto st = saddle_states(pr, W, c, ref.x_star);
  DiagnosticRecord d = compute_diagnostics(st, pr, W, c, ref.x_star);
  EXPECT_LT(d.sigma_norm, 1e-12);
  EXPECT_LT(d.lyapunov_before, 1e-20);
}

TEST(Diagnostics, CurvatureBoundsHoldAlongRun) {
  Problem pr = generate_quadratic(6, 4, 1, 5);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(6, 2));
  ReferenceSolution ref = centralized_solution(pr);
  RunOptions o;
  o.iterations = 80;
  o.diagnostics = true;
  ConvergenceTrace t = run(pr, W, pdqn_cfg(2, 2.0, 0.25), ref, o);
  int checked = 0;
  for (const auto& r : t.rows) {
    if (!r.diagnostics) continue;
    ++checked;
    EXPECT_TRUE(r.diagnostics->primal_bounds_hold(1e-9)) << "iteration " << r.iteration;
    EXPECT_TRUE(r.diagnostics->dual_bounds_hold(1e-9)) << "iteration " << r.iteration;
    EXPECT_NEAR(r.diagnostics->dual_bound_lower, 0.1, 1e-15);
    EXPECT_NEAR(r.diagnostics->dual_bound_upper, 0.1 + 6 / 0.1, 1e-12);
  }
  EXPECT_EQ(checked, 80);
}

TEST(SeedSweep, DeterministicAndTrivialThreshold) {
  SeedSweepSpec spec;
  spec.variants = {pdqn_cfg()};
  spec.budget = 200;
  SeedSweepResult a = sweep_seeds(spec, 4), b = sweep_seeds(spec, 4);
  ASSERT_EQ(a.variants.size(), 1u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a.variants[0].outcomes[k].seed, spec.first_seed + k);
    EXPECT_EQ(a.variants[0].outcomes[k].exchanges, b.variants[0].outcomes[k].exchanges);
  }
  spec.threshold = 1.0;
  SeedSweepResult t = sweep_seeds(spec, 2);
  for (const auto& o : t.variants[0].outcomes) {
    EXPECT_EQ(o.iterations, 0);
    EXPECT_EQ(o.exchanges, 0);
  }
}

TEST(SeedSweep, CensoredTrialsCounted) {
  SeedSweepSpec spec;
  spec.variants = {pdqn_cfg()};
  spec.budget = 2;
  SeedSweepResult r = sweep_seeds(spec, 3);
  EXPECT_EQ(r.variants[0].censored(), 3);
  Histogram h = exchange_histogram(r.variants[0], 0.0, 100.0, 5);
  EXPECT_EQ(h.censored, 3);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), 0), 0);
}

TEST(Histogram, BinsFiniteOutcomes) {
  VariantSweep v;
  for (long long e : {5LL, 15LL, 15LL, 95LL}) v.outcomes.push_back({0, e, 1, 0.0});
  v.outcomes.push_back({0, std::nullopt, std::nullopt, 0.0});
  Histogram h = exchange_histogram(v, 0.0, 100.0, 10);
  ASSERT_EQ(h.counts.size(), 10u);
  EXPECT_EQ(h.counts[0], 1);
  EXPECT_EQ(h.counts[1], 2);
  EXPECT_EQ(h.counts[9], 1);
  EXPECT_EQ(h.censored, 1);
  EXPECT_DOUBLE_EQ(v.median_exchanges(), 15.0);
}

TEST(Svg, LineChartIsDeterministicAndWellFormed) {
  Series s{"a", {0, 1, 2, 3}, {1, 1e-2, 1e-4, 0.0}};
  ChartOptions o;
  o.title = "t & <x>";
  const std::string a = line_chart_svg({s}, o), b = line_chart_svg({s}, o);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.rfind("<svg", 0), 0u);
  EXPECT_NE(a.find("</svg>"), std::string::npos);
  EXPECT_NE(a.find("&amp;"), std::string::npos);
  EXPECT_EQ(a.find("<x>"), std::string::npos);
}
