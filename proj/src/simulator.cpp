#include "pdqn/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdqn {

std::optional<int> ConvergenceTrace::iterations_to(double threshold) const {
  for (const auto& r : rows)
    if (r.error <= threshold) return r.iteration;
  return std::nullopt;
}

std::optional<long long> ConvergenceTrace::exchanges_to(double threshold) const {
  for (const auto& r : rows)
    if (r.error <= threshold) return r.exchanges;
  return std::nullopt;
}

double error_from_states(const std::vector<NodeState>& states, const Vector& x_star) {
  double num = 0.0;
  for (const auto& s : states) num += (s.x - x_star).squaredNorm();
  double den = x_star.squaredNorm();
  if (den == 0.0) den = 1.0;
  return num / static_cast<double>(states.size()) / den;
}

namespace {

TraceRow observe(const std::vector<NodeState>& states, const WeightMatrix& W, const Vector& x_star, int t,
                 long long exchanges) {
  TraceRow row;
  row.iteration = t;
  StackedVector x = gather_x(states);
  row.error = relative_error(x, x_star);
  row.consensus_residual = apply_laplacian(W, x).flat().norm();
  row.exchanges = exchanges;
  double step = 0.0;
  for (const auto& s : states) step = std::max(step, s.last_step);
  row.step_norm = step;
  return row;
}

}  // namespace

ConvergenceTrace run(const Problem& problem, const WeightMatrix& W, const AlgorithmConfig& cfg,
                     const ReferenceSolution& reference, const RunOptions& options) {
  if (options.iterations < 1) throw std::invalid_argument("run needs at least one iteration");
  if (options.diagnostics && static_cast<long long>(problem.nodes()) * problem.dim() > 200)
    throw std::invalid_argument("diagnostics are limited to n * p <= 200");
  Engine engine(problem, W, cfg, options.parallel, options.threads);
  std::vector<NodeState> states = options.start ? *options.start : initial_states(problem, W, cfg);

  ConvergenceTrace trace;
  trace.variant = variant_name(cfg.variant);
  trace.seed = options.seed;
  trace.config = config_to_json(cfg);
  trace.problem_digest = problem_digest(problem);
  trace.rows.push_back(observe(states, W, reference.x_star, 0, 0));
  const bool diag = options.diagnostics && cfg.variant == Variant::pdqn;

  for (int t = 1; t <= options.iterations; ++t) {
    if (options.stop_below && trace.rows.back().error <= *options.stop_below) break;
    try {
      engine.step(states);
    } catch (const NonFiniteState& e) {
      trace.aborted = true;
      trace.abort_reason = e.what();
      trace.snapshot = e.snapshot();
      break;
    }
    TraceRow row = observe(states, W, reference.x_star, t, engine.ledger().total_rounds());
    if (diag) row.diagnostics = compute_diagnostics(states, problem, W, engine.config(), reference.x_star, options.params);
    trace.rows.push_back(std::move(row));
  }
  trace.rounds_per_iteration = engine.ledger().rounds_per_iteration();
  for (const auto& s : states) {
    trace.audit.primal_accepted += s.audit.primal_accepted;
    trace.audit.primal_skipped += s.audit.primal_skipped;
    trace.audit.dual_accepted += s.audit.dual_accepted;
    trace.audit.dual_skipped += s.audit.dual_skipped;
    trace.audit.max_primal_secant = std::max(trace.audit.max_primal_secant, s.audit.max_primal_secant);
    trace.audit.max_dual_secant = std::max(trace.audit.max_dual_secant, s.audit.max_dual_secant);
  }
  return trace;
}

int VariantSweep::censored() const {
  return static_cast<int>(std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return !o.exchanges; }));
}

double VariantSweep::median_exchanges() const {
  std::vector<double> v;
  for (const auto& o : outcomes)
    v.push_back(o.exchanges ? static_cast<double>(*o.exchanges) : std::numeric_limits<double>::infinity());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

SeedSweepResult sweep_seeds(const SeedSweepSpec& spec, int n_trials) {
  if (n_trials < 1) throw std::invalid_argument("sweep needs at least one trial");
  if (spec.variants.empty()) throw std::invalid_argument("sweep needs at least one variant");
  SeedSweepResult out;
  out.spec = spec;
  for (const auto& c : spec.variants) out.variants.push_back({c, {}});
  const WeightMatrix W = metropolis_weights(build_d_regular_cycle(spec.n, spec.d));
  for (int k = 0; k < n_trials; ++k) {
    const std::uint64_t seed = spec.first_seed + static_cast<std::uint64_t>(k);
    const Problem problem = generate_quadratic(spec.n, spec.p, spec.eta, seed);
    const ReferenceSolution ref = centralized_solution(problem);
    for (auto& vs : out.variants) {
      SeedOutcome o;
      o.seed = seed;
      AlgorithmConfig cfg = vs.config;
      try {
        if (spec.tune_per_seed) cfg = tune_stepsize(cfg, problem, W, ref.x_star).config;
        o.tuned_value = tuned_value(cfg);
        RunOptions opt;
        opt.iterations = spec.budget;
        opt.stop_below = spec.threshold;
        opt.seed = seed;
        ConvergenceTrace tr = run(problem, W, cfg, ref, opt);
        o.exchanges = tr.exchanges_to(spec.threshold);
        o.iterations = tr.iterations_to(spec.threshold);
      } catch (const TuningFailed&) {
      }
      vs.outcomes.push_back(o);
    }
  }
  return out;
}

Histogram exchange_histogram(const VariantSweep& v, double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("histogram needs bins >= 1 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (const auto& o : v.outcomes) {
    if (!o.exchanges) {
      ++h.censored;
      continue;
    }
    double x = static_cast<double>(*o.exchanges);
    int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

}  // namespace pdqn
