#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdqn/algorithms.hpp"
#include "pdqn/diagnostics.hpp"

namespace pdqn {

struct TraceRow {
  int iteration = 0;
  double error = 0.0;
  double consensus_residual = 0.0;  // ||(I - Z) x||
  long long exchanges = 0;          // cumulative rounds per node
  double step_norm = 0.0;           // max_i of the last committed step
  std::optional<DiagnosticRecord> diagnostics;
};

struct ConvergenceTrace {
  std::string variant;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::string problem_digest;
  std::vector<TraceRow> rows;

  bool aborted = false;
  std::string abort_reason;
  nlohmann::json snapshot;  // node states at abort

  CurvatureAudit audit;  // summed over nodes
  std::vector<int> rounds_per_iteration;

  /// First iteration with error <= threshold.
  std::optional<int> iterations_to(double threshold) const;
  std::optional<long long> exchanges_to(double threshold) const;
  double final_error() const { return rows.empty() ? 0.0 : rows.back().error; }
};

struct RunOptions {
  int iterations = 100;
  bool parallel = false;
  unsigned threads = 4;
  bool diagnostics = false;
  DiagnosticParams params;
  /// Stop once the error reaches this value.
  std::optional<double> stop_below;
  /// Overrides the default zero start.
  std::optional<std::vector<NodeState>> start;
  std::uint64_t seed = 0;  // metadata only
};

/// Executes the method and records one row per iteration t = 0..T. A
/// non-finite iterate ends the run with aborted = true and a snapshot.
ConvergenceTrace run(const Problem& problem, const WeightMatrix& W, const AlgorithmConfig& cfg,
                     const ReferenceSolution& reference, const RunOptions& options);

/// Independent re-evaluation of the error metric from node states.
double error_from_states(const std::vector<NodeState>& states, const Vector& x_star);

struct SeedSweepSpec {
  int n = 20;
  int p = 5;
  int d = 4;
  int eta = 0;
  std::uint64_t first_seed = 1;
  double threshold = 1e-5;
  int budget = 2000;  // iterations per trial
  std::vector<AlgorithmConfig> variants;
  /// Re-tune each variant on every seed instead of using the given steps.
  bool tune_per_seed = false;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<long long> exchanges;  // empty when censored
  std::optional<int> iterations;
  double tuned_value = 0.0;
};

struct VariantSweep {
  AlgorithmConfig config;
  std::vector<SeedOutcome> outcomes;
  int censored() const;
  /// Median over crossing trials; censored trials count as +infinity.
  double median_exchanges() const;
};

struct SeedSweepResult {
  SeedSweepSpec spec;
  std::vector<VariantSweep> variants;
};

SeedSweepResult sweep_seeds(const SeedSweepSpec& spec, int n_trials);

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<int> counts;
  int censored = 0;
};

/// Equal-width bins over [lo, hi] of the crossing exchange counts.
Histogram exchange_histogram(const VariantSweep& v, double lo, double hi, int bins);

}  // namespace pdqn
