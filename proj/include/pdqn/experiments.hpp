#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdqn/simulator.hpp"

namespace pdqn {

// Experiment configuration (JSON). Every key is optional except
// "algorithms"; unknown keys are errors.
//
// {
//   "problem":   {"family": "quadratic", "n": 20, "p": 5, "eta": 0, "seed": 1}
//             |  {"family": "logistic", "n": 20, "p": 4, "q": 100, "mean": 3,
//                 "std_pos": 1, "std_neg": 1, "reg_weight": 1e-4, "seed": 1},
//   "topology":  {"d": 4} | {"file": "w.json"} | {"n": .., "edges": .., "weights": ..},
//   "algorithms": [{"variant": "pdqn", "K": 2, "alpha": 2, "tune": true,
//                   "grid": [..] | {"lo": -6, "hi": 6}, "label": "pdqn"}, ...],
//   "iterations": 300,
//   "thresholds": [1e-5, 1e-8],
//   "diagnostics": false,
//   "diagnostic_params": {"beta": 2, "phi": 2, "zeta": 1},
//   "parallel": false, "threads": 4,
//   "probe_iterations": 200,
//   "output": "out",
//   "sweep": {"axis": "eta" | "K" | "alpha", "values": [..]}
//          | {"axis": "seeds", "count": 100, "first_seed": 1, "bins": 20,
//             "tune_per_seed": false}
// }
//
// "tune": true tunes the variant's default field (tuned_field), a string
// names the field, false or absent keeps the configured values.

struct ProblemSpec {
  std::string family = "quadratic";
  int n = 20;
  int p = 5;
  int eta = 0;
  int q = 100;
  double mean = 3.0;
  double std_pos = 1.0;
  double std_neg = 1.0;
  double reg_weight = 1e-4;
  std::uint64_t seed = 1;
};

struct TopologySpec {
  int d = 4;
  std::string file;
  nlohmann::json explicit_graph;  // inline {"n", "edges", "weights"} form
};

struct AlgorithmSpec {
  AlgorithmConfig config;
  std::string label;
  std::string tune_field;  // empty: no tuning
  std::vector<double> grid = power_of_two_grid();
};

struct SweepSpec {
  std::string axis;
  std::vector<double> values;
  int count = 0;
  std::uint64_t first_seed = 1;
  int bins = 20;
  bool tune_per_seed = false;
};

struct ExperimentConfig {
  ProblemSpec problem;
  TopologySpec topology;
  std::vector<AlgorithmSpec> algorithms;
  int iterations = 300;
  std::vector<double> thresholds{1e-5, 1e-8};
  bool diagnostics = false;
  DiagnosticParams diagnostic_params;
  bool parallel = false;
  unsigned threads = 4;
  int probe_iterations = 200;
  std::string output = "out";
  std::optional<SweepSpec> sweep;
  /// Directory that relative file references are resolved against.
  std::string base_dir;
};

/// Raised with every problem found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json experiment_config_to_json(const ExperimentConfig& c);

struct Setup {
  Problem problem;
  WeightMatrix W;
  ReferenceSolution reference;
};

/// Builds problem, weights and reference; checks the weight matrix and the
/// cross-field constraints. Throws ConfigError listing all failures.
Setup build_setup(const ExperimentConfig& c);

struct SummaryRow {
  std::string label;
  std::string variant;
  std::vector<double> thresholds;
  std::vector<std::optional<int>> iterations;
  std::vector<std::optional<long long>> exchanges;
  double final_error = 0.0;
  std::string tuned_field;
  double tuned_value = 0.0;
  bool aborted = false;
  std::string status = "ok";
  std::string cell;  // sweep cell, empty for plain runs
};

struct RunOutcome {
  std::vector<std::string> labels;
  std::vector<ConvergenceTrace> traces;  // aligned with labels; empty rows if refused
  std::vector<SummaryRow> summary;
  std::vector<std::string> files;
};

/// Tunes (if requested) and runs one algorithm entry.
std::pair<std::optional<ConvergenceTrace>, SummaryRow> run_algorithm(const ExperimentConfig& c, const Setup& setup,
                                                                     const AlgorithmSpec& a);

/// One trace CSV per algorithm plus summary.csv, under out_dir.
RunOutcome cmd_run(const ExperimentConfig& c, const std::string& out_dir);

/// cmd_run plus compare.csv and error-vs-iteration / error-vs-exchange SVGs.
/// Needs at least two algorithms.
RunOutcome cmd_compare(const ExperimentConfig& c, const std::string& out_dir);

std::string summary_csv(const std::vector<SummaryRow>& rows);
/// With a non-empty axis the first column holds each row's cell value.
std::string summary_csv(const std::vector<SummaryRow>& rows, const std::string& axis);
/// Long-format series: label, iteration, exchanges, error.
std::string compare_csv(const std::vector<std::string>& labels, const std::vector<ConvergenceTrace>& traces);
/// Renders a comparison chart from compare_csv text alone.
std::string compare_svg_from_csv(const std::string& csv, bool by_exchanges);

struct InvariantResult {
  std::string name;
  bool passed = false;
  bool informational = false;  // reported, never fails the suite
  double margin = 0.0;         // >= 0 when satisfied
  int iteration = -1;          // first violating iteration, if any
  std::string detail;
};

struct ValidationReport {
  std::vector<InvariantResult> results;
  bool passed() const;
  std::string text() const;
};

/// The invariant suite on the configured setup.
ValidationReport cmd_validate(const ExperimentConfig& c);

// Dense oracles over random curvature; each returns the worst relative error.
/// neumann_descent with K = 40, alpha = 0.5, B_i eigenvalues in [1, 3],
/// against -(B + alpha (I - Z))^{-1} g.
double oracle_neumann_exact(const WeightMatrix& W, int p, int trials, std::uint64_t seed);
/// dual_direction against the assembled global matrix.
double oracle_dual_direction(const WeightMatrix& W, int p, double gamma, double Gamma, int trials, std::uint64_t seed);
/// apply_laplacian against a dense (I - W) kron I_p.
double oracle_laplacian(const WeightMatrix& W, int p, int trials, std::uint64_t seed);
/// Largest node step of one iteration started at the saddle point.
double fixed_point_step(const Setup& setup, const AlgorithmConfig& cfg);

struct RateFit {
  bool fitted = false;
  double rate = 0.0;  // per-iteration contraction exp(slope)
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int first = -1;  // window, inclusive iteration indices
  int last = -1;
  std::string reason;
};

/// Least-squares fit of ln(error_t) against t from the first entry below
/// `upper` to the first below `lower`.
RateFit fit_linear_rate(const std::vector<double>& errors, double upper = 1e-1, double lower = 1e-8);
RateFit fit_linear_rate(const ConvergenceTrace& trace, double upper = 1e-1, double lower = 1e-8);
RateFit cmd_rate_fit(const std::string& trace_path);

struct SweepOutcome {
  std::vector<SummaryRow> rows;
  std::optional<SeedSweepResult> seeds;
  std::vector<std::string> files;
};

/// Renders iterations (or exchanges) to the first threshold against the axis
/// value from sweep CSV text alone.
std::string sweep_svg_from_csv(const std::string& csv, bool by_exchanges);
/// label, seed, iterations, exchanges, tuned_value; labels align with variants.
std::string seeds_csv(const SeedSweepResult& r, const std::vector<std::string>& labels);
std::string seeds_histogram_svg_from_csv(const std::string& csv, int bins);

/// Runs the configured sweep. Cell failures are recorded and the sweep
/// continues.
SweepOutcome cmd_sweep(const ExperimentConfig& c, const std::string& out_dir);

}  // namespace pdqn
