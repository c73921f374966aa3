#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdqn/exchange.hpp"
#include "pdqn/problems.hpp"
#include "pdqn/quasi_newton.hpp"

namespace pdqn {

enum class Variant { pdqn, da, dgd, extra, esom };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
/// Variants that converge to the exact minimizer with a constant step.
bool is_exact(Variant v);

struct AlgorithmConfig {
  Variant variant = Variant::pdqn;
  double alpha = 1.0;        // augmented Lagrangian weight
  double eps_d = 1.0;        // dual step scale (DA: the dual stepsize)
  int K = 1;                 // series depth
  double gamma = 0.1;        // dual regularizers
  double Gamma = 0.1;
  double primal_step = 0.1;  // DGD / EXTRA
  /// B_i starts at initial_curvature * I.
  double initial_curvature = 1.0;
  /// Optional projection of each B_i onto [clip_lo, clip_hi].
  bool clip_curvature = false;
  double clip_lo = 1e-8;
  double clip_hi = 1e8;
  /// Curvature pairs whose variable variation is below this fraction of the
  /// iterate magnitude carry only rounding noise and are skipped.
  double variation_floor = 1e-9;

  /// Throws std::invalid_argument listing every violated field.
  void validate() const;
  /// All violations, empty when valid.
  std::vector<std::string> violations() const;
};

nlohmann::json config_to_json(const AlgorithmConfig& c);
/// Missing keys keep their defaults. Unknown keys are rejected.
AlgorithmConfig config_from_json(const nlohmann::json& j);

/// Exchange rounds per iteration for a variant.
int rounds_per_iteration(const AlgorithmConfig& c);

struct CurvatureAudit {
  long long primal_accepted = 0;
  long long primal_skipped = 0;
  long long dual_accepted = 0;
  long long dual_skipped = 0;
  double max_primal_secant = 0.0;
  double max_dual_secant = 0.0;
};

/// Everything node i stores. Neighborhood-stacked fields follow the order of
/// topology.neighborhood(i).
struct NodeState {
  Vector x, y;
  Matrix B;  // primal curvature (p x p)
  Matrix C;  // dual curvature (m_i p x m_i p)

  bool has_history = false;
  Vector x_prev, y_prev;
  Vector grad_prev;           // grad f_i at x_prev
  Vector mixed_prev;          // sum_j w_ij x_j at the previous step (EXTRA)
  Vector y_nbhd_prev, h_nbhd_prev;

  // Working values of the current iteration.
  Vector grad, g, d, x_next, y_next, h;
  Vector y_nbhd, h_nbhd, e_nbhd, mixed;
  Eigen::LLT<Matrix> D_factor;

  CurvatureAudit audit;
  /// max(||x_next - x||, ||y_next - y||) of the last committed step.
  double last_step = 0.0;
};

/// x = 0, y = 0, B = initial_curvature * I, C = (1 + gamma) I unless explicit
/// starts are given.
std::vector<NodeState> initial_states(const Problem& problem, const WeightMatrix& W, const AlgorithmConfig& cfg,
                                      const StackedVector* x0 = nullptr, const StackedVector* y0 = nullptr);

/// States at the saddle point: x_i = x*, y_i = -grad f_i(x*), with lagged
/// slots consistent with having been there for one step already.
std::vector<NodeState> saddle_states(const Problem& problem, const WeightMatrix& W, const AlgorithmConfig& cfg,
                                     const Vector& x_star);

StackedVector gather_x(const std::vector<NodeState>& s);
StackedVector gather_y(const std::vector<NodeState>& s);

/// Raised when an iterate stops being finite. Carries the node states.
class NonFiniteState : public std::runtime_error {
 public:
  NonFiniteState(int iteration, nlohmann::json snapshot)
      : std::runtime_error("non-finite iterate at iteration " + std::to_string(iteration)),
        iteration_(iteration),
        snapshot_(std::move(snapshot)) {}
  int iteration() const { return iteration_; }
  const nlohmann::json& snapshot() const { return snapshot_; }

 private:
  int iteration_;
  nlohmann::json snapshot_;
};

nlohmann::json states_to_json(const std::vector<NodeState>& s);

/// What node code is allowed to see about itself: its id, its row of W,
/// its neighborhood and the sizes m_j of its neighbors, and its own f_i.
class NodeView {
 public:
  NodeView(const Problem& problem, const WeightMatrix& W, int id);

  int id() const { return id_; }
  int dim() const { return problem_->dim(); }
  int nodes() const { return problem_->nodes(); }
  std::span<const int> neighborhood() const { return neighborhood_; }
  std::span<const double> weights() const { return weights_; }
  double self_weight() const { return self_weight_; }
  int self_index() const { return self_index_; }
  const Vector& upsilon() const { return upsilon_; }

  Vector gradient(const Vector& x) const { return local_gradient(*problem_, id_, x); }
  Matrix hessian(const Vector& x) const { return local_hessian(*problem_, id_, x); }
  Vector argmin(const Vector& y) const { return local_argmin_L0(*problem_, id_, y); }

 private:
  const Problem* problem_;
  int id_;
  std::vector<int> neighborhood_;
  std::vector<double> weights_;
  double self_weight_;
  int self_index_;
  Vector upsilon_;
};

/// Node-local logic of one method. emit/absorb see only the node's own state
/// and, in absorb, the mailbox of the round.
class NodeProgram {
 public:
  virtual ~NodeProgram() = default;
  virtual std::vector<Phase> schedule() const = 0;
  /// Local work before the first round.
  virtual void start(const NodeView&, NodeState&) const {}
  virtual Outbox emit(std::size_t phase, const NodeView& view, const NodeState& s) const = 0;
  virtual void absorb(std::size_t phase, const NodeView& view, NodeState& s, const Mailbox& box) const = 0;
  /// Local work after the last round; moves next values into place.
  virtual void finish(const NodeView& view, NodeState& s) const = 0;
};

std::unique_ptr<NodeProgram> make_program(const AlgorithmConfig& cfg);

/// Runs a method round by round over a shared problem and weight matrix.
class Engine {
 public:
  Engine(const Problem& problem, const WeightMatrix& W, AlgorithmConfig cfg, bool parallel = false,
         unsigned threads = 4);

  /// One iteration. Throws NonFiniteState if any iterate becomes non-finite.
  void step(std::vector<NodeState>& states);

  const AlgorithmConfig& config() const { return cfg_; }
  const ExchangeLedger& ledger() const { return ledger_; }
  const std::vector<Phase>& schedule() const { return schedule_; }
  int iterations_done() const { return iterations_; }

 private:
  const Problem* problem_;
  const WeightMatrix* W_;
  AlgorithmConfig cfg_;
  std::unique_ptr<NodeProgram> program_;
  std::vector<Phase> schedule_;
  std::vector<NodeView> views_;
  RoundExecutor executor_;
  ExchangeLedger ledger_;
  int iterations_ = 0;
};

/// One iteration of the named method over all nodes.
void iterate(std::vector<NodeState>& states, const Problem& problem, const WeightMatrix& W,
             const AlgorithmConfig& cfg, ExchangeLedger* ledger = nullptr);
void pdqn_iterate(std::vector<NodeState>& states, const Problem& problem, const WeightMatrix& W,
                  const AlgorithmConfig& cfg);
void da_iterate(std::vector<NodeState>& states, const Problem& problem, const WeightMatrix& W,
                const AlgorithmConfig& cfg);
void dgd_iterate(std::vector<NodeState>& states, const Problem& problem, const WeightMatrix& W,
                 const AlgorithmConfig& cfg);
void extra_iterate(std::vector<NodeState>& states, const Problem& problem, const WeightMatrix& W,
                   const AlgorithmConfig& cfg);
void esom_iterate(std::vector<NodeState>& states, const Problem& problem, const WeightMatrix& W,
                  const AlgorithmConfig& cfg);

/// The field tuned by default: the step size eps_d for the dual methods
/// (pdqn, esom, da), primal_step for dgd and extra. alpha is the penalty
/// weight and stays as configured unless tuned explicitly.
std::string tuned_field(Variant v);
/// Read or write a tunable field by name: alpha, eps_d or primal_step.
double field_value(const AlgorithmConfig& c, const std::string& field);
void set_field_value(AlgorithmConfig& c, const std::string& field, double value);
double tuned_value(const AlgorithmConfig& c);
void set_tuned_value(AlgorithmConfig& c, double value);

struct TuneCandidate {
  double value = 0.0;
  bool accepted = false;
  double final_error = 0.0;
  std::string reason;
};

struct TuneResult {
  AlgorithmConfig config;
  std::string field;
  double value = 0.0;
  std::vector<TuneCandidate> candidates;
};

/// Powers of two from 2^lo to 2^hi.
std::vector<double> power_of_two_grid(int lo = -6, int hi = 6);

class TuningFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Probes each grid value for `probe_iterations` and keeps the largest whose
/// error trace is finite and non-increasing over its final quartile, ending
/// below its starting error (a trace already at rounding level also counts).
/// Throws TuningFailed when no candidate qualifies. An empty field means
/// tuned_field(base.variant).
TuneResult tune_stepsize(const AlgorithmConfig& base, const Problem& problem, const WeightMatrix& W,
                         const Vector& x_star, const std::vector<double>& grid = power_of_two_grid(),
                         int probe_iterations = 200, const std::string& field = "");

/// error = (1/n) sum_i ||x_i - x*||^2 / ||x*||^2 (absolute when x* = 0).
double relative_error(const StackedVector& x, const Vector& x_star);

}  // namespace pdqn
