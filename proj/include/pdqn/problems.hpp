#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "pdqn/network.hpp"

namespace pdqn {

/// f_i(x) = 1/2 x^T diag(a_i) x + b_i^T x.
struct QuadraticProblem {
  std::vector<Vector> diagonals;  // a_i, strictly positive
  std::vector<Vector> offsets;    // b_i
};

/// f_i(x) = reg_weight / (2n) ||x||^2 + sum_l log(1 + exp(-v_il u_il^T x)).
/// The regularizer is split evenly so that sum_i f_i is the aggregate
/// objective at consensus and each f_i is strongly convex.
struct LogisticProblem {
  std::vector<Matrix> features;  // q_i x p, one sample per row
  std::vector<Vector> labels;    // q_i entries in {-1, +1}
  double reg_weight = 0.0;
};

/// A consensus objective sum_i f_i, one component per node.
class Problem {
 public:
  Problem(QuadraticProblem q);
  Problem(LogisticProblem l);

  int nodes() const { return nodes_; }
  int dim() const { return dim_; }
  bool is_quadratic() const { return std::holds_alternative<QuadraticProblem>(data_); }
  const QuadraticProblem& quadratic() const { return std::get<QuadraticProblem>(data_); }
  const LogisticProblem& logistic() const { return std::get<LogisticProblem>(data_); }
  std::string family() const { return is_quadratic() ? "quadratic" : "logistic"; }

 private:
  std::variant<QuadraticProblem, LogisticProblem> data_;
  int nodes_ = 0;
  int dim_ = 0;
};

/// Diagonals: ceil(p/2) entries from {1, 10, ..., 10^eta}, floor(p/2) from
/// {1, 0.1, ..., 10^-eta}; offsets uniform on [0, 1]^p.
Problem generate_quadratic(int n, int p, int eta, std::uint64_t seed);

/// Balanced labels per node; +1 samples ~ N(mean * 1, std_pos^2 I), -1
/// samples ~ N(-mean * 1, std_neg^2 I).
Problem generate_logistic(int n, int p, int q, double mean, double std_pos, double std_neg, double reg_weight,
                          std::uint64_t seed);

double local_value(const Problem& problem, int i, const Vector& x);
Vector local_gradient(const Problem& problem, int i, const Vector& x);
Matrix local_hessian(const Problem& problem, int i, const Vector& x);

/// Sum over nodes evaluated at a common point.
double aggregate_value(const Problem& problem, const Vector& x);
Vector aggregate_gradient(const Problem& problem, const Vector& x);

struct ReferenceSolution {
  enum class Method { closed_form, newton_oracle };
  Vector x_star;
  double f_star = 0.0;
  Method method = Method::closed_form;
  double residual_norm = 0.0;  // ||sum_i grad f_i(x_star)||
};

/// Quadratic: solves (sum A_i) x = -sum b_i. Logistic: damped Newton on the
/// aggregate until ||grad|| <= 1e-12 max(1, ||x||). Throws std::runtime_error
/// if the certificate cannot be reached.
ReferenceSolution centralized_solution(const Problem& problem);

/// argmin_x f_i(x) + y^T x. Quadratic only.
Vector local_argmin_L0(const Problem& problem, int i, const Vector& y);

struct ConvexityBounds {
  double mu = 0.0;
  double L = 0.0;
};

ConvexityBounds convexity_bounds(const Problem& problem);

nlohmann::json problem_to_json(const Problem& problem);
Problem problem_from_json(const nlohmann::json& j);
/// Stable 64-bit digest of the serialized problem (FNV-1a), hex encoded.
std::string problem_digest(const Problem& problem);

}  // namespace pdqn
