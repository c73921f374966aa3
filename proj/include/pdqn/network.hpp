#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace pdqn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Undirected communication graph with self-inclusive neighborhoods.
///
/// Neighborhoods are stored sorted by node id, so position k of
/// neighborhood(i) is a stable local index used by every neighborhood-stacked
/// vector (y_{n_i}, h_{n_i}, ...).
class Topology {
 public:
  Topology() = default;

  /// Builds from an edge list. Duplicate edges are merged; self loops and
  /// out-of-range ids are rejected. Connectivity is reported by connected()
  /// and enforced where the consensus conditions need it.
  static Topology from_edges(int n, std::vector<std::pair<int, int>> edges);

  int size() const { return n_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  std::span<const int> neighborhood(int i) const { return neighborhoods_[static_cast<std::size_t>(i)]; }
  int neighborhood_size(int i) const { return static_cast<int>(neighborhoods_[static_cast<std::size_t>(i)].size()); }
  int degree(int i) const { return neighborhood_size(i) - 1; }
  /// Position of j inside neighborhood(i), or -1 when j is not in n_i.
  int local_index(int i, int j) const;
  bool adjacent(int i, int j) const { return i != j && local_index(i, j) >= 0; }
  bool connected() const;

 private:
  int n_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> neighborhoods_;
};

/// Node i linked to i±1, ..., i±d/2 (mod n).
Topology build_d_regular_cycle(int n, int d);

/// Consensus weights W, stored densely (n is desk scale) together with the
/// topology they are supposed to respect. Construction does not validate;
/// call validate_weight_matrix for the consensus conditions.
class WeightMatrix {
 public:
  WeightMatrix() = default;
  WeightMatrix(Topology topology, Matrix weights);

  const Topology& topology() const { return topology_; }
  int size() const { return topology_.size(); }
  const Matrix& dense() const { return w_; }
  double operator()(int i, int j) const { return w_(i, j); }
  double self_weight(int i) const { return w_(i, i); }
  /// w_ij for j in neighborhood(i), in neighborhood order.
  std::span<const double> row(int i) const { return rows_[static_cast<std::size_t>(i)]; }

 private:
  Topology topology_;
  Matrix w_;
  std::vector<std::vector<double>> rows_;
};

/// Metropolis-Hastings rule: w_ij = 1 / (1 + max(deg_i, deg_j)).
WeightMatrix metropolis_weights(const Topology& t);

struct WeightDiagnostics {
  double delta = 0.0;  // min_i w_ii
  double Delta = 0.0;  // max_i w_ii
  double second_eigenvalue_modulus = 0.0;
};

/// Checks symmetry, row stochasticity, sparsity, the diagonal bounds and
/// null{I - W} = span{1}, with 1e-12 tolerance. Throws std::invalid_argument
/// naming the first violated condition.
WeightDiagnostics validate_weight_matrix(const WeightMatrix& w);

/// n blocks of dimension p, stored contiguously.
class StackedVector {
 public:
  StackedVector() = default;
  StackedVector(int n, int p) : n_(n), p_(p), data_(Vector::Zero(static_cast<Eigen::Index>(n) * p)) {}
  StackedVector(int n, int p, Vector data);

  int blocks() const { return n_; }
  int block_dim() const { return p_; }
  auto block(int i) { return data_.segment(static_cast<Eigen::Index>(i) * p_, p_); }
  auto block(int i) const { return data_.segment(static_cast<Eigen::Index>(i) * p_, p_); }
  const Vector& flat() const { return data_; }
  Vector& flat() { return data_; }

 private:
  int n_ = 0;
  int p_ = 0;
  Vector data_;
};

/// (Zx)_i = sum_{j in n_i} w_ij x_j.
StackedVector apply_weights(const WeightMatrix& w, const StackedVector& x);
/// ((I - Z)x)_i = x_i - sum_{j in n_i} w_ij x_j.
StackedVector apply_laplacian(const WeightMatrix& w, const StackedVector& x);

/// Smallest nonzero eigenvalue of I - W (dense eigendecomposition).
double smallest_nonzero_laplacian_eigenvalue(const WeightMatrix& w);

// JSON form: {"n": N, "edges": [[i, j], ...], "weights": [[i, j, w], ...]}.
// "weights" is optional; without it Metropolis weights are used. Each weight
// entry sets w_ij and w_ji; missing diagonal entries are completed to make
// rows sum to one. Set "symmetric": false to assign w_ij only.
nlohmann::json topology_to_json(const Topology& t);
Topology topology_from_json(const nlohmann::json& j);
nlohmann::json weights_to_json(const WeightMatrix& w);
WeightMatrix weights_from_json(const nlohmann::json& j);

}  // namespace pdqn
