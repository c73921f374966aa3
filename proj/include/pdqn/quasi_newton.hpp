#pragma once

#include <span>
#include <vector>

#include "pdqn/network.hpp"

namespace pdqn {

/// Relative curvature threshold: an update is taken only when
/// u^T r > kSkipTolerance * ||u|| ||r||.
inline constexpr double kSkipTolerance = 1e-12;

/// Result of a curvature update. When the pair was rejected `matrix` is the
/// input unchanged and `secant_residual` is 0.
struct CurvatureUpdate {
  Matrix matrix;
  bool accepted = false;
  /// ||C+ v - target|| / ||target|| for the secant target of this update.
  double secant_residual = 0.0;
};

/// B + r r^T / (u^T r) - B u u^T B / (u^T B u), or B when the curvature
/// condition fails. Non-finite input throws std::invalid_argument.
CurvatureUpdate bfgs_update_primal(const Matrix& B, const Vector& u, const Vector& r,
                                   double skip_tol = kSkipTolerance);

// Truncated Neumann series for (B + alpha (I - Z))^{-1}, via the splitting
// G = D - M with D_i = B_i + 2 alpha (1 - w_ii) I and
// M = alpha (I - 2 Z_diag + Z). The recursion
//   d0 = -D^{-1} g,  d(k+1) = D^{-1} (M d(k) - g)
// after K steps equals -sum_{k<=K} (D^{-1} M)^k D^{-1} g.

/// D_i for one node.
Matrix neumann_block(const Matrix& B_i, double alpha, double self_weight);

/// (M d)_i from the node's own block and sum_{j != i} w_ij d_j.
inline Vector neumann_coupling(double alpha, double self_weight, const Vector& own,
                               const Vector& neighbor_weighted_sum) {
  return alpha * ((1.0 - self_weight) * own + neighbor_weighted_sum);
}

/// Whole-network form of the recursion, built from the same node kernels.
/// K >= 0; B holds one positive definite p x p block per node.
StackedVector neumann_descent(const StackedVector& g, std::span<const Matrix> B, const WeightMatrix& W,
                              double alpha, int K);

/// Dense sum_{k=0}^{K} (D^{-1} M)^k D^{-1} (np x np), for diagnostics.
Matrix assemble_truncated_primal_inverse(std::span<const Matrix> B, const WeightMatrix& W, double alpha, int K);

struct EigenInterval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Eigenvalue interval of the truncated primal inverse given curvature
/// bounds psi <= B_i <= Psi and diagonal weights delta <= w_ii <= Delta.
EigenInterval primal_inverse_bounds(double psi, double Psi, double delta, double Delta, double alpha, int K);

/// [Gamma, Gamma + n / gamma].
EigenInterval dual_inverse_bounds(double Gamma, double gamma, int n);

/// Projects the spectrum of a symmetric matrix onto [lo, hi].
Matrix clip_eigenvalues(const Matrix& S, double lo, double hi);

/// Neighborhood variation pair. For the primal: (u, r); for the dual:
/// (v~, s~) built by dual_variations.
struct VariationPair {
  Vector variable;
  Vector gradient;
};

/// Diagonal of Upsilon_{n_i}: 1/m_j repeated p times for each j in n_i.
Vector neighborhood_normalization(std::span<const int> neighborhood_sizes, int p);

/// v~ = Upsilon (y_new - y_old), s~ = (h_new - h_old) - gamma v~.
VariationPair dual_variations(const Vector& y_new, const Vector& y_old, const Vector& h_new, const Vector& h_old,
                              double gamma, const Vector& upsilon);

/// C + s~ s~^T / (s~^T v~) - C v~ v~^T C / (v~^T C v~) + gamma I when
/// v~^T s~ > 0 (relative threshold kSkipTolerance), otherwise C. An accepted
/// update satisfies C+ v~ = s~ + gamma v~, the raw gradient variation.
CurvatureUpdate bfgs_update_dual(const Matrix& C, const VariationPair& pair, double gamma,
                                 double skip_tol = kSkipTolerance);

/// (C^{-1} + Gamma Upsilon) h over one neighborhood.
Vector dual_neighborhood_direction(const Matrix& C, const Vector& h_nbhd, double Gamma, const Vector& upsilon);

/// Dense H^{-1} = sum_i S_i^T C_i^{-1} S_i + Gamma I, S_i selecting n_i.
Matrix assemble_global_dual_inverse(std::span<const Matrix> C, double Gamma, const Topology& topology, int p);

/// Scatter-sum of all neighborhood directions: the distributed evaluation of
/// H^{-1} h.
StackedVector dual_direction(std::span<const Matrix> C, const StackedVector& h, double Gamma,
                             const Topology& topology);

/// Stacks blocks of x over neighborhood(i), in neighborhood order.
Vector gather_neighborhood(const StackedVector& x, const Topology& topology, int i);

}  // namespace pdqn
