#pragma once

#include <vector>

#include "pdqn/algorithms.hpp"

namespace pdqn {

/// Free constants of the contraction factor: beta > 1, phi > 1, zeta > 0.
struct DiagnosticParams {
  double beta = 2.0;
  double phi = 2.0;
  double zeta = 1.0;
};

/// Dense quantities after one PD-QN iteration t -> t+1 (desk scale only).
struct DiagnosticRecord {
  // primal curvature spectrum and the truncated inverse G^{-1}_{t,K}
  double psi = 0.0, Psi = 0.0;
  double g_inv_min = 0.0, g_inv_max = 0.0;
  double primal_bound_lower = 0.0, primal_bound_upper = 0.0;
  // dual inverse H^{-1}_t
  double h_inv_min = 0.0, h_inv_max = 0.0;
  double dual_bound_lower = 0.0, dual_bound_upper = 0.0;

  double sigma_norm = 0.0;
  double lyapunov_before = 0.0;  // ||z_t - z*||^2_{J_t}
  double lyapunov_after = 0.0;   // ||z_{t+1} - z*||^2_{J_t}
  double kappa = 0.0;
  bool nu_defined = true;  // y_t, y_{t+1} in range(I - Z)

  /// Slack-adjusted bound checks.
  bool primal_bounds_hold(double slack) const {
    return g_inv_min >= primal_bound_lower - slack && g_inv_max <= primal_bound_upper + slack;
  }
  bool dual_bounds_hold(double slack) const {
    return h_inv_min >= dual_bound_lower - slack && h_inv_max <= dual_bound_upper + slack;
  }
};

/// Dense G^{-1}_{t,K} from the curvature blocks held in the states.
Matrix dense_primal_inverse(const std::vector<NodeState>& states, const WeightMatrix& W, const AlgorithmConfig& cfg);
/// Dense H^{-1}_t from the dual curvature blocks held in the states.
Matrix dense_dual_inverse(const std::vector<NodeState>& states, const WeightMatrix& W, const AlgorithmConfig& cfg);

/// Evaluated on states just after a PD-QN step: x_prev/y_prev hold
/// (x_t, y_t), x/y hold (x_{t+1}, y_{t+1}), B and C hold the curvature used
/// by that step.
DiagnosticRecord compute_diagnostics(const std::vector<NodeState>& states, const Problem& problem,
                                     const WeightMatrix& W, const AlgorithmConfig& cfg, const Vector& x_star,
                                     const DiagnosticParams& params = {});

/// Contraction factor for given constants (may be negative: the bound is
/// only sufficient).
double contraction_factor(double alpha, double delta, double delta_hat, double Lambda, double Gamma, double gamma,
                          int n, double mu, double L, const DiagnosticParams& params);

}  // namespace pdqn
