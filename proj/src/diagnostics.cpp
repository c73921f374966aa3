#include "pdqn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdqn {

namespace {

Matrix kron_identity(const Matrix& a, int p) {
  Matrix out = Matrix::Zero(a.rows() * p, a.cols() * p);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) out.block(i * p, j * p, p, p).diagonal().setConstant(a(i, j));
  return out;
}

Vector stack(const std::vector<NodeState>& states, Vector NodeState::*field) {
  const int p = static_cast<int>(states.front().x.size());
  Vector out(static_cast<Eigen::Index>(states.size()) * p);
  for (std::size_t i = 0; i < states.size(); ++i) out.segment(static_cast<Eigen::Index>(i) * p, p) = states[i].*field;
  return out;
}

struct RootPseudoInverse {
  Matrix Q;
  Vector inv_root;  // 1/sqrt(lambda) on the range, 0 on the null space
  std::vector<Eigen::Index> null_cols;
};

RootPseudoInverse laplacian_root(const WeightMatrix& W) {
  const int n = W.size();
  Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix::Identity(n, n) - W.dense());
  RootPseudoInverse r;
  r.Q = es.eigenvectors();
  r.inv_root = Vector::Zero(n);
  for (int k = 0; k < n; ++k) {
    double lam = es.eigenvalues()[k];
    if (lam > 1e-10)
      r.inv_root[k] = 1.0 / std::sqrt(lam);
    else
      r.null_cols.push_back(k);
  }
  return r;
}

/// nu with y = (I - Z)^{1/2} nu, nu in the range; flags y off the range.
Vector recover_nu(const RootPseudoInverse& r, const Vector& y, int p, bool& defined) {
  const Eigen::Index n = r.Q.rows();
  Eigen::Map<const Matrix> Y(y.data(), p, n);  // column i is block i
  Matrix coeff = Y * r.Q;                        // p x n, coordinates in the eigenbasis
  double off = 0.0;
  for (auto k : r.null_cols) off += coeff.col(k).squaredNorm();
  if (std::sqrt(off) > 1e-8 * std::max(1.0, y.norm())) defined = false;
  Matrix scaled = coeff * r.inv_root.asDiagonal();
  Matrix nu = scaled * r.Q.transpose();
  return Eigen::Map<Vector>(nu.data(), nu.size());
}

std::pair<double, double> spectrum(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

}  // namespace

Matrix dense_primal_inverse(const std::vector<NodeState>& states, const WeightMatrix& W, const AlgorithmConfig& cfg) {
  std::vector<Matrix> B;
  for (const auto& s : states) B.push_back(s.B);
  return assemble_truncated_primal_inverse(B, W, cfg.alpha, cfg.K);
}

Matrix dense_dual_inverse(const std::vector<NodeState>& states, const WeightMatrix& W, const AlgorithmConfig& cfg) {
  std::vector<Matrix> C;
  for (const auto& s : states) C.push_back(s.C);
  return assemble_global_dual_inverse(C, cfg.Gamma, W.topology(), static_cast<int>(states.front().x.size()));
}

double contraction_factor(double alpha, double delta, double delta_hat, double Lambda, double Gamma, double gamma,
                          int n, double mu, double L, const DiagnosticParams& prm) {
  const double beta = prm.beta, phi = prm.phi, zeta = prm.zeta;
  const double Sigma = 1.0 / Lambda - 2.0 * alpha * (1.0 - delta);
  const double P = Gamma + n / gamma;
  const double a = (beta * beta / (P * (beta - 1.0) * delta_hat) -
                    2.0 * beta * phi * Gamma * Gamma / (P * (phi - 1.0) * delta_hat));
  const double k1 = (alpha * Sigma - 2.0 * alpha * zeta * L * L / Sigma) / a;
  const double k2 = 2.0 * alpha * delta_hat / (phi * beta * (mu + L));
  const double b = Sigma - 2.0 * beta * phi * alpha / (P * (phi - 1.0) * delta_hat);
  const double k3 = (2.0 * mu * L / (mu + L) - 1.0 / zeta - 4.0 * alpha * alpha * P * zeta * (1.0 - delta)) / b;
  return std::min({k1, k2, k3});
}

DiagnosticRecord compute_diagnostics(const std::vector<NodeState>& states, const Problem& problem,
                                     const WeightMatrix& W, const AlgorithmConfig& cfg, const Vector& x_star,
                                     const DiagnosticParams& params) {
  const int n = problem.nodes();
  const int p = problem.dim();
  DiagnosticRecord rec;

  double psi = std::numeric_limits<double>::infinity(), Psi = 0.0;
  for (const auto& s : states) {
    auto [lo, hi] = spectrum(s.B);
    psi = std::min(psi, lo);
    Psi = std::max(Psi, hi);
  }
  rec.psi = psi;
  rec.Psi = Psi;
  const Vector diag = W.dense().diagonal();
  const double delta = diag.minCoeff(), Delta = diag.maxCoeff();

  const Matrix g_inv = dense_primal_inverse(states, W, cfg);
  std::tie(rec.g_inv_min, rec.g_inv_max) = spectrum(g_inv);
  EigenInterval l1 = primal_inverse_bounds(psi, Psi, delta, Delta, cfg.alpha, cfg.K);
  rec.primal_bound_lower = l1.lower;
  rec.primal_bound_upper = l1.upper;

  const Matrix h_inv = dense_dual_inverse(states, W, cfg);
  std::tie(rec.h_inv_min, rec.h_inv_max) = spectrum(h_inv);
  EigenInterval l2 = dual_inverse_bounds(cfg.Gamma, cfg.gamma, n);
  rec.dual_bound_lower = l2.lower;
  rec.dual_bound_upper = l2.upper;

  const Matrix lap = kron_identity(Matrix::Identity(n, n) - W.dense(), p);
  const Vector x_next = stack(states, &NodeState::x);
  const Vector x_cur = stack(states, &NodeState::x_prev);
  const Vector y_next = stack(states, &NodeState::y);
  const Vector y_cur = stack(states, &NodeState::y_prev);
  Vector xs(static_cast<Eigen::Index>(n) * p), grad_next(xs.size()), grad_cur(xs.size()), ys(xs.size());
  for (int i = 0; i < n; ++i) {
    xs.segment(i * p, p) = x_star;
    ys.segment(i * p, p) = -local_gradient(problem, i, x_star);
    grad_next.segment(i * p, p) = local_gradient(problem, i, x_next.segment(i * p, p));
    grad_cur.segment(i * p, p) = local_gradient(problem, i, x_cur.segment(i * p, p));
  }

  const Matrix G = g_inv.inverse();
  const Matrix R = G - cfg.alpha * lap;
  const Vector sigma = grad_cur - grad_next - cfg.alpha * h_inv * (lap * (x_next - xs)) + R * (x_next - x_cur);
  rec.sigma_norm = sigma.norm();

  const RootPseudoInverse root = laplacian_root(W);
  bool defined = true;
  const Vector nu_star = recover_nu(root, ys, p, defined);
  const Vector nu_cur = recover_nu(root, y_cur, p, defined);
  const Vector nu_next = recover_nu(root, y_next, p, defined);
  rec.nu_defined = defined;
  const Matrix H = h_inv.inverse();
  auto lyap = [&](const Vector& x, const Vector& nu) {
    Vector dx = x - xs;
    Vector dn = nu - nu_star;
    return cfg.alpha * dx.dot(R * dx) + dn.dot(H * dn);
  };
  rec.lyapunov_before = lyap(x_cur, nu_cur);
  rec.lyapunov_after = lyap(x_next, nu_next);

  const ConvexityBounds cb = convexity_bounds(problem);
  const double delta_hat = smallest_nonzero_laplacian_eigenvalue(W);
  rec.kappa = contraction_factor(cfg.alpha, delta, delta_hat, l1.upper, cfg.Gamma, cfg.gamma, n, cb.mu, cb.L, params);
  return rec;
}

}  // namespace pdqn
